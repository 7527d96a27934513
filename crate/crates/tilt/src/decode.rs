//! Head selection from arc scores. `scores[i][h]` rates head `h` for word
//! `i + 1`: column 0 is the root and column `j` is word `j`.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoder {
    /// Independent argmax per word; may produce cycles or several roots.
    #[default]
    Greedy,
    /// Maximum spanning arborescence with exactly one word attached to the
    /// root.
    Mst,
}

pub fn decode(scores: &[Vec<f64>], decoder: Decoder) -> Vec<usize> {
    match decoder {
        Decoder::Greedy => greedy(scores),
        Decoder::Mst => mst_single_root(scores),
    }
}

/// Best non-self head per word.
pub fn greedy(scores: &[Vec<f64>]) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .map(|(i, row)| {
            (0..row.len())
                .filter(|&h| h != i + 1)
                .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                .expect("at least the root column")
        })
        .collect()
}

/// Sum of the scores of a head assignment.
pub fn tree_score(scores: &[Vec<f64>], heads: &[usize]) -> f64 {
    heads.iter().enumerate().map(|(i, &h)| scores[i][h]).sum()
}

/// Chu-Liu-Edmonds over nodes `0..=n` (0 is the root), returning the head
/// of every word. Any number of words may attach to the root.
pub fn chu_liu_edmonds(scores: &[Vec<f64>]) -> Vec<usize> {
    let n = scores.len() + 1;
    // w[h][d]: weight of arc h → d
    let mut w = vec![vec![f64::NEG_INFINITY; n]; n];
    for (i, row) in scores.iter().enumerate() {
        for (h, &s) in row.iter().enumerate() {
            if h != i + 1 {
                w[h][i + 1] = s;
            }
        }
    }
    let nodes: Vec<usize> = (0..n).collect();
    let heads = cle(&w, &nodes);
    (1..n).map(|d| heads[d]).collect()
}

/// Recursive contraction. `w` is indexed by original node ids restricted to
/// `nodes` (nodes[0] is the root). Returns `head[node]` for every node id.
fn cle(w: &[Vec<f64>], nodes: &[usize]) -> Vec<usize> {
    let size = w.len();
    let root = nodes[0];
    let mut head = vec![usize::MAX; size];
    for &d in &nodes[1..] {
        head[d] = nodes
            .iter()
            .copied()
            .filter(|&h| h != d)
            .max_by(|&a, &b| w[a][d].total_cmp(&w[b][d]).then(b.cmp(&a)))
            .expect("another node");
    }
    let Some(cycle) = find_cycle(&head, nodes, root) else {
        return head;
    };
    // contract the cycle into a fresh node id `c`
    let c = size;
    let in_cycle = |x: usize| cycle.contains(&x);
    let cycle_score: f64 = cycle.iter().map(|&d| w[head[d]][d]).sum();
    let mut w2 = vec![vec![f64::NEG_INFINITY; size + 1]; size + 1];
    let mut enter = vec![usize::MAX; size + 1]; // for arcs u → c: cycle node entered
    let mut leave = vec![usize::MAX; size + 1]; // for arcs c → v: cycle node left from
    let rest: Vec<usize> = nodes.iter().copied().filter(|&x| !in_cycle(x)).collect();
    for &u in &rest {
        for &v in &rest {
            w2[u][v] = w[u][v];
        }
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for &d in &cycle {
            let s = w[u][d] - w[head[d]][d] + cycle_score;
            if s > best.0 {
                best = (s, d);
            }
        }
        w2[u][c] = best.0;
        enter[u] = best.1;
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for &h in &cycle {
            if w[h][u] > best.0 {
                best = (w[h][u], h);
            }
        }
        w2[c][u] = best.0;
        leave[u] = best.1;
    }
    let mut sub_nodes = rest.clone();
    sub_nodes.push(c);
    let sub = cle(&w2, &sub_nodes);
    let mut out = head.clone();
    for &v in &rest {
        if v == root {
            continue;
        }
        out[v] = if sub[v] == c { leave[v] } else { sub[v] };
    }
    let u = sub[c];
    let broken = enter[u];
    for &d in &cycle {
        out[d] = if d == broken { u } else { head[d] };
    }
    out
}

fn find_cycle(head: &[usize], nodes: &[usize], root: usize) -> Option<Vec<usize>> {
    let mut state = vec![0u8; head.len()]; // 0 unseen, 1 on path, 2 done
    state[root] = 2;
    for &start in nodes {
        let mut path = Vec::new();
        let mut x = start;
        while state[x] == 0 {
            state[x] = 1;
            path.push(x);
            x = head[x];
        }
        if state[x] == 1 {
            let pos = path.iter().position(|&p| p == x).expect("on path");
            return Some(path[pos..].to_vec());
        }
        for p in path {
            state[p] = 2;
        }
    }
    None
}

/// Spanning arborescence with a single root child: the best unconstrained
/// tree when it already has one, otherwise the best over each forced root
/// child.
pub fn mst_single_root(scores: &[Vec<f64>]) -> Vec<usize> {
    let heads = chu_liu_edmonds(scores);
    if heads.iter().filter(|&&h| h == 0).count() <= 1 {
        return heads;
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for r in 0..scores.len() {
        let mut forced = scores.to_vec();
        for (i, row) in forced.iter_mut().enumerate() {
            if i != r {
                row[0] = f64::NEG_INFINITY;
            }
        }
        let h = chu_liu_edmonds(&forced);
        let s = tree_score(scores, &h);
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, h));
        }
    }
    best.expect("at least one word").1
}

/// Whether `heads` forms a tree rooted at 0 (every word reaches the root).
pub fn is_tree(heads: &[usize]) -> bool {
    let n = heads.len();
    (1..=n).all(|start| {
        let mut x = start;
        for _ in 0..=n {
            if x == 0 {
                return true;
            }
            x = heads[x - 1];
        }
        false
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(scores: &[Vec<f64>], single_root: bool) -> f64 {
        let n = scores.len();
        let mut best = f64::NEG_INFINITY;
        let mut heads = vec![0; n];
        fn rec(i: usize, n: usize, heads: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
            if i == n {
                f(heads);
                return;
            }
            for h in 0..=n {
                if h != i + 1 {
                    heads[i] = h;
                    rec(i + 1, n, heads, f);
                }
            }
        }
        rec(0, n, &mut heads, &mut |h| {
            let roots = h.iter().filter(|&&x| x == 0).count();
            if is_tree(h) && (!single_root || roots == 1) {
                best = best.max(tree_score(scores, h));
            }
        });
        best
    }

    #[test]
    fn unique_maxima_are_returned() {
        let s = vec![vec![0.0, 0.0, 5.0], vec![3.0, 1.0, 0.0]];
        assert_eq!(greedy(&s), vec![2, 0]);
    }

    #[test]
    fn single_word_attaches_to_root() {
        assert_eq!(greedy(&[vec![-3.0, 9.0]]), vec![0]);
        assert_eq!(mst_single_root(&[vec![-3.0, 9.0]]), vec![0]);
    }

    #[test]
    fn greedy_cycle_resolved_to_best_tree() {
        // words 1 and 2 prefer each other; 3 prefers 2
        let s = vec![
            vec![1.0, -9.0, 10.0, 0.0],
            vec![2.0, 10.0, -9.0, 0.0],
            vec![0.0, 1.0, 8.0, -9.0],
        ];
        let g = greedy(&s);
        assert_eq!(g, vec![2, 1, 2]);
        assert!(!is_tree(&g));
        let t = mst_single_root(&s);
        assert!(is_tree(&t));
        assert!((tree_score(&s, &t) - brute_force(&s, true)).abs() < 1e-12);
    }

    #[test]
    fn random_three_word_matrices_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let s: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
            let free = chu_liu_edmonds(&s);
            assert!(is_tree(&free));
            assert!((tree_score(&s, &free) - brute_force(&s, false)).abs() < 1e-9);
            let single = mst_single_root(&s);
            assert!(is_tree(&single));
            assert_eq!(single.iter().filter(|&&h| h == 0).count(), 1);
            assert!((tree_score(&s, &single) - brute_force(&s, true)).abs() < 1e-9);
        }
    }

    #[test]
    fn larger_random_matrices_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 4..=6 {
            for _ in 0..30 {
                let s: Vec<Vec<f64>> = (0..n).map(|_| (0..=n).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
                let single = mst_single_root(&s);
                assert!((tree_score(&s, &single) - brute_force(&s, true)).abs() < 1e-9);
            }
        }
    }
}

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tiltlab_core::corpstats::{
    count_crossings, extract_arcs, fit_zipf_exponent, welch_t_test, Arc, RankFrequencyTable,
    SurfaceToken,
};
use tiltlab_core::corpusio::build_vocab;
use tiltlab_core::langgen::{
    arrange_flat, arrange_nesting, discourse_table, recover_roles, render_pairs, word_vectors,
    PairRendering, Rendering, Vocabulary,
};

fn pair_ids() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..50, 1..30)
}

proptest! {
    #[test]
    fn nesting_never_crosses(pairs in pair_ids(), seed in any::<u64>(), threshold in 0.0f64..=1.0) {
        let vocab = Vocabulary::new(100, Rendering::PairBracketed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let roles = arrange_nesting(&pairs, threshold, &mut rng);
        let ids = render_pairs(&roles, PairRendering::Dependency, &vocab);
        let arcs = extract_arcs(&SurfaceToken::from_ids(&ids, &vocab)).unwrap();
        prop_assert_eq!(arcs.len(), pairs.len());
        prop_assert_eq!(count_crossings(&arcs), 0);
    }

    #[test]
    fn generator_output_always_matches(pairs in pair_ids(), seed in any::<u64>()) {
        let vocab = Vocabulary::new(100, Rendering::PairBracketed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let roles = arrange_flat(&pairs, &mut rng);
        let ids = render_pairs(&roles, PairRendering::Dependency, &vocab);
        let arcs = extract_arcs(&SurfaceToken::from_ids(&ids, &vocab)).unwrap();
        prop_assert_eq!(arcs.len(), pairs.len());
        prop_assert_eq!(recover_roles(&ids, &vocab).unwrap(), roles.clone());

        let plain = Vocabulary::new(100, Rendering::PlainInteger).unwrap();
        let ids = render_pairs(&roles, PairRendering::Parenthesis, &plain);
        prop_assert!(extract_arcs(&SurfaceToken::from_ids(&ids, &plain)).is_ok());
    }

    #[test]
    fn crossings_invariant_under_relabeling(n in 1usize..15, seed in any::<u64>(), shift in 1u32..40) {
        let vocab = Vocabulary::new(200, Rendering::PairBracketed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<u32> = (0..n as u32).collect();
        let roles = arrange_flat(&pairs, &mut rng);
        let relabeled: Vec<_> = roles
            .iter()
            .map(|r| tiltlab_core::langgen::PairRole { pair: (r.pair * 7 + shift) % 97, ..*r })
            .collect();
        let count = |rs: &[tiltlab_core::langgen::PairRole]| {
            let ids = render_pairs(rs, PairRendering::Dependency, &vocab);
            count_crossings(&extract_arcs(&SurfaceToken::from_ids(&ids, &vocab)).unwrap())
        };
        prop_assert_eq!(count(&roles), count(&relabeled));
    }

    #[test]
    fn crossing_count_matches_definition(raw in prop::collection::vec((1usize..40, 1usize..40), 0..12)) {
        let arcs: Vec<Arc> = raw
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| Arc { head: a.min(b), tail: a.max(b) })
            .collect();
        let mut brute = 0;
        for x in &arcs {
            for y in &arcs {
                if x.head < y.head && y.head < x.tail && x.tail < y.tail {
                    brute += 1;
                }
            }
        }
        prop_assert_eq!(count_crossings(&arcs), brute);
    }

    #[test]
    fn zipf_fit_scale_invariant(scale in 2u64..50) {
        let base: Vec<(u32, u64)> = (1..=60u64).map(|r| (r as u32, 6000 / r)).collect();
        let scaled: Vec<(u32, u64)> = base.iter().map(|&(t, c)| (t, c * scale)).collect();
        let a = fit_zipf_exponent(&RankFrequencyTable::from_counts(base), 1).unwrap();
        let b = fit_zipf_exponent(&RankFrequencyTable::from_counts(scaled), 1).unwrap();
        prop_assert!((a - b).abs() < 1e-2);
    }

    #[test]
    fn welch_antisymmetric(a in prop::collection::vec(-10.0f64..10.0, 3..10), b in prop::collection::vec(-10.0f64..10.0, 3..10)) {
        let (Ok(ab), Ok(ba)) = (welch_t_test(&a, &b), welch_t_test(&b, &a)) else { return Ok(()); };
        prop_assert!((ab.t + ba.t).abs() < 1e-9);
        prop_assert!((ab.p_two_sided - ba.p_two_sided).abs() < 1e-9);
    }

    #[test]
    fn encode_decode_round_trip(lines in prop::collection::vec(prop::collection::vec("[a-e]{1,3}", 0..8), 1..10), cap in 1usize..10) {
        let text: Vec<String> = lines.iter().map(|l| l.join(" ")).collect();
        let vocab = build_vocab(&text, cap);
        let Ok(vocab) = vocab else { return Ok(()); };
        let joined = text.iter().map(|l| format!("{l}\n")).collect::<String>();
        let decoded = vocab.decode(&vocab.encode(&joined)).unwrap();
        for (orig, back) in joined.lines().zip(decoded.lines()) {
            let o: Vec<&str> = orig.split_whitespace().collect();
            let b: Vec<&str> = back.split_whitespace().collect();
            prop_assert_eq!(o.len(), b.len());
            for (x, y) in o.iter().zip(&b) {
                prop_assert!(x == y || (*y == "<unk>" && vocab.id(x) == vocab.oov_id()));
            }
        }
    }

    #[test]
    fn loglinear_draws_are_exchangeable(seed in any::<u64>()) {
        // with c_s fixed, every position has the same distribution: positional
        // means of the token id agree across the first and last draw
        let vectors = word_vectors(30, 10, 1.0, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let c: Vec<f64> = (0..10).map(|i| ((i as f64) * 0.37).sin()).collect();
        let table = discourse_table(&c, &vectors);
        let mut first = 0.0;
        let mut last = 0.0;
        let n = 4000;
        for _ in 0..n {
            let draws: Vec<usize> = (0..5).map(|_| table.sample(&mut rng)).collect();
            first += draws[0] as f64;
            last += draws[4] as f64;
        }
        let mean: f64 = (0..30).map(|i| i as f64 * table.probability(i)).sum();
        let var: f64 = (0..30).map(|i| (i as f64 - mean).powi(2) * table.probability(i)).sum();
        let se = (2.0 * var / n as f64).sqrt();
        prop_assert!(((first - last) / n as f64).abs() < 5.0 * se + 1e-9);
    }
}

//! Analytic gradients against f64 central differences (h = 1e-5).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tiltlab_neural::{
    Architecture, Encoder, EncoderConfig, Graph, LanguageModel, ParamStore, PositionalEncoding,
    Reduction, SeqLayout, Tensor, Var,
};

const H: f64 = 1e-5;
const TOL: f64 = 1e-3;

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= TOL * analytic.abs().max(numeric.abs()) + 1e-7
}

fn random(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Entries in ±[0.1, 1], away from kinks at zero.
fn off_zero(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(rows, cols, |_, _| {
        let m = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Reduces a node to a scalar through a fixed random projection.
fn project(g: &mut Graph<f64>, y: Var) -> Var {
    let [r, c] = g.value(y).shape();
    if [r, c] == [1, 1] {
        return y;
    }
    let w = g.input(random(r, c, 0xfeed));
    let p = g.mul(y, w);
    g.sum(p)
}

fn check_inputs(name: &str, inputs: &[Tensor<f64>], build: impl Fn(&mut Graph<f64>, &[Var]) -> Var) {
    let eval = |xs: &[Tensor<f64>]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.leaf(x.clone())).collect();
        let y = build(&mut g, &vars);
        let loss = project(&mut g, y);
        (g, vars, loss)
    };
    let (g, vars, loss) = eval(inputs);
    let grads = g.backward(loss).unwrap();
    for (k, v) in vars.iter().enumerate() {
        let zero = vec![0.0; inputs[k].len()];
        let analytic = grads.of(*v).unwrap_or(&zero);
        for i in 0..inputs[k].len() {
            let mut xs = inputs.to_vec();
            xs[k].data_mut()[i] += H;
            let (g1, _, l1) = eval(&xs);
            xs[k].data_mut()[i] -= 2.0 * H;
            let (g2, _, l2) = eval(&xs);
            let numeric = (g1.value(l1).item() - g2.value(l2).item()) / (2.0 * H);
            assert!(
                close(analytic[i], numeric),
                "{name}: input {k} element {i}: analytic {} numeric {numeric}",
                analytic[i]
            );
        }
    }
}

fn check_params(name: &str, store: &ParamStore<f64>, build: impl Fn(&mut Graph<f64>, &ParamStore<f64>) -> Var) {
    let eval = |s: &ParamStore<f64>| {
        let mut g = Graph::new();
        let y = build(&mut g, s);
        let loss = project(&mut g, y);
        g.value(loss).item()
    };
    let mut g = Graph::new();
    let y = build(&mut g, store);
    let loss = project(&mut g, y);
    let grads = g.backward(loss).unwrap();
    assert!(grads.detached(store).is_empty(), "{name}: parameters unreached");
    let mut work = store.clone();
    for id in store.ids() {
        let analytic = grads.param(id).unwrap().to_vec();
        for i in 0..analytic.len() {
            let x = store.value(id).data()[i];
            work.value_mut(id).data_mut()[i] = x + H;
            let up = eval(&work);
            work.value_mut(id).data_mut()[i] = x - H;
            let down = eval(&work);
            work.value_mut(id).data_mut()[i] = x;
            let numeric = (up - down) / (2.0 * H);
            assert!(
                close(analytic[i], numeric),
                "{name}: {} element {i}: analytic {} numeric {numeric}",
                store.param(id).name,
                analytic[i]
            );
        }
    }
}

#[test]
fn matrix_products() {
    check_inputs("matmul", &[random(3, 4, 1), random(4, 2, 2)], |g, v| g.matmul(v[0], v[1]));
    check_inputs("matmul_nt", &[random(3, 4, 3), random(5, 4, 4)], |g, v| g.matmul_nt(v[0], v[1]));
}

#[test]
fn elementwise() {
    check_inputs("add_bias", &[random(3, 4, 5), random(1, 4, 6)], |g, v| g.add_bias(v[0], v[1]));
    check_inputs("add", &[random(3, 4, 7), random(3, 4, 8)], |g, v| g.add(v[0], v[1]));
    check_inputs("mul", &[random(3, 4, 9), random(3, 4, 10)], |g, v| g.mul(v[0], v[1]));
    check_inputs("scale", &[random(2, 3, 11)], |g, v| g.scale(v[0], -1.7));
    check_inputs("tanh", &[random(3, 3, 12)], |g, v| g.tanh(v[0]));
    check_inputs("sigmoid", &[random(3, 3, 13)], |g, v| g.sigmoid(v[0]));
    check_inputs("relu", &[off_zero(3, 3, 14)], |g, v| g.relu(v[0]));
    check_inputs("mean", &[random(3, 5, 15)], |g, v| g.mean(v[0]));
}

#[test]
fn layer_norm() {
    check_inputs(
        "layer_norm",
        &[random(4, 6, 16), random(1, 6, 17), random(1, 6, 18)],
        |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5),
    );
}

#[test]
fn shape_ops() {
    check_inputs("gather_rows", &[random(4, 3, 19)], |g, v| g.gather_rows(v[0], &[2, 0, 2, 3]));
    check_inputs("concat_cols", &[random(3, 2, 20), random(3, 4, 21)], |g, v| g.concat_cols(v[0], v[1]));
    check_inputs("concat_rows", &[random(1, 3, 22), random(4, 3, 23)], |g, v| g.concat_rows(v[0], v[1]));
    check_inputs("row_block_dot", &[random(3, 6, 24), random(3, 2, 25)], |g, v| g.row_block_dot(v[0], v[1]));
}

#[test]
fn dropout_with_fixed_mask() {
    check_inputs("dropout", &[random(4, 5, 26)], |g, v| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        g.dropout(v[0], 0.3, &mut rng)
    });
}

#[test]
fn cross_entropy_both_reductions() {
    let targets = [Some(2), None, Some(0), Some(4)];
    check_inputs("ce mean", &[random(4, 5, 27)], |g, v| g.cross_entropy(v[0], &targets, Reduction::Mean));
    check_inputs("ce sum", &[random(4, 5, 28)], |g, v| g.cross_entropy(v[0], &targets, Reduction::Sum));
}

#[test]
fn attention_ragged_batch() {
    let layout = SeqLayout::new(vec![3, 1, 2]);
    for causal in [false, true] {
        check_inputs("attention", &[random(layout.rows(), 12, 29)], |g, v| {
            g.attention(v[0], &layout, 2, causal)
        });
    }
}

#[test]
fn lstm_both_directions() {
    let layout = SeqLayout::new(vec![3, 1, 2]);
    for reverse in [false, true] {
        check_inputs("lstm", &[random(layout.rows(), 8, 30), random(2, 8, 31)], |g, v| {
            g.lstm(v[0], v[1], &layout, reverse)
        });
    }
}

#[test]
fn arc_scores_through_softmax() {
    let layout = SeqLayout::new(vec![3, 2]);
    let heads = [Some(0), Some(3), Some(1), Some(2), Some(0), None];
    check_inputs(
        "arc_scores",
        &[random(layout.rows(), 4, 32), random(layout.rows(), 4, 33), random(1, 4, 34)],
        |g, v| {
            let s = g.arc_scores(v[0], v[1], v[2], &layout);
            g.cross_entropy(s, &heads, Reduction::Mean)
        },
    );
}

fn tiny(architecture: Architecture) -> EncoderConfig {
    EncoderConfig {
        architecture,
        layers: 2,
        model_size: 4,
        lstm_hidden: 3,
        ff_size: 6,
        heads: 2,
        dropout: 0.0,
        positional: PositionalEncoding::Sinusoidal,
        max_positions: 16,
    }
}

#[test]
fn encoders_parameters_and_inputs() {
    let layout = SeqLayout::new(vec![3, 2]);
    for arch in [Architecture::Transformer, Architecture::Lstm] {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let enc = Encoder::new(&tiny(arch), &mut store, &mut rng).unwrap();
        // perturb biases and gains away from their constant initial values
        for id in store.ids() {
            let noise = random(store.value(id).rows(), store.value(id).cols(), 36 + id.0 as u64);
            for (x, n) in store.value_mut(id).data_mut().iter_mut().zip(noise.data()) {
                *x += 0.1 * n;
            }
        }
        let x = random(layout.rows(), 4, 37);
        check_params(arch.name(), &store, |g, s| {
            let xv = g.input(x.clone());
            enc.forward(g, s, xv, &layout, true, None).unwrap()
        });
        check_inputs(arch.name(), &[x.clone()], |g, v| {
            enc.forward(g, &store, v[0], &layout, true, None).unwrap()
        });
    }
}

#[test]
fn tied_embedding_gets_both_contributions() {
    let layout = SeqLayout::new(vec![3, 2]);
    let mut store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(38);
    let lm = LanguageModel::new(&tiny(Architecture::Transformer), 7, &mut store, &mut rng).unwrap();
    let ids = [1, 4, 6, 2, 2, 0];
    let rows = [0, 1, 3];
    let targets = [Some(4), Some(6), Some(2)];
    check_params("tied lm", &store, |g, s| {
        let h = lm.hidden(g, s, &ids, &layout, true, None).unwrap();
        let logits = lm.logits(g, s, h, &rows).unwrap();
        g.cross_entropy(logits, &targets, Reduction::Mean)
    });
}

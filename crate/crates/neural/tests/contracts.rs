use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tiltlab_neural::{
    noam_lr, Checkpoint, EncoderConfig, Graph, LanguageModel, NeuralError, ParamStore, Reduction,
    SeqLayout, Tensor,
};

fn lm(cfg: &EncoderConfig, vocab: usize, seed: u64) -> (LanguageModel, ParamStore<f32>) {
    let mut store = ParamStore::new();
    let model = LanguageModel::new(cfg, vocab, &mut store, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (model, store)
}

fn encode(model: &LanguageModel, store: &ParamStore<f32>, ids: &[usize], causal: bool) -> Tensor<f32> {
    let layout = SeqLayout::new(vec![ids.len()]);
    let mut g = Graph::new();
    let h = model.hidden(&mut g, store, ids, &layout, causal, None).unwrap();
    g.value(h).clone()
}

#[test]
fn full_config_output_shapes() {
    for cfg in [EncoderConfig::paper_transformer(), EncoderConfig::paper_lstm()] {
        let (model, store) = lm(&cfg, 20, 1);
        assert_eq!(encode(&model, &store, &[3], true).shape(), [1, 300]);
        assert_eq!(encode(&model, &store, &[3, 4, 5], true).shape(), [3, 300]);
    }
}

#[test]
fn horizon_is_enforced() {
    let cfg = EncoderConfig {
        max_positions: 4,
        ..EncoderConfig::desk_transformer()
    };
    let (model, store) = lm(&cfg, 20, 1);
    let layout = SeqLayout::new(vec![5]);
    let mut g = Graph::new();
    let err = model.hidden(&mut g, &store, &[1; 5], &layout, true, None).unwrap_err();
    assert!(matches!(err, NeuralError::SequenceTooLong { length: 5, horizon: 4 }));
}

#[test]
fn zero_lstm_outputs_zero() {
    let (model, mut store) = lm(&EncoderConfig::desk_lstm(), 20, 2);
    for id in store.ids().collect::<Vec<_>>() {
        if store.param(id).name.starts_with("encoder.") {
            store.value_mut(id).data_mut().fill(0.0);
        }
    }
    assert!(encode(&model, &store, &[1, 7, 3, 9], true).data().iter().all(|&x| x == 0.0));
}

#[test]
fn positions_distinguish_identical_tokens() {
    let (model, store) = lm(&EncoderConfig::desk_transformer(), 20, 3);
    let out = encode(&model, &store, &[5; 6], false);
    for i in 0..6 {
        for j in i + 1..6 {
            assert_ne!(out.row(i), out.row(j), "positions {i} and {j}");
        }
    }
}

#[test]
fn evaluation_passes_are_bitwise_identical() {
    let (model, store) = lm(&EncoderConfig::desk_transformer(), 20, 4);
    assert_eq!(encode(&model, &store, &[1, 2, 3], true), encode(&model, &store, &[1, 2, 3], true));
}

#[test]
fn output_layer_shares_embedding_storage() {
    let (model, mut store) = lm(&EncoderConfig::desk_transformer(), 10, 5);
    let layout = SeqLayout::new(vec![2]);
    let logits = |store: &ParamStore<f32>| {
        let mut g = Graph::new();
        let h = model.hidden(&mut g, store, &[1, 2], &layout, true, None).unwrap();
        let l = model.logits(&mut g, store, h, &[1]).unwrap();
        g.value(l).clone()
    };
    let before = logits(&store);
    // row 7 is neither input token, so only the output projection sees it
    store.value_mut(model.embedding).row_mut(7).fill(0.0);
    let after = logits(&store);
    assert_eq!(after.get(0, 7), 0.0);
    assert_ne!(before.get(0, 7), 0.0);
    assert_eq!(before.get(0, 3), after.get(0, 3));
}

#[test]
fn noam_peak_value() {
    assert!((noam_lr(4000, 300, 4000) - 9.13e-4).abs() < 5e-7);
}

#[test]
fn checkpoint_file_round_trip() {
    let cfg = EncoderConfig::desk_lstm();
    let (_, store) = lm(&cfg, 30, 6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    Checkpoint {
        config: cfg.clone(),
        meta: serde_json::Value::Null,
        params: store.clone(),
    }
    .save(&path)
    .unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.config, cfg);
    for ((_, a), (_, b)) in store.iter().zip(back.params.iter()) {
        assert_eq!(a.value, b.value);
    }
    std::fs::write(&path, b"TILT").unwrap();
    assert!(Checkpoint::load(&path).is_err());
}

/// Two-layer tanh network of random shape, checked in f64.
fn mlp_gradcheck(n: usize, i: usize, h: usize, o: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rand = |r: usize, c: usize| Tensor::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    let mut store = ParamStore::<f64>::new();
    let ids = [
        store.add("w1", rand(i, h)),
        store.add("b1", rand(1, h)),
        store.add("w2", rand(h, o)),
        store.add("b2", rand(1, o)),
    ];
    let x = rand(n, i);
    let targets: Vec<Option<usize>> = (0..n).map(|k| Some(k % o)).collect();
    let loss = |s: &ParamStore<f64>| {
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let p: Vec<_> = ids.iter().map(|&id| g.param(s, id)).collect();
        let a = g.matmul(xv, p[0]);
        let a = g.add_bias(a, p[1]);
        let a = g.tanh(a);
        let b = g.matmul(a, p[2]);
        let b = g.add_bias(b, p[3]);
        let l = g.cross_entropy(b, &targets, Reduction::Mean);
        (g, l)
    };
    let (g, l) = loss(&store);
    let grads = g.backward(l).unwrap();
    let mut worst = 0.0f64;
    let mut work = store.clone();
    for id in ids {
        let analytic = grads.param(id).unwrap().to_vec();
        for k in 0..analytic.len() {
            let x0 = store.value(id).data()[k];
            work.value_mut(id).data_mut()[k] = x0 + 1e-5;
            let (g1, l1) = loss(&work);
            work.value_mut(id).data_mut()[k] = x0 - 1e-5;
            let (g2, l2) = loss(&work);
            work.value_mut(id).data_mut()[k] = x0;
            let num = (g1.value(l1).item() - g2.value(l2).item()) / 2e-5;
            let scale = analytic[k].abs().max(num.abs());
            if scale > 1e-6 {
                worst = worst.max((analytic[k] - num).abs() / scale);
            }
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_networks_pass_gradcheck(
        n in 1usize..5, i in 1usize..6, h in 1usize..8, o in 2usize..6, seed in any::<u64>()
    ) {
        let worst = mlp_gradcheck(n, i, h, o, seed);
        prop_assert!(worst < 1e-3, "relative error {}", worst);
    }

    #[test]
    fn backward_accumulates_over_reuse(k in 1usize..6, seed in any::<u64>()) {
        // y = Σ_k x ⇒ dy/dx = k, whatever the values
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_fn(2, 3, |_, _| rng.random_range(-5.0..5.0)));
        let mut y = x;
        for _ in 1..k {
            y = g.add(y, x);
        }
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        prop_assert!(grads.of(x).unwrap().iter().all(|&d| d == k as f64));
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tiltlab_neural::{Encoder, EncoderConfig, ParamStore, ENCODER_PREFIX};

fn transformer_oracle(layers: usize, d: usize, ff: usize) -> usize {
    let attention = 3 * (d * d + d) + (d * d + d);
    let norms = 2 * 2 * d;
    let feedforward = (d * ff + ff) + (ff * d + d);
    layers * (attention + norms + feedforward)
}

fn lstm_oracle(layers: usize, d: usize, h: usize) -> usize {
    let first = d * 4 * h + h * 4 * h + 2 * 4 * h;
    let rest = (layers - 1) * (h * 4 * h + h * 4 * h + 2 * 4 * h);
    first + rest + h * d + d
}

fn built(cfg: &EncoderConfig) -> usize {
    let mut store = ParamStore::<f32>::new();
    Encoder::new(cfg, &mut store, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    store.count_prefix(ENCODER_PREFIX)
}

#[test]
fn full_scale_encoders_are_within_one_percent() {
    let t = built(&EncoderConfig::paper_transformer());
    let l = built(&EncoderConfig::paper_lstm());
    assert_eq!(t, transformer_oracle(3, 300, 600));
    assert_eq!(l, lstm_oracle(3, 300, 294));
    assert_eq!((t, l), (2_169_900, 2_177_076));
    assert!((t as f64 - l as f64).abs() / t as f64 <= 0.01);
}

#[test]
fn desk_encoders_are_within_one_percent() {
    let t = built(&EncoderConfig::desk_transformer());
    let l = built(&EncoderConfig::desk_lstm());
    assert_eq!(t, transformer_oracle(2, 64, 128));
    assert_eq!(l, lstm_oracle(2, 64, 62));
    assert_eq!((t, l), (66_944, 67_024));
    assert!((t as f64 - l as f64).abs() / t as f64 <= 0.01);
}

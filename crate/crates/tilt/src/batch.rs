use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tiltlab_core::langgen::TokenId;
use tiltlab_neural::SeqLayout;

/// Batches per length-sorted pool.
const POOL: usize = 16;

/// Padded token rows (`row = b·max_len + t`) for a group of sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<usize>,
    pub layout: SeqLayout,
}

impl Batch {
    pub fn new(sentences: &[&[TokenId]], pad: usize) -> Self {
        let layout = SeqLayout::new(sentences.iter().map(|s| s.len()).collect());
        let mut ids = vec![pad; layout.rows()];
        for (b, s) in sentences.iter().enumerate() {
            for (t, &tok) in s.iter().enumerate() {
                ids[layout.row(b, t)] = tok as usize;
            }
        }
        Self { ids, layout }
    }

    pub fn select(sentences: &[Vec<TokenId>], indices: &[usize], pad: usize) -> Self {
        let picked: Vec<&[TokenId]> = indices.iter().map(|&i| sentences[i].as_slice()).collect();
        Self::new(&picked, pad)
    }
}

/// Endless seeded stream of index batches. Each epoch shuffles the corpus,
/// sorts pools of `POOL` batches by length to limit padding, and shuffles
/// the resulting batches.
#[derive(Debug, Clone)]
pub struct Batcher {
    lengths: Vec<usize>,
    eligible: Vec<usize>,
    batch_size: usize,
    rng: ChaCha8Rng,
    queue: VecDeque<Vec<usize>>,
    epochs: usize,
}

impl Batcher {
    /// Sentences shorter than `min_len` are never batched.
    pub fn new(lengths: Vec<usize>, batch_size: usize, min_len: usize, seed: u64) -> Self {
        assert!(batch_size > 0, "batch size must be positive");
        let eligible = (0..lengths.len()).filter(|&i| lengths[i] >= min_len).collect();
        Self {
            lengths,
            eligible,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queue: VecDeque::new(),
            epochs: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.eligible.is_empty()
    }

    /// Epochs started so far.
    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn next_batch(&mut self) -> Option<Vec<usize>> {
        if self.eligible.is_empty() {
            return None;
        }
        if self.queue.is_empty() {
            self.refill();
        }
        self.queue.pop_front()
    }

    fn refill(&mut self) {
        self.epochs += 1;
        let mut order = self.eligible.clone();
        order.shuffle(&mut self.rng);
        let mut batches = Vec::new();
        for pool in order.chunks_mut(self.batch_size * POOL) {
            pool.sort_by_key(|&i| self.lengths[i]);
            batches.extend(pool.chunks(self.batch_size).map(<[usize]>::to_vec));
        }
        batches.shuffle(&mut self.rng);
        self.queue.extend(batches);
    }
}

/// Consecutive, unshuffled index batches for evaluation.
pub fn sequential(len: usize, batch_size: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..len).step_by(batch_size.max(1)).map(move |s| (s..(s + batch_size).min(len)).collect())
}

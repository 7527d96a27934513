use rand::seq::SliceRandom;
use rand::Rng;

use super::sampler::PreparedSampler;
use super::vocab::{TokenId, Vocabulary};
use super::GenError;

pub const DEFAULT_OPEN_THRESHOLD: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Structure {
    None,
    Flat,
    Nesting,
}

/// Surface form of a head/tail pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairRendering {
    /// Head and tail are the same token (the pair id).
    Parenthesis,
    /// Head and tail are distinct tokens `<i` and `i>`.
    Dependency,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureSpec {
    pub structure: Structure,
    pub rendering: PairRendering,
    /// A pair is opened when the uniform draw falls below this value (or
    /// nothing is open yet).
    pub open_threshold: f64,
}

impl StructureSpec {
    pub fn none() -> Self {
        Self {
            structure: Structure::None,
            rendering: PairRendering::Dependency,
            open_threshold: DEFAULT_OPEN_THRESHOLD,
        }
    }

    pub fn new(structure: Structure, rendering: PairRendering) -> Self {
        Self {
            structure,
            rendering,
            open_threshold: DEFAULT_OPEN_THRESHOLD,
        }
    }

    pub fn is_structured(&self) -> bool {
        self.structure != Structure::None
    }
}

/// One position of an arrangement: which pair, and whether it is the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairRole {
    pub pair: TokenId,
    pub is_head: bool,
}

impl PairRole {
    pub fn head(pair: TokenId) -> Self {
        Self { pair, is_head: true }
    }

    pub fn tail(pair: TokenId) -> Self {
        Self {
            pair,
            is_head: false,
        }
    }
}

/// Pairs needed for a sentence of requested length `l`: `l/2` rounded to
/// nearest with ties up, i.e. `ceil(l/2)`.
pub fn pair_count_for_length(length: usize) -> usize {
    length.div_ceil(2)
}

/// Draws `pair_count` pair ids i.i.d. (with replacement) from `sampler`,
/// which ranks pairs.
pub fn sample_pairs<R: Rng + ?Sized>(
    sampler: &PreparedSampler,
    pair_count: usize,
    rng: &mut R,
) -> Vec<TokenId> {
    sampler.sample_sentence(pair_count, rng)
}

/// Random arrangement keeping each head before its own tail: a uniformly
/// random permutation of the `2k` slots is cut into consecutive slot pairs,
/// and each pair's head takes the earlier slot.
pub fn arrange_flat<R: Rng + ?Sized>(pairs: &[TokenId], rng: &mut R) -> Vec<PairRole> {
    let mut slots: Vec<usize> = (0..2 * pairs.len()).collect();
    slots.shuffle(rng);
    let mut out = vec![PairRole::head(0); slots.len()];
    for (i, &pair) in pairs.iter().enumerate() {
        let (a, b) = (slots[2 * i], slots[2 * i + 1]);
        out[a.min(b)] = PairRole::head(pair);
        out[a.max(b)] = PairRole::tail(pair);
    }
    out
}

/// Stack-based nesting arrangement. `pairs[0]` is the top of the input
/// stack. Each iteration draws `p ~ U[0,1)`; a pair is opened when nothing
/// is open or `p < open_threshold`, otherwise the innermost open pair is
/// closed. Open pairs are closed once the input is exhausted.
pub fn arrange_nesting<R: Rng + ?Sized>(
    pairs: &[TokenId],
    open_threshold: f64,
    rng: &mut R,
) -> Vec<PairRole> {
    arrange_nesting_with(pairs, open_threshold, || rng.random::<f64>())
}

pub(crate) fn arrange_nesting_with(
    pairs: &[TokenId],
    open_threshold: f64,
    mut draw: impl FnMut() -> f64,
) -> Vec<PairRole> {
    let mut out = Vec::with_capacity(2 * pairs.len());
    let mut closing: Vec<TokenId> = Vec::new();
    let mut input = pairs.iter();
    let mut next = input.next();
    while let Some(&pair) = next {
        let p = draw();
        if closing.is_empty() || p < open_threshold {
            out.push(PairRole::head(pair));
            closing.push(pair);
            next = input.next();
        } else {
            let tail = closing.pop().expect("non-empty closing stack");
            out.push(PairRole::tail(tail));
        }
    }
    while let Some(tail) = closing.pop() {
        out.push(PairRole::tail(tail));
    }
    out
}

/// Maps a role arrangement to token ids.
pub fn render_pairs(roles: &[PairRole], rendering: PairRendering, vocab: &Vocabulary) -> Vec<TokenId> {
    roles
        .iter()
        .map(|r| match rendering {
            PairRendering::Parenthesis => r.pair,
            PairRendering::Dependency => {
                if r.is_head {
                    vocab.head_id(r.pair)
                } else {
                    vocab.tail_id(r.pair)
                }
            }
        })
        .collect()
}

/// Recovers the role arrangement from a Dependency-rendered sentence.
pub fn recover_roles(tokens: &[TokenId], vocab: &Vocabulary) -> Result<Vec<PairRole>, GenError> {
    let half = vocab.pair_count() as TokenId;
    tokens
        .iter()
        .map(|&t| {
            if (t as usize) >= vocab.size() {
                Err(GenError::Token(vocab.render(t)))
            } else if t < half {
                Ok(PairRole::head(t))
            } else {
                Ok(PairRole::tail(t - half))
            }
        })
        .collect()
}

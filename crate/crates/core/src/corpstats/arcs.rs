use std::collections::HashMap;
use std::fmt;

use crate::langgen::{Rendering, TokenId, Vocabulary};

/// A token as it appears in a structured corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SurfaceToken {
    Head(TokenId),
    Tail(TokenId),
    /// Parenthesis rendering: the same token opens and closes a pair.
    Plain(TokenId),
}

impl SurfaceToken {
    /// Classifies token ids of a vocabulary: bracketed vocabularies yield
    /// heads and tails keyed by pair id, plain ones yield `Plain`.
    pub fn from_ids(ids: &[TokenId], vocab: &Vocabulary) -> Vec<SurfaceToken> {
        let half = vocab.pair_count() as TokenId;
        ids.iter()
            .map(|&id| match vocab.rendering() {
                Rendering::PlainInteger => SurfaceToken::Plain(id),
                Rendering::PairBracketed if id < half => SurfaceToken::Head(id),
                Rendering::PairBracketed => SurfaceToken::Tail(id - half),
            })
            .collect()
    }

    /// Parses `<N`, `N>` or `N`.
    pub fn parse(s: &str) -> Option<SurfaceToken> {
        if let Some(rest) = s.strip_prefix('<') {
            rest.parse().ok().map(SurfaceToken::Head)
        } else if let Some(rest) = s.strip_suffix('>') {
            rest.parse().ok().map(SurfaceToken::Tail)
        } else {
            s.parse().ok().map(SurfaceToken::Plain)
        }
    }
}

/// Arc between a head and its tail, as 1-based positions with `head < tail`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Arc {
    pub head: usize,
    pub tail: usize,
}

pub type ArcSet = Vec<Arc>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnmatchedTokens {
    /// 1-based positions that found no partner.
    pub positions: Vec<usize>,
}

impl fmt::Display for UnmatchedTokens {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unmatched tokens at positions {:?}", self.positions)
    }
}

impl std::error::Error for UnmatchedTokens {}

/// Matches every tail to the most recent unmatched head of the same pair.
/// Plain tokens close the innermost open arc when it carries the same token
/// and open a new arc otherwise; if that leaves plain tokens unmatched, they
/// are re-matched per token, each closing the most recent unmatched
/// occurrence of itself. Arcs are returned sorted by head position.
pub fn extract_arcs(sentence: &[SurfaceToken]) -> Result<ArcSet, UnmatchedTokens> {
    let mut open: HashMap<TokenId, Vec<usize>> = HashMap::new();
    let mut arcs = Vec::with_capacity(sentence.len() / 2);
    let mut unmatched = Vec::new();
    let mut plain = Vec::new();
    for (i, tok) in sentence.iter().enumerate() {
        let pos = i + 1;
        match *tok {
            SurfaceToken::Head(id) => open.entry(id).or_default().push(pos),
            SurfaceToken::Tail(id) => match open.get_mut(&id).and_then(Vec::pop) {
                Some(head) => arcs.push(Arc { head, tail: pos }),
                None => unmatched.push(pos),
            },
            SurfaceToken::Plain(id) => plain.push((pos, id)),
        }
    }
    unmatched.extend(open.into_values().flatten());
    let plain_arcs = match_plain_nested(&plain).or_else(|| match_plain_nearest(&plain));
    match plain_arcs {
        Some(a) => arcs.extend(a),
        None => unmatched.extend(plain.iter().map(|p| p.0)),
    }
    if unmatched.is_empty() {
        arcs.sort_unstable();
        Ok(arcs)
    } else {
        unmatched.sort_unstable();
        Err(UnmatchedTokens {
            positions: unmatched,
        })
    }
}

fn match_plain_nested(tokens: &[(usize, TokenId)]) -> Option<Vec<Arc>> {
    let mut stack: Vec<(usize, TokenId)> = Vec::new();
    let mut arcs = Vec::new();
    for &(pos, id) in tokens {
        match stack.last() {
            Some(&(head, top)) if top == id => {
                stack.pop();
                arcs.push(Arc { head, tail: pos });
            }
            _ => stack.push((pos, id)),
        }
    }
    stack.is_empty().then_some(arcs)
}

fn match_plain_nearest(tokens: &[(usize, TokenId)]) -> Option<Vec<Arc>> {
    let mut open: HashMap<TokenId, usize> = HashMap::new();
    let mut arcs = Vec::new();
    for &(pos, id) in tokens {
        match open.remove(&id) {
            Some(head) => arcs.push(Arc { head, tail: pos }),
            None => {
                open.insert(id, pos);
            }
        }
    }
    open.is_empty().then_some(arcs)
}

/// Unordered arc pairs `(i,j), (k,l)` with `i < k < j < l`.
pub fn count_crossings(arcs: &[Arc]) -> usize {
    let mut count = 0;
    for (n, a) in arcs.iter().enumerate() {
        for b in &arcs[n + 1..] {
            let (x, y) = if a.head < b.head { (a, b) } else { (b, a) };
            if x.head < y.head && y.head < x.tail && x.tail < y.tail {
                count += 1;
            }
        }
    }
    count
}

/// True when the sentence is fully matched and no arcs cross.
pub fn is_nested(sentence: &[SurfaceToken]) -> bool {
    match extract_arcs(sentence) {
        Ok(arcs) => count_crossings(&arcs) == 0,
        Err(_) => false,
    }
}

/// Like [`is_nested`] but returns the diagnostic for malformed input.
pub fn check_nested(sentence: &[SurfaceToken]) -> Result<bool, UnmatchedTokens> {
    extract_arcs(sentence).map(|arcs| count_crossings(&arcs) == 0)
}

use std::fmt;

use super::GenError;

pub type TokenId = u32;

/// How content tokens are written to corpus files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rendering {
    /// Every token is a decimal integer.
    PlainInteger,
    /// The content range is split into heads and tails; head `i` is written
    /// `<i` and tail `i` is written `i>`.
    PairBracketed,
}

/// Token inventory of an artificial language.
///
/// Content tokens occupy `[0, size)`. The three special tokens sit directly
/// above the content range in the order OOV, MASK, PAD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Vocabulary {
    size: usize,
    rendering: Rendering,
}

impl Vocabulary {
    pub fn new(size: usize, rendering: Rendering) -> Result<Self, GenError> {
        if size < 2 {
            return Err(GenError::Config(format!(
                "vocabulary size must be at least 2, got {size}"
            )));
        }
        if rendering == Rendering::PairBracketed && size % 2 != 0 {
            return Err(GenError::Config(format!(
                "pair-bracketed vocabulary needs an even size, got {size}"
            )));
        }
        Ok(Self { size, rendering })
    }

    /// Content-token count.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn rendering(&self) -> Rendering {
        self.rendering
    }

    pub fn oov_id(&self) -> TokenId {
        self.size as TokenId
    }

    pub fn mask_id(&self) -> TokenId {
        self.size as TokenId + 1
    }

    pub fn pad_id(&self) -> TokenId {
        self.size as TokenId + 2
    }

    /// Content tokens plus the three specials; the embedding table height.
    pub fn total_ids(&self) -> usize {
        self.size + 3
    }

    pub fn is_pair_capable(&self) -> bool {
        self.size % 2 == 0
    }

    /// Number of head/tail pairs the vocabulary can express.
    pub fn pair_count(&self) -> usize {
        self.size / 2
    }

    pub fn head_id(&self, pair: TokenId) -> TokenId {
        pair
    }

    pub fn tail_id(&self, pair: TokenId) -> TokenId {
        pair + self.pair_count() as TokenId
    }

    /// Surface form of a token id.
    pub fn render(&self, id: TokenId) -> String {
        let size = self.size as TokenId;
        if id == self.oov_id() {
            return "<oov>".to_string();
        }
        if id == self.mask_id() {
            return "<mask>".to_string();
        }
        if id == self.pad_id() {
            return "<pad>".to_string();
        }
        debug_assert!(id < size, "token id {id} outside vocabulary");
        match self.rendering {
            Rendering::PlainInteger => id.to_string(),
            Rendering::PairBracketed => {
                let half = self.pair_count() as TokenId;
                if id < half {
                    format!("<{id}")
                } else {
                    format!("{}>", id - half)
                }
            }
        }
    }

    /// Inverse of [`Vocabulary::render`].
    pub fn parse(&self, surface: &str) -> Result<TokenId, GenError> {
        let bad = || GenError::Token(surface.to_string());
        match surface {
            "<oov>" => return Ok(self.oov_id()),
            "<mask>" => return Ok(self.mask_id()),
            "<pad>" => return Ok(self.pad_id()),
            _ => {}
        }
        let id = match self.rendering {
            Rendering::PlainInteger => surface.parse::<TokenId>().map_err(|_| bad())?,
            Rendering::PairBracketed => {
                let half = self.pair_count() as TokenId;
                if let Some(rest) = surface.strip_prefix('<') {
                    let pair = rest.parse::<TokenId>().map_err(|_| bad())?;
                    if pair >= half {
                        return Err(bad());
                    }
                    self.head_id(pair)
                } else if let Some(rest) = surface.strip_suffix('>') {
                    let pair = rest.parse::<TokenId>().map_err(|_| bad())?;
                    if pair >= half {
                        return Err(bad());
                    }
                    self.tail_id(pair)
                } else {
                    return Err(bad());
                }
            }
        };
        if (id as usize) < self.size {
            Ok(id)
        } else {
            Err(bad())
        }
    }
}

impl fmt::Display for Rendering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rendering::PlainInteger => write!(f, "plain"),
            Rendering::PairBracketed => write!(f, "bracketed"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_sit_above_content() {
        let v = Vocabulary::new(10, Rendering::PlainInteger).unwrap();
        assert_eq!(v.oov_id(), 10);
        assert_eq!(v.mask_id(), 11);
        assert_eq!(v.pad_id(), 12);
        assert_eq!(v.total_ids(), 13);
    }

    #[test]
    fn rejects_tiny_or_odd_bracketed() {
        assert!(Vocabulary::new(1, Rendering::PlainInteger).is_err());
        assert!(Vocabulary::new(7, Rendering::PairBracketed).is_err());
        assert!(Vocabulary::new(7, Rendering::PlainInteger).is_ok());
    }

    #[test]
    fn bracketed_render_and_parse() {
        let v = Vocabulary::new(400, Rendering::PairBracketed).unwrap();
        assert_eq!(v.render(v.head_id(123)), "<123");
        assert_eq!(v.render(v.tail_id(123)), "123>");
        assert_eq!(v.parse("<123").unwrap(), 123);
        assert_eq!(v.parse("123>").unwrap(), 323);
        assert!(v.parse("200>").is_err());
        assert!(v.parse("12").is_err());
        for id in 0..v.total_ids() as TokenId {
            assert_eq!(v.parse(&v.render(id)).unwrap(), id);
        }
    }
}

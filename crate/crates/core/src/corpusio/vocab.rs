use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use crate::langgen::{LengthDistribution, TokenId};

use super::IoError;

/// Surface form that stands for any out-of-vocabulary word.
pub const OOV_MARKER: &str = "<unk>";

/// Capped surface-form vocabulary. Kept forms have dense ids `[0, K)`; the
/// specials follow in the same order as artificial vocabularies: OOV = K,
/// MASK = K+1, PAD = K+2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabMap {
    forms: Vec<String>,
    index: HashMap<String, TokenId>,
    cap: usize,
}

impl VocabMap {
    pub fn from_forms(forms: Vec<String>, cap: usize) -> Result<Self, IoError> {
        let mut index = HashMap::with_capacity(forms.len());
        for (i, f) in forms.iter().enumerate() {
            if f == OOV_MARKER {
                return Err(IoError::Vocab(format!("'{OOV_MARKER}' is reserved")));
            }
            if index.insert(f.clone(), i as TokenId).is_some() {
                return Err(IoError::Vocab(format!("duplicate form '{f}'")));
            }
        }
        Ok(Self { forms, index, cap })
    }

    /// Number of kept forms (K).
    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn oov_id(&self) -> TokenId {
        self.forms.len() as TokenId
    }

    pub fn mask_id(&self) -> TokenId {
        self.forms.len() as TokenId + 1
    }

    pub fn pad_id(&self) -> TokenId {
        self.forms.len() as TokenId + 2
    }

    /// Embedding-table height: kept forms plus the three specials.
    pub fn total_ids(&self) -> usize {
        self.forms.len() + 3
    }

    pub fn id(&self, form: &str) -> TokenId {
        self.index.get(form).copied().unwrap_or(self.oov_id())
    }

    pub fn form(&self, id: TokenId) -> Option<&str> {
        if id == self.oov_id() {
            Some(OOV_MARKER)
        } else {
            self.forms.get(id as usize).map(String::as_str)
        }
    }

    pub fn encode_sentence(&self, line: &str) -> Vec<TokenId> {
        line.split_whitespace().map(|w| self.id(w)).collect()
    }

    pub fn encode(&self, text: &str) -> Vec<Vec<TokenId>> {
        text.lines().map(|l| self.encode_sentence(l)).collect()
    }

    /// Inverse of [`encode`](Self::encode); unknown forms come back as
    /// [`OOV_MARKER`].
    pub fn decode(&self, encoded: &[Vec<TokenId>]) -> Result<String, IoError> {
        let mut out = String::new();
        for sentence in encoded {
            let mut first = true;
            for &id in sentence {
                let form = self.form(id).ok_or(IoError::IdOutOfRange(id))?;
                if !first {
                    out.push(' ');
                }
                out.push_str(form);
                first = false;
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// `form<TAB>id` lines.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, f) in self.forms.iter().enumerate() {
            writeln!(out, "{f}\t{i}")?;
        }
        out.flush()
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self, IoError> {
        let mut forms = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (form, id) = line.rsplit_once('\t').ok_or_else(|| IoError::Malformed {
                line: n + 1,
                message: "expected form<TAB>id".into(),
            })?;
            let id: usize = id.parse().map_err(|_| IoError::Malformed {
                line: n + 1,
                message: format!("bad id '{id}'"),
            })?;
            if id != forms.len() {
                return Err(IoError::Malformed {
                    line: n + 1,
                    message: format!("ids must be dense and ordered, expected {}", forms.len()),
                });
            }
            forms.push(form.to_string());
        }
        let cap = forms.len();
        Self::from_forms(forms, cap)
    }
}

/// Keeps the `cap` most frequent forms; frequency ties are broken by
/// lexicographic order of the form. The OOV marker itself is never kept.
pub fn build_vocab<I, S>(lines: I, cap: usize) -> Result<VocabMap, IoError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut any = false;
    for line in lines {
        for w in line.as_ref().split_whitespace() {
            any = true;
            if w != OOV_MARKER {
                *counts.entry(w.to_string()).or_default() += 1;
            }
        }
    }
    if !any {
        return Err(IoError::Empty("no tokens in input".into()));
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(cap);
    VocabMap::from_forms(ranked.into_iter().map(|(f, _)| f).collect(), cap)
}

/// Normalized histogram of sentence lengths in `[min, max]`; sentences
/// outside the bounds are dropped.
pub fn fit_length_distribution<I, S>(
    lines: I,
    min: usize,
    max: usize,
) -> Result<LengthDistribution, IoError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    let mut seen = 0usize;
    for line in lines {
        seen += 1;
        *counts
            .entry(line.as_ref().split_whitespace().count())
            .or_default() += 1;
    }
    if seen == 0 {
        return Err(IoError::Empty("no sentences in input".into()));
    }
    LengthDistribution::from_counts(&counts, min, max)
        .map_err(|_| IoError::Empty(format!("every sentence falls outside [{min}, {max}]")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_and_oov() {
        let v = build_vocab(["a a b"], 2).unwrap();
        assert_eq!(v.id("a"), 0);
        assert_eq!(v.id("b"), 1);
        assert_eq!(v.id("c"), v.oov_id());
        assert_eq!(v.oov_id(), 2);
    }

    #[test]
    fn large_cap_keeps_everything() {
        let v = build_vocab(["x y z", "y"], 100).unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.encode("x y z").iter().flatten().all(|&id| id != v.oov_id()));
    }

    #[test]
    fn tie_at_cap_is_lexicographic() {
        let v = build_vocab(["q q y x"], 2).unwrap();
        assert_eq!(v.id("x"), 1);
        assert_eq!(v.id("y"), v.oov_id());
    }

    #[test]
    fn oov_marker_maps_to_oov() {
        let v = build_vocab(["<unk> <unk> a"], 5).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.id("<unk>"), v.oov_id());
    }

    #[test]
    fn empty_input_is_error() {
        assert!(matches!(build_vocab(Vec::<&str>::new(), 3), Err(IoError::Empty(_))));
        assert!(matches!(build_vocab([""], 3), Err(IoError::Empty(_))));
    }

    #[test]
    fn round_trips() {
        let v = build_vocab(["the cat sat", "the dog"], 3).unwrap();
        let text = "the cat sat\n\nthe dog\n";
        let enc = v.encode(text);
        assert_eq!(enc[1], Vec::<TokenId>::new());
        assert_eq!(v.decode(&enc).unwrap(), "the cat <unk>\n\nthe dog\n");
        assert!(matches!(v.decode(&[vec![99]]), Err(IoError::IdOutOfRange(99))));
    }

    #[test]
    fn length_fit() {
        let lines = ["a b c d e f", "a b c d e f", &"w ".repeat(60)];
        let d = fit_length_distribution(lines, 6, 60).unwrap();
        assert!((d.probability(6) - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.probability(60) - 1.0 / 3.0).abs() < 1e-12);
        let d = fit_length_distribution(["a b c", "a b c d e f"], 6, 60).unwrap();
        assert_eq!(d.probability(6), 1.0);
        assert!(fit_length_distribution(["a b"], 6, 60).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let v = build_vocab(["b a a c"], 10).unwrap();
        let mut buf = Vec::new();
        v.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "a\t0\nb\t1\nc\t2\n");
        assert_eq!(VocabMap::read(&buf[..]).unwrap().id("c"), 2);
    }
}

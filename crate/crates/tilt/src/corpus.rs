use tiltlab_core::corpusio::VocabMap;
use tiltlab_core::langgen::{Corpus, TokenId};

/// Id-encoded sentences over `content` ordinary tokens followed by the OOV,
/// MASK and PAD ids, the layout shared by artificial and natural corpora.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenCorpus {
    pub sentences: Vec<Vec<TokenId>>,
    pub content: usize,
}

impl TokenCorpus {
    pub fn new(sentences: Vec<Vec<TokenId>>, content: usize) -> Self {
        Self { sentences, content }
    }

    pub fn from_generated(corpus: &Corpus) -> Self {
        Self::new(corpus.sentences.clone(), corpus.vocabulary.size())
    }

    /// Encodes whitespace-tokenized lines; blank lines are dropped.
    pub fn from_lines<I, S>(lines: I, vocab: &VocabMap) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let sentences = lines
            .into_iter()
            .map(|l| vocab.encode_sentence(l.as_ref()))
            .filter(|s| !s.is_empty())
            .collect();
        Self::new(sentences, vocab.len())
    }

    pub fn oov(&self) -> usize {
        self.content
    }

    pub fn mask(&self) -> usize {
        self.content + 1
    }

    pub fn pad(&self) -> usize {
        self.content + 2
    }

    /// Embedding rows: content, OOV, MASK, PAD.
    pub fn total_ids(&self) -> usize {
        self.content + 3
    }

    /// Classes a language model predicts: content plus OOV.
    pub fn classes(&self) -> usize {
        self.content + 1
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn truncated(&self, n: usize) -> Self {
        Self::new(self.sentences.iter().take(n).cloned().collect(), self.content)
    }
}

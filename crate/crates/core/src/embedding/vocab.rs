use std::collections::HashMap;

use super::EmbeddingError;
use crate::corpus::TokenStream;

/// Word list ordered by descending count, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn from_counts(counts: HashMap<String, u64>) -> Result<Self, EmbeddingError> {
        if counts.is_empty() {
            return Err(EmbeddingError::EmptyCorpus);
        }
        let mut entries: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i as u32))
            .collect();
        let (words, counts) = entries.into_iter().unzip();
        Ok(Vocabulary {
            words,
            counts,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, rank: usize) -> &str {
        &self.words[rank]
    }

    pub fn count(&self, rank: usize) -> u64 {
        self.counts[rank]
    }

    pub fn rank(&self, word: &str) -> Option<usize> {
        self.index.get(word).map(|&i| i as usize)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.words.iter().map(String::as_str).zip(self.counts.iter().copied())
    }

    /// Maps a token stream to vocabulary ranks.
    pub fn encode(&self, corpus: &TokenStream) -> Result<Vec<u32>, EmbeddingError> {
        corpus
            .iter()
            .map(|t| {
                self.index
                    .get(t)
                    .copied()
                    .ok_or_else(|| EmbeddingError::WordMissing(t.to_string()))
            })
            .collect()
    }
}

pub fn build_vocab(corpus: &TokenStream) -> Result<Vocabulary, EmbeddingError> {
    if corpus.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for tok in corpus.iter() {
        *counts.entry(tok).or_insert(0) += 1;
    }
    Vocabulary::from_counts(counts.into_iter().map(|(w, c)| (w.to_string(), c)).collect())
}

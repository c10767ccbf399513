//! Vocabulary, Huffman tree, deterministic SGHS training and the similarity
//! checks between original-corpus and synthetic-corpus tables.

mod huffman;
mod security;
mod table;
mod train;
mod vocab;

use thiserror::Error;

pub use huffman::{build_huffman, HuffmanTree};
pub use security::{
    check_security_conditions, check_word, cosine_sim, nearest_neighbors, shared_similarities,
    SecurityReport,
};
pub use table::{TableParams, WordVectorTable};
pub use train::{
    dot, init_vector, init_vectors, train_ids, train_sghs, TrainedModel, TrainingConfig,
    ALPHA_UPDATE_EVERY,
};
pub use vocab::{build_vocab, Vocabulary};

/// Magnitude beyond which sigmoid inputs saturate.
pub const SIGMOID_CLAMP: f64 = 30.0;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary needs at least two words for a Huffman tree")]
    DegenerateVocab,
    #[error("non-finite value while training word {word:?}")]
    NonFiniteUpdate { word: String },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("word {0:?} is not in the table")]
    WordMissing(String),
    #[error("tables share no words")]
    NoSharedWords,
    #[error("fewer than {0} neighbours available")]
    NotEnoughNeighbors(usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("table shape mismatch: {words} words, d={d}, {values} values")]
    Shape { words: usize, d: usize, values: usize },
    #[error("duplicate word {0:?}")]
    DuplicateWord(String),
    #[error("corrupt vector table: {0}")]
    CorruptTable(String),
}

/// Logistic function with its input clamped to `±SIGMOID_CLAMP`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_symmetric() {
        for i in -400..=400 {
            let x = i as f64 * 0.1;
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() <= 1e-15, "x={x}");
        }
        assert!(sigmoid(1e300).is_finite());
        assert_eq!(sigmoid(1e300), sigmoid(SIGMOID_CLAMP));
    }
}

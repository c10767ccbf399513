//! Symmetric text cipher whose codebook is derived from a key-addressed
//! synthetic corpus.
//!
//! Stage one builds the codebook: the key selects an incremental corpus from
//! a document store, the combined corpus trains word vectors
//! deterministically, and the vectors are quantized and hashed into per-word
//! SHA-256 chains. Stage two encrypts a word by emitting the head of its
//! chain and decrypts by inverse lookup, with nearest-Hamming recovery when a
//! symbol has been tampered with.

pub mod cipher;
pub mod codebook;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod fixtures;
pub mod key;
pub mod pipeline;

pub use cipher::{CipherError, RecoveryPolicy, SessionState};
pub use codebook::{Codebook, CodebookError, Digest256};
pub use corpus::{CorpusError, DocumentStore, TokenStream};
pub use embedding::{EmbeddingError, TrainingConfig, WordVectorTable};
pub use key::{Key, KeyError, KeyLayout, Seed};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
    #[error(transparent)]
    Cipher(#[from] CipherError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
}

//! Stage one end to end: key → corpus → vectors → codebook.

use std::time::{Duration, Instant};

use crate::cipher::{Role, SessionState};
use crate::codebook::{build_codebook, Codebook};
use crate::corpus::{build_synthetic, expand_graph, DocumentStore, SyntheticCorpus, TokenStream, UpdateSchedule};
use crate::embedding::{build_huffman, build_vocab, train_sghs, HuffmanTree, TrainedModel, TrainingConfig, Vocabulary};
use crate::key::{derive_params, Key};
use crate::Error;

/// Everything produced by one training run over a corpus.
#[derive(Debug, Clone)]
pub struct Built {
    pub vocab: Vocabulary,
    pub tree: HuffmanTree,
    pub model: TrainedModel,
    pub codebook: Codebook,
}

pub fn train_model(corpus: &TokenStream, cfg: &TrainingConfig) -> Result<(Vocabulary, HuffmanTree, TrainedModel), Error> {
    let vocab = build_vocab(corpus)?;
    let tree = build_huffman(&vocab)?;
    let model = train_sghs(corpus, &vocab, &tree, cfg)?;
    Ok((vocab, tree, model))
}

pub fn train_and_build(corpus: &TokenStream, cfg: &TrainingConfig) -> Result<Built, Error> {
    let (vocab, tree, model) = train_model(corpus, cfg)?;
    let codebook = build_codebook(&model.vectors)?;
    Ok(Built {
        vocab,
        tree,
        model,
        codebook,
    })
}

/// Training configuration for `key`: dimension and seed come from the key,
/// everything else from the shared algorithm settings in `base`.
pub fn training_for(key: &Key, base: &TrainingConfig) -> TrainingConfig {
    let p = derive_params(key);
    TrainingConfig {
        d: p.d,
        seed: p.seed,
        ..*base
    }
}

/// The synthetic corpus selected by `key` from `store`.
pub fn build_corpus(key: &Key, store: &DocumentStore, original: &TokenStream) -> Result<SyntheticCorpus, Error> {
    let p = derive_params(key);
    let graph = expand_graph(store, key.n1, p.r)?;
    Ok(build_synthetic(original, store, &graph)?)
}

#[derive(Debug, Clone)]
pub struct StageOne {
    pub corpus: SyntheticCorpus,
    pub training: TrainingConfig,
    pub built: Built,
    pub elapsed: Duration,
}

impl StageOne {
    pub fn session(&self, role: Role, schedule: UpdateSchedule) -> SessionState {
        SessionState::new(
            role,
            self.built.codebook.clone(),
            self.corpus.clone(),
            self.training,
            schedule,
        )
    }
}

pub fn stage_one(
    key: &Key,
    store: &DocumentStore,
    original: &TokenStream,
    base: &TrainingConfig,
) -> Result<StageOne, Error> {
    let start = Instant::now();
    let corpus = build_corpus(key, store, original)?;
    let training = training_for(key, base);
    let built = train_and_build(&corpus.synthetic(), &training)?;
    Ok(StageOne {
        corpus,
        training,
        built,
        elapsed: start.elapsed(),
    })
}

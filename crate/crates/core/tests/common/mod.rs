#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tedl::fixtures::{citation_store, TextGenerator};
use tedl::pipeline::{stage_one, StageOne};
use tedl::{DocumentStore, Key, Seed, TokenStream, TrainingConfig};

pub struct Small {
    pub gen: TextGenerator,
    pub original: TokenStream,
    pub store: DocumentStore,
    pub key: Key,
    pub base: TrainingConfig,
}

/// A few thousand tokens with d = 10: seconds to train.
pub fn small() -> Small {
    let gen = TextGenerator::new(600, 1.0, 11);
    let original = gen.tokens(6_000, &mut ChaCha8Rng::seed_from_u64(12));
    let store = citation_store(&gen, 40, 25, 3, 13);
    let key = Key {
        n1: 5,
        n2: 1,
        n3: 0,
        n4: Seed::from_u64(1),
    };
    let base = TrainingConfig::new(10, Seed::from_u64(0));
    Small {
        gen,
        original,
        store,
        key,
        base,
    }
}

impl Small {
    pub fn build(&self) -> StageOne {
        stage_one(&self.key, &self.store, &self.original, &self.base).unwrap()
    }
}

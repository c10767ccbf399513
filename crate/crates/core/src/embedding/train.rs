//! Deterministic skip-gram training with hierarchical softmax.
//!
//! Everything here is single-threaded and runs in a fixed operation order,
//! so two runs over the same corpus bytes and configuration produce
//! bit-identical tables on one platform. There is no negative sampling, no
//! frequent-word subsampling and no random window shrinking.

use sha2::{Digest, Sha256};

use super::{sigmoid, EmbeddingError, HuffmanTree, TableParams, Vocabulary, WordVectorTable};
use crate::corpus::TokenStream;
use crate::key::Seed;

/// Tokens between learning-rate updates.
pub const ALPHA_UPDATE_EVERY: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub window: usize,
    pub epochs: usize,
    pub alpha_start: f64,
    pub alpha_min: f64,
    pub d: usize,
    pub seed: Seed,
}

impl TrainingConfig {
    pub fn new(d: usize, seed: Seed) -> Self {
        TrainingConfig {
            window: 5,
            epochs: 2,
            alpha_start: 0.025,
            alpha_min: 0.0001,
            d,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |m: &str| Err(EmbeddingError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.d == 0 {
            return bad("dimension must be positive");
        }
        if !(self.alpha_start > self.alpha_min && self.alpha_min > 0.0) {
            return bad("need alpha_start > alpha_min > 0");
        }
        Ok(())
    }

    /// With a single pass, words seen only before the increment can keep
    /// their original vectors exactly.
    pub fn single_epoch_hazard(&self) -> bool {
        self.epochs == 1
    }

    /// Applies `key=value` lines (`window`, `epochs`, `alpha_start`,
    /// `alpha_min`); `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), EmbeddingError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || EmbeddingError::InvalidConfig(format!("line {}: {raw:?}", i + 1));
            let (k, v) = line.split_once('=').ok_or_else(bad)?;
            let v = v.trim();
            match k.trim() {
                "window" => self.window = v.parse().map_err(|_| bad())?,
                "epochs" => self.epochs = v.parse().map_err(|_| bad())?,
                "alpha_start" => self.alpha_start = v.parse().map_err(|_| bad())?,
                "alpha_min" => self.alpha_min = v.parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        self.validate()
    }

    pub fn to_kv(&self) -> String {
        format!(
            "window={}\nepochs={}\nalpha_start={}\nalpha_min={}\n",
            self.window, self.epochs, self.alpha_start, self.alpha_min
        )
    }
}

/// Output of training: the word table plus the inner-unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub vectors: WordVectorTable,
    /// Row-major `(|V| - 1) × d` inner-unit vectors.
    pub inner: Vec<f64>,
}

impl TrainedModel {
    pub fn inner_row(&self, unit: usize) -> &[f64] {
        let d = self.vectors.dim();
        &self.inner[unit * d..(unit + 1) * d]
    }
}

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;

/// Seeded starting vector for one word.
///
/// `s = SHA-256(word ‖ decimal(seed))`; the stream `SHA-256(s ‖ k_be64)` for
/// `k = 0, 1, ...` is cut into big-endian `u64` chunks `u`, each giving the
/// component `(u / 2^64 - 0.5) / d`.
pub fn init_vector(word: &str, seed: &Seed, d: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(word.as_bytes());
    h.update(seed.to_decimal().as_bytes());
    let s = h.finalize();
    let mut out = Vec::with_capacity(d);
    let mut block_idx = 0u64;
    while out.len() < d {
        let mut h = Sha256::new();
        h.update(s);
        h.update(block_idx.to_be_bytes());
        let block = h.finalize();
        for chunk in block.chunks_exact(8) {
            if out.len() == d {
                break;
            }
            let u = u64::from_be_bytes(chunk.try_into().unwrap());
            out.push((u as f64 / TWO_POW_64 - 0.5) / d as f64);
        }
        block_idx += 1;
    }
    out
}

pub fn init_vectors(vocab: &Vocabulary, seed: &Seed, d: usize) -> WordVectorTable {
    let mut data = Vec::with_capacity(vocab.len() * d);
    for w in vocab.words() {
        data.extend(init_vector(w, seed, d));
    }
    WordVectorTable::new(vocab.words().to_vec(), data, d).expect("init vectors are finite")
}

/// Dot product with eight fixed accumulation lanes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Trains on `corpus`, whose tokens must all be in `vocab`.
pub fn train_sghs(
    corpus: &TokenStream,
    vocab: &Vocabulary,
    tree: &HuffmanTree,
    cfg: &TrainingConfig,
) -> Result<TrainedModel, EmbeddingError> {
    let ids = vocab.encode(corpus)?;
    train_ids(&ids, vocab, tree, cfg)
}

/// As [`train_sghs`], over an already-encoded corpus.
pub fn train_ids(
    ids: &[u32],
    vocab: &Vocabulary,
    tree: &HuffmanTree,
    cfg: &TrainingConfig,
) -> Result<TrainedModel, EmbeddingError> {
    cfg.validate()?;
    if tree.leaves() != vocab.len() {
        return Err(EmbeddingError::InvalidConfig(
            "tree was not built from this vocabulary".into(),
        ));
    }
    if cfg.single_epoch_hazard() {
        log::warn!("training with a single epoch: some vectors may equal their unperturbed values");
    }
    let d = cfg.d;
    let mut vectors = init_vectors(vocab, &cfg.seed, d);
    let mut inner = vec![0.0f64; tree.inner_units() * d];
    let mut err = vec![0.0f64; d];
    let len = ids.len();
    let total = (cfg.epochs as u64 * len as u64) as f64;
    let window = cfg.window;
    let mut alpha = cfg.alpha_start;
    let mut processed: u64 = 0;
    let syn0 = vectors.data_mut();

    for _epoch in 0..cfg.epochs {
        for t in 0..len {
            if processed.is_multiple_of(ALPHA_UPDATE_EVERY) {
                alpha = (cfg.alpha_start * (1.0 - processed as f64 / total)).max(cfg.alpha_min);
            }
            processed += 1;
            let w = ids[t] as usize;
            let lo = t.saturating_sub(window);
            let hi = (t + window).min(len - 1);
            for pos in lo..=hi {
                if pos == t {
                    continue;
                }
                let c = ids[pos] as usize;
                let (nodes, left) = tree.path(c);
                err.fill(0.0);
                let hidden = &syn0[w * d..(w + 1) * d];
                for (&node, &is_left) in nodes.iter().zip(left) {
                    let out = &mut inner[node as usize * d..(node as usize + 1) * d];
                    let x = dot(hidden, out);
                    if !x.is_finite() {
                        return Err(EmbeddingError::NonFiniteUpdate {
                            word: vocab.word(w).to_string(),
                        });
                    }
                    let f = sigmoid(x);
                    let label = if is_left { 1.0 } else { 0.0 };
                    let g = alpha * (label - f);
                    axpy(&mut err, g, out);
                    axpy(out, g, hidden);
                }
                axpy(&mut syn0[w * d..(w + 1) * d], 1.0, &err);
            }
        }
    }
    if let Some(bad) = syn0.iter().position(|x| !x.is_finite()) {
        return Err(EmbeddingError::NonFiniteUpdate {
            word: vocab.word(bad / d).to_string(),
        });
    }
    vectors.params = Some(TableParams {
        window: cfg.window,
        epochs: cfg.epochs,
        seed: cfg.seed,
    });
    Ok(TrainedModel { vectors, inner })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{build_huffman, build_vocab};

    fn corpus(text: &str) -> TokenStream {
        text.split_whitespace().collect()
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = init_vector("the", &Seed::from_u64(1), 10);
        assert_eq!(a, init_vector("the", &Seed::from_u64(1), 10));
        let b = init_vector("the", &Seed::from_u64(2), 10);
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
        assert!(a.iter().all(|x| x.abs() <= 0.05));
        // longer vectors extend the same stream
        let long = init_vector("the", &Seed::from_u64(1), 13);
        for (x, y) in a.iter().zip(&long) {
            assert!((x * 10.0 - y * 13.0).abs() < 1e-15);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainingConfig::new(10, Seed::from_u64(1));
        assert!(cfg.validate().is_ok());
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
        cfg.epochs = 1;
        assert!(cfg.validate().is_ok());
        assert!(cfg.single_epoch_hazard());
        cfg.alpha_min = cfg.alpha_start;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn kv_config() {
        let mut cfg = TrainingConfig::new(10, Seed::from_u64(1));
        cfg.apply_kv("window = 3\n# comment\nepochs=4 # trailing\n").unwrap();
        assert_eq!((cfg.window, cfg.epochs), (3, 4));
        let mut other = TrainingConfig::new(10, Seed::from_u64(1));
        other.apply_kv(&cfg.to_kv()).unwrap();
        assert_eq!(other, cfg);
        assert!(cfg.apply_kv("colour=blue").is_err());
        assert!(cfg.apply_kv("epochs=0").is_err());
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..21).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..21).map(|i| (i as f64 * 0.11).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-14);
    }

    #[test]
    fn training_is_deterministic() {
        let c = corpus("a b c a b d a c e f a b");
        let v = build_vocab(&c).unwrap();
        let t = build_huffman(&v).unwrap();
        let mut cfg = TrainingConfig::new(10, Seed::from_u64(7));
        cfg.window = 2;
        let m1 = train_sghs(&c, &v, &t, &cfg).unwrap();
        let m2 = train_sghs(&c, &v, &t, &cfg).unwrap();
        let bits = |m: &TrainedModel| m.vectors.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&m1), bits(&m2));
        assert_ne!(m1.vectors, init_vectors(&v, &cfg.seed, 10));
    }

    #[test]
    fn skips_nothing_and_rejects_bad_config() {
        let c = corpus("x y");
        let v = build_vocab(&c).unwrap();
        let t = build_huffman(&v).unwrap();
        let mut cfg = TrainingConfig::new(10, Seed::from_u64(1));
        cfg.epochs = 0;
        assert!(matches!(
            train_sghs(&c, &v, &t, &cfg),
            Err(EmbeddingError::InvalidConfig(_))
        ));
    }
}

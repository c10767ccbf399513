//! Two-party session engine over a mirrored codebook.

use std::fmt::Write as _;

use thiserror::Error;

use crate::codebook::{Codebook, Digest256};
use crate::corpus::{update_corpus, DocumentStore, SyntheticCorpus, TokenStream, UpdateMode, UpdateSchedule};
use crate::embedding::TrainingConfig;
use crate::key::Seed;
use crate::pipeline;

const CT_MAGIC: &[u8; 7] = b"TEDLCT1";

#[derive(Debug, Error)]
pub enum CipherError {
    #[error("out-of-vocabulary words: {}", list_positions(.0))]
    OutOfVocabulary(Vec<(usize, String)>),
    #[error("no unique nearest valid hash: {0}")]
    RecoveryFailed(String),
    #[error("valid hash maps to several words: {0:?}")]
    AmbiguousHash(Vec<String>),
    #[error("candidates tie at distance {distance}")]
    Tie { distance: u32, candidates: Vec<usize> },
    #[error("recovery limit {0} exceeds 256 bits")]
    InvalidPolicy(u32),
    #[error("no valid hashes to recover against")]
    EmptyValidSet,
    #[error("round boundary reached after {0} words; run the update barrier first")]
    BarrierPending(u64),
    #[error("update barrier not due: {transmitted} of {boundary} words transmitted")]
    BarrierNotDue { transmitted: u64, boundary: u64 },
    #[error("corrupt ciphertext: {0}")]
    CorruptCiphertext(String),
    #[error("session state diverged: {0}")]
    StateDivergence(String),
    #[error(transparent)]
    Pipeline(#[from] Box<crate::Error>),
}

fn list_positions(items: &[(usize, String)]) -> String {
    let mut s = String::new();
    for (i, (pos, w)) in items.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "{w:?} at {pos}");
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Sender,
    Receiver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiePolicy {
    #[default]
    Fail,
    /// Pick the lexicographically first word among tied candidates.
    FirstLexicographic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecoveryPolicy {
    pub max_distance: Option<u32>,
    pub on_tie: TiePolicy,
}

/// Ordered 256-bit ciphertext symbols.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CiphertextStream {
    pub symbols: Vec<Digest256>,
}

impl CiphertextStream {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Binary form: magic, little-endian `u64` count, then raw symbols.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(15 + 32 * self.symbols.len());
        out.extend_from_slice(CT_MAGIC);
        out.extend_from_slice(&(self.symbols.len() as u64).to_le_bytes());
        for s in &self.symbols {
            out.extend_from_slice(s.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CipherError> {
        let bad = |m: &str| CipherError::CorruptCiphertext(m.to_string());
        if bytes.len() < 15 || &bytes[..7] != CT_MAGIC {
            return Err(bad("bad magic"));
        }
        let count = u64::from_le_bytes(bytes[7..15].try_into().unwrap()) as usize;
        let body = &bytes[15..];
        if body.len() != count.checked_mul(32).ok_or_else(|| bad("bad count"))? {
            return Err(bad("length does not match count"));
        }
        Ok(CiphertextStream {
            symbols: body
                .chunks_exact(32)
                .map(|c| Digest256(c.try_into().unwrap()))
                .collect(),
        })
    }

    /// One 64-digit hex line per symbol.
    pub fn to_hex_lines(&self) -> String {
        let mut out = String::with_capacity(65 * self.symbols.len());
        for s in &self.symbols {
            out.push_str(&s.to_hex());
            out.push('\n');
        }
        out
    }

    pub fn from_hex_lines(text: &str) -> Result<Self, CipherError> {
        let symbols = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let l = l.trim();
                if l.len() != 64 {
                    return Err(CipherError::CorruptCiphertext(format!("line {}: expected 64 hex digits", i + 1)));
                }
                Digest256::from_hex(l)
                    .ok_or_else(|| CipherError::CorruptCiphertext(format!("line {}: bad hex", i + 1)))
            })
            .collect::<Result<_, _>>()?;
        Ok(CiphertextStream { symbols })
    }
}

/// Nearest valid hash by Hamming distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nearest {
    pub index: usize,
    pub distance: u32,
}

/// Minimum-distance candidate among `valid`; ties are reported as
/// [`CipherError::Tie`] with every tied index.
pub fn recover(symbol: &Digest256, valid: &[Digest256]) -> Result<Nearest, CipherError> {
    let (best, ties) = nearest_with_ties(symbol, valid.iter().copied())?;
    if ties.len() > 1 {
        return Err(CipherError::Tie {
            distance: best,
            candidates: ties,
        });
    }
    Ok(Nearest {
        index: ties[0],
        distance: best,
    })
}

fn nearest_with_ties(
    symbol: &Digest256,
    valid: impl Iterator<Item = Digest256>,
) -> Result<(u32, Vec<usize>), CipherError> {
    let mut best = u32::MAX;
    let mut ties = Vec::new();
    for (i, h) in valid.enumerate() {
        let dist = symbol.hamming(&h);
        if dist < best {
            best = dist;
            ties.clear();
            ties.push(i);
        } else if dist == best {
            ties.push(i);
        }
    }
    if ties.is_empty() {
        return Err(CipherError::EmptyValidSet);
    }
    Ok((best, ties))
}

/// Applies `policy` to pick the recovered word rank in `codebook`.
pub fn recover_in(
    codebook: &Codebook,
    symbol: &Digest256,
    policy: &RecoveryPolicy,
) -> Result<Nearest, CipherError> {
    if let Some(max) = policy.max_distance.filter(|&m| m > 256) {
        return Err(CipherError::InvalidPolicy(max));
    }
    let (distance, ties) = nearest_with_ties(symbol, codebook.valid_hashes())?;
    if let Some(max) = policy.max_distance {
        if distance > max {
            return Err(CipherError::RecoveryFailed(format!(
                "nearest valid hash is {distance} bits away, limit {max}"
            )));
        }
    }
    let index = match (ties.len(), policy.on_tie) {
        (1, _) => ties[0],
        (_, TiePolicy::Fail) => {
            return Err(CipherError::RecoveryFailed(format!(
                "{} candidates tie at distance {distance}",
                ties.len()
            )))
        }
        (_, TiePolicy::FirstLexicographic) => *ties
            .iter()
            .min_by(|&&a, &&b| codebook.words()[a].cmp(&codebook.words()[b]))
            .unwrap(),
    };
    Ok(Nearest { index, distance })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decrypted {
    pub word: String,
    pub recovered: bool,
    /// Hamming distance to the matched valid hash.
    pub distance: u32,
    /// The word's chain counter after the advance.
    pub counter: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Exact,
    Recovered { distance: u32 },
    Failed(String),
}

/// Per-position result of decrypting a stream.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecryptReport {
    pub words: Vec<Option<String>>,
    pub outcomes: Vec<Outcome>,
    pub counters: Vec<Option<u64>>,
}

impl DecryptReport {
    pub fn recovered_positions(&self) -> Vec<usize> {
        self.outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| matches!(o, Outcome::Recovered { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn failed_positions(&self) -> Vec<usize> {
        self.outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| matches!(o, Outcome::Failed(_)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Recovered plaintext when every position decrypted.
    pub fn plaintext(&self) -> Option<Vec<String>> {
        self.words.iter().cloned().collect()
    }

    /// Line-oriented transcript: `position<TAB>word<TAB>recovered<TAB>counter`.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for (i, ((w, o), c)) in self.words.iter().zip(&self.outcomes).zip(&self.counters).enumerate() {
            let rec = match o {
                Outcome::Exact => "0".to_string(),
                Outcome::Recovered { distance } => format!("1:{distance}"),
                Outcome::Failed(_) => "failed".to_string(),
            };
            let _ = writeln!(
                out,
                "{i}\t{}\t{rec}\t{}",
                w.as_deref().unwrap_or("?"),
                c.map_or("-".to_string(), |c| c.to_string())
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Barrier {
    /// Update the synthetic corpus, retrain and rebuild.
    Corpus(UpdateMode),
    /// Replace the seed from a reserved hash, retrain and rebuild.
    Reseed,
}

/// One party's mirrored state.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub codebook: Codebook,
    pub schedule: UpdateSchedule,
    pub words_transmitted: u64,
    pub role: Role,
    pub corpus: SyntheticCorpus,
    pub training: TrainingConfig,
    round_plaintext: TokenStream,
}

impl SessionState {
    pub fn new(
        role: Role,
        codebook: Codebook,
        corpus: SyntheticCorpus,
        training: TrainingConfig,
        schedule: UpdateSchedule,
    ) -> Self {
        SessionState {
            codebook,
            schedule,
            words_transmitted: 0,
            role,
            corpus,
            training,
            round_plaintext: TokenStream::new(),
        }
    }

    /// Resumes a saved state mid-round.
    pub fn with_progress(mut self, words_transmitted: u64, round_plaintext: TokenStream) -> Self {
        self.words_transmitted = words_transmitted;
        self.round_plaintext = round_plaintext;
        self
    }

    /// Plaintext words of the current round.
    pub fn round_plaintext(&self) -> &TokenStream {
        &self.round_plaintext
    }

    pub fn barrier_due(&self) -> bool {
        self.schedule.interval > 0 && self.words_transmitted >= self.schedule.boundary()
    }

    fn check_barrier(&self) -> Result<(), CipherError> {
        if self.barrier_due() {
            Err(CipherError::BarrierPending(self.words_transmitted))
        } else {
            Ok(())
        }
    }

    fn record(&mut self, rank: usize) {
        self.words_transmitted += 1;
        self.round_plaintext.push(&self.codebook.words()[rank]);
    }

    pub fn encrypt_word(&mut self, word: &str) -> Result<Digest256, CipherError> {
        self.check_barrier()?;
        let rank = self
            .codebook
            .rank(word)
            .ok_or_else(|| CipherError::OutOfVocabulary(vec![(0, word.to_string())]))?;
        let symbol = self.codebook.advance(rank);
        self.record(rank);
        Ok(symbol)
    }

    pub fn decrypt_symbol(
        &mut self,
        symbol: &Digest256,
        policy: &RecoveryPolicy,
    ) -> Result<Decrypted, CipherError> {
        self.check_barrier()?;
        let (rank, recovered, distance) = match self.codebook.lookup(symbol) {
            [r] => (*r, false, 0),
            [] => {
                let n = recover_in(&self.codebook, symbol, policy)?;
                (n.index, true, n.distance)
            }
            many => {
                return Err(CipherError::AmbiguousHash(
                    many.iter().map(|&r| self.codebook.words()[r].clone()).collect(),
                ))
            }
        };
        // Recovered words advance too, so the receiver stays in step.
        self.codebook.advance(rank);
        self.record(rank);
        Ok(Decrypted {
            word: self.codebook.words()[rank].clone(),
            recovered,
            distance,
            counter: self.codebook.entry(rank).counter(),
        })
    }

    /// Encrypts every word, or none if any is out of vocabulary or the
    /// message would run past the round boundary.
    pub fn encrypt_message<S: AsRef<str>>(&mut self, words: &[S]) -> Result<CiphertextStream, CipherError> {
        let missing: Vec<(usize, String)> = words
            .iter()
            .enumerate()
            .filter(|(_, w)| self.codebook.rank(w.as_ref()).is_none())
            .map(|(i, w)| (i, w.as_ref().to_string()))
            .collect();
        if !missing.is_empty() {
            return Err(CipherError::OutOfVocabulary(missing));
        }
        if self.schedule.interval > 0 {
            let room = self.schedule.boundary().saturating_sub(self.words_transmitted);
            if (words.len() as u64) > room {
                return Err(CipherError::BarrierPending(self.words_transmitted + room));
            }
        }
        let mut symbols = Vec::with_capacity(words.len());
        for w in words {
            symbols.push(self.encrypt_word(w.as_ref())?);
        }
        Ok(CiphertextStream { symbols })
    }

    /// Decrypts every symbol, recording per-position outcomes.
    pub fn decrypt_message(&mut self, stream: &CiphertextStream, policy: &RecoveryPolicy) -> DecryptReport {
        let mut report = DecryptReport::default();
        for s in &stream.symbols {
            match self.decrypt_symbol(s, policy) {
                Ok(d) => {
                    report.outcomes.push(if d.recovered {
                        Outcome::Recovered { distance: d.distance }
                    } else {
                        Outcome::Exact
                    });
                    report.counters.push(Some(d.counter));
                    report.words.push(Some(d.word));
                }
                Err(e) => {
                    report.outcomes.push(Outcome::Failed(e.to_string()));
                    report.counters.push(None);
                    report.words.push(None);
                }
            }
        }
        report
    }

    /// Seed for the next training: the reserved hash of the
    /// lexicographically first vocabulary word, read as a big-endian integer.
    pub fn next_seed(&self) -> Seed {
        let first = (0..self.codebook.len())
            .min_by(|&a, &b| self.codebook.words()[a].cmp(&self.codebook.words()[b]))
            .expect("codebook is not empty");
        Seed(self.codebook.entry(first).reserved().0)
    }

    /// Installs [`next_seed`](Self::next_seed) as the training seed.
    pub fn seed_update(&mut self) -> Seed {
        let seed = self.next_seed();
        self.training.seed = seed;
        seed
    }

    /// Runs an update barrier: both parties perform the same computation, so
    /// their codebooks stay identical. The message counter carries over.
    /// Returns the freshly trained model behind the new codebook.
    pub fn run_update_barrier(&mut self, store: &DocumentStore, barrier: Barrier) -> Result<pipeline::Built, CipherError> {
        if !self.barrier_due() {
            return Err(CipherError::BarrierNotDue {
                transmitted: self.words_transmitted,
                boundary: self.schedule.boundary(),
            });
        }
        match barrier {
            Barrier::Corpus(mode) => {
                let schedule = UpdateSchedule { mode, ..self.schedule };
                self.corpus = update_corpus(&self.corpus, &schedule, Some(&self.round_plaintext), store)
                    .map_err(|e| Box::new(e.into()))?;
            }
            Barrier::Reseed => {
                self.seed_update();
            }
        }
        let built = pipeline::train_and_build(&self.corpus.synthetic(), &self.training).map_err(Box::new)?;
        self.codebook = built.codebook.clone();
        self.round_plaintext = TokenStream::new();
        self.schedule.round += 1;
        Ok(built)
    }

    /// Fails when the two states' codebooks or counters differ.
    pub fn check_mirrored(&self, other: &SessionState) -> Result<(), CipherError> {
        if self.words_transmitted != other.words_transmitted {
            return Err(CipherError::StateDivergence(format!(
                "word counters differ: {} vs {}",
                self.words_transmitted, other.words_transmitted
            )));
        }
        if self.schedule.round != other.schedule.round {
            return Err(CipherError::StateDivergence("round indices differ".into()));
        }
        if self.codebook != other.codebook {
            return Err(CipherError::StateDivergence("codebooks differ".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::build_codebook;
    use crate::embedding::WordVectorTable;

    fn sample_codebook() -> Codebook {
        let words: Vec<String> = ["apple", "banana", "cherry", "date"].iter().map(|s| s.to_string()).collect();
        let data: Vec<f64> = (0..40).map(|i| ((i * 7 + 3) as f64).ln() * 0.013).collect();
        build_codebook(&WordVectorTable::new(words, data, 10).unwrap()).unwrap()
    }

    #[test]
    fn recover_basics() {
        let a = Digest256::sha256(b"a");
        let b = Digest256::sha256(b"b");
        assert_eq!(recover(&a, &[b, a]).unwrap(), Nearest { index: 1, distance: 0 });
        let mut t = b;
        t.flip_bit(3);
        assert_eq!(recover(&t, &[b]).unwrap().index, 0);
        assert!(matches!(recover(&a, &[]), Err(CipherError::EmptyValidSet)));
        let zero = Digest256([0; 32]);
        let mut x = zero;
        x.flip_bit(0);
        let mut y = zero;
        y.flip_bit(1);
        assert!(matches!(recover(&zero, &[x, y]), Err(CipherError::Tie { distance: 1, .. })));
    }

    #[test]
    fn tie_policies() {
        let cb = sample_codebook();
        // a symbol equidistant from two heads: take bits from each alternately
        // ties need an even distance between the two heads
        let (a, b) = (0..4)
            .flat_map(|a| (a + 1..4).map(move |b| (a, b)))
            .find(|&(a, b)| cb.entry(a).head().hamming(&cb.entry(b).head()).is_multiple_of(2))
            .expect("some pair of heads is an even distance apart");
        let h0 = cb.entry(a).head();
        let h1 = cb.entry(b).head();
        let diff: Vec<usize> = (0..256)
            .filter(|&i| (h0.0[i / 8] ^ h1.0[i / 8]) & (0x80 >> (i % 8)) != 0)
            .collect();
        let mut sym = h0;
        for &i in diff.iter().take(diff.len() / 2) {
            sym.flip_bit(i);
        }
        assert_eq!(sym.hamming(&h0), sym.hamming(&h1));
        let others_far = (0..4)
            .filter(|&r| r != a && r != b)
            .all(|r| cb.entry(r).head().hamming(&sym) > sym.hamming(&h0));
        if others_far {
            let fail = RecoveryPolicy::default();
            assert!(matches!(recover_in(&cb, &sym, &fail), Err(CipherError::RecoveryFailed(_))));
            let lex = RecoveryPolicy {
                on_tie: TiePolicy::FirstLexicographic,
                ..Default::default()
            };
            assert_eq!(recover_in(&cb, &sym, &lex).unwrap().index, a);
        }
        let strict = RecoveryPolicy {
            max_distance: Some(0),
            ..Default::default()
        };
        let mut near = h0;
        near.flip_bit(9);
        assert!(matches!(recover_in(&cb, &near, &strict), Err(CipherError::RecoveryFailed(_))));
    }

    #[test]
    fn ciphertext_formats() {
        let s = CiphertextStream {
            symbols: vec![Digest256::sha256(b"1"), Digest256::sha256(b"2")],
        };
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..7], b"TEDLCT1");
        assert_eq!(bytes.len(), 7 + 8 + 64);
        assert_eq!(CiphertextStream::from_bytes(&bytes).unwrap(), s);
        assert!(CiphertextStream::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert_eq!(CiphertextStream::from_hex_lines(&s.to_hex_lines()).unwrap(), s);
        assert!(CiphertextStream::from_hex_lines("abc\n").is_err());
        assert!(CiphertextStream::from_bytes(&CiphertextStream::default().to_bytes()).unwrap().is_empty());
    }
}

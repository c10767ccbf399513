//! Desk-scale measurements: recovery accuracy, correlation and sensitivity
//! of symbols, frequency flattening, the factorization diagnostic and
//! stage-one timing.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;
use std::io::Write;
use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use crate::cipher::recover;
use crate::codebook::{Codebook, Digest256};
use crate::embedding::{dot, shared_similarities, EmbeddingError, HuffmanTree, TrainedModel, WordVectorTable};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("inputs have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no (word, inner unit) pair has both left and right traversals")]
    NoEligiblePairs,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("tamper count {0} exceeds 256 bits")]
    TamperTooLarge(u32),
    #[error("{metric} = {value} outside {band}")]
    AssertionFailed { metric: String, value: f64, band: String },
    #[error("fit needs at least two distinct x values")]
    DegenerateFit,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("writing report: {0}")]
    Csv(#[from] csv::Error),
}

fn check_len(a: &[u8], b: &[u8]) -> Result<(), EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

fn differing_bits(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as u64).sum()
}

/// Fraction of equal bits: zeros of `a ⊕ b` over the bit length.
pub fn correlation_rxy(a: &[u8], b: &[u8]) -> Result<f64, EvalError> {
    check_len(a, b)?;
    let bits = 8 * a.len() as u64;
    Ok((bits - differing_bits(a, b)) as f64 / bits as f64)
}

/// Fraction of differing bits.
pub fn crc(a: &[u8], b: &[u8]) -> Result<f64, EvalError> {
    check_len(a, b)?;
    Ok(differing_bits(a, b) as f64 / (8 * a.len()) as f64)
}

/// Summary of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Summary {
            count: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: sorted[0],
            median: quantile_sorted(&sorted, 0.5),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Linear-interpolated quantile of an ascending sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Named sample with its configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub metric: String,
    pub samples: Vec<(String, f64)>,
    pub config: Vec<(String, String)>,
    /// Fixed decimals for written values; shortest round-trip form if `None`.
    pub decimals: Option<usize>,
}

impl MetricsReport {
    pub fn new(metric: impl Into<String>) -> Self {
        MetricsReport {
            metric: metric.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, id: impl Into<String>, value: f64) {
        self.samples.push((id.into(), value));
    }

    pub fn with_config(mut self, key: &str, value: impl ToString) -> Self {
        self.config.push((key.to_string(), value.to_string()));
        self
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }

    pub fn summary(&self) -> Option<Summary> {
        Summary::of(&self.values())
    }

    /// `metric,sample,value` rows; configuration goes to `#` comment lines first.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), EvalError> {
        for (k, v) in &self.config {
            writeln!(out, "# {k}={v}").map_err(csv::Error::from)?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "sample", "value"])?;
        for (id, v) in &self.samples {
            let v = match self.decimals {
                Some(p) => format!("{v:.p$}"),
                None => v.to_string(),
            };
            w.write_record([self.metric.as_str(), id, &v])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Fails unless `lo <= value <= hi`.
    pub fn assert_band(metric: &str, value: f64, lo: f64, hi: f64) -> Result<(), EvalError> {
        if (lo..=hi).contains(&value) {
            Ok(())
        } else {
            Err(EvalError::AssertionFailed {
                metric: metric.to_string(),
                value,
                band: format!("[{lo}, {hi}]"),
            })
        }
    }
}

/// Flips `bits` distinct uniformly chosen bit positions.
pub fn tamper<R: Rng + ?Sized>(symbol: &Digest256, bits: u32, rng: &mut R) -> Result<Digest256, EvalError> {
    if bits > 256 {
        return Err(EvalError::TamperTooLarge(bits));
    }
    let mut out = *symbol;
    for i in sample(rng, 256, bits as usize) {
        out.flip_bit(i);
    }
    Ok(out)
}

/// Recovery accuracy at each tamper level: the fraction of tampered heads
/// whose unique nearest valid hash is the original word's.
pub fn racr_experiment<R: Rng + ?Sized>(
    codebook: &Codebook,
    levels: &[u32],
    samples: usize,
    rng: &mut R,
) -> Result<Vec<(u32, f64)>, EvalError> {
    if samples == 0 {
        return Err(EvalError::TooFewSamples { need: 1, got: 0 });
    }
    let valid: Vec<Digest256> = codebook.valid_hashes().collect();
    let mut out = Vec::with_capacity(levels.len());
    for &bits in levels {
        let mut correct = 0usize;
        for _ in 0..samples {
            let rank = rng.random_range(0..valid.len());
            let t = tamper(&valid[rank], bits, rng)?;
            if matches!(recover(&t, &valid), Ok(n) if n.index == rank) {
                correct += 1;
            }
        }
        out.push((bits, correct as f64 / samples as f64));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcsResult {
    pub ccs: f64,
    pub trials: usize,
    /// Tampered symbols that landed on a valid hash.
    pub collisions: usize,
    /// `|V| / 2^256`, the chance a uniformly random symbol is valid.
    pub bound: f64,
}

pub fn valid_hit_bound(vocab: usize) -> f64 {
    vocab as f64 * 2f64.powi(-256)
}

/// CCS over the given tampered symbols.
pub fn ccs_of(codebook: &Codebook, tampered: &[Digest256]) -> CcsResult {
    let collisions = tampered.iter().filter(|t| codebook.is_valid(t)).count();
    CcsResult {
        ccs: 1.0 - collisions as f64 / tampered.len().max(1) as f64,
        trials: tampered.len(),
        collisions,
        bound: valid_hit_bound(codebook.len()),
    }
}

/// CCS over `samples` random tamperings of random heads, each flipping a
/// uniformly chosen number of bits in `1..=256`.
pub fn ccs_experiment<R: Rng + ?Sized>(
    codebook: &Codebook,
    samples: usize,
    rng: &mut R,
) -> Result<CcsResult, EvalError> {
    if samples < 100 {
        return Err(EvalError::TooFewSamples { need: 100, got: samples });
    }
    let valid: Vec<Digest256> = codebook.valid_hashes().collect();
    let mut tampered = Vec::with_capacity(samples);
    for _ in 0..samples {
        let h = valid[rng.random_range(0..valid.len())];
        let bits = rng.random_range(1..=256);
        tampered.push(tamper(&h, bits, rng)?);
    }
    Ok(ccs_of(codebook, &tampered))
}

/// Occurrence counts of a stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram<T: Hash + Eq> {
    pub counts: HashMap<T, u64>,
    pub total: u64,
    pub max_count: u64,
}

impl<T: Hash + Eq> Histogram<T> {
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Highest frequency over the frequency a uniform stream would have.
    pub fn max_over_uniform(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.max_count as f64 * self.counts.len() as f64 / self.total as f64
    }

    pub fn all_unique(&self) -> bool {
        self.max_count <= 1
    }
}

pub fn frequency_histogram<T: Hash + Eq, I: IntoIterator<Item = T>>(stream: I) -> Histogram<T> {
    let mut counts = HashMap::new();
    let mut total = 0;
    for item in stream {
        *counts.entry(item).or_insert(0u64) += 1;
        total += 1;
    }
    let max_count = counts.values().copied().max().unwrap_or(0);
    Histogram {
        counts,
        total,
        max_count,
    }
}

/// Left/right traversal counts per (center word, inner unit).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PathCounts {
    pub counts: BTreeMap<(u32, u32), (u64, u64)>,
    /// Number of (center, context) pairs walked.
    pub pairs: u64,
}

impl PathCounts {
    pub fn get(&self, word: u32, unit: u32) -> (u64, u64) {
        self.counts.get(&(word, unit)).copied().unwrap_or((0, 0))
    }
}

/// Walks every (center, context) pair of the training windows once.
pub fn collect_path_counts(ids: &[u32], tree: &HuffmanTree, window: usize) -> PathCounts {
    let mut pc = PathCounts::default();
    let len = ids.len();
    for t in 0..len {
        let w = ids[t];
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(len - 1);
        for pos in (lo..=hi).filter(|&p| p != t) {
            pc.pairs += 1;
            let (nodes, left) = tree.path(ids[pos] as usize);
            for (&n, &l) in nodes.iter().zip(left) {
                let e = pc.counts.entry((w, n)).or_insert((0, 0));
                if l {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
    }
    pc
}

/// `|v′_n · v_w − (ln k_l − ln k_r)|` over pairs with both counts positive.
pub fn factorization_residuals(model: &TrainedModel, counts: &PathCounts) -> Result<Vec<f64>, EvalError> {
    let table = &model.vectors;
    let out: Vec<f64> = counts
        .counts
        .iter()
        .filter(|(_, &(kl, kr))| kl > 0 && kr > 0)
        .map(|(&(w, n), &(kl, kr))| {
            let x = dot(model.inner_row(n as usize), table.row(w as usize));
            (x - ((kl as f64).ln() - (kr as f64).ln())).abs()
        })
        .collect();
    if out.is_empty() {
        return Err(EvalError::NoEligiblePairs);
    }
    Ok(out)
}

pub fn factorization_residual(model: &TrainedModel, counts: &PathCounts) -> Result<Summary, EvalError> {
    Ok(Summary::of(&factorization_residuals(model, counts)?).expect("nonempty"))
}

/// Decimals at which similarities are reported.
pub const SIM_DECIMALS: usize = 4;

/// Whether `sim` is reported as a full correlation of 1.0.
pub fn reports_full_correlation(sim: f64) -> bool {
    format!("{sim:.SIM_DECIMALS$}") == format!("{:.SIM_DECIMALS$}", 1.0)
}

/// Per-word `sim_xx` report, ascending, at [`SIM_DECIMALS`].
pub fn sim_report(t_alpha: &WordVectorTable, t_gamma: &WordVectorTable) -> Result<MetricsReport, EvalError> {
    let mut sims = shared_similarities(t_alpha, t_gamma)?;
    sims.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let mut r = MetricsReport::new("sim");
    r.decimals = Some(SIM_DECIMALS);
    for (w, s) in sims {
        r.push(w, s);
    }
    Ok(r)
}

/// `sim_xx` of every shared word, ascending.
pub fn sim_distribution(t_alpha: &WordVectorTable, t_gamma: &WordVectorTable) -> Result<Vec<f64>, EvalError> {
    let mut v: Vec<f64> = shared_similarities(t_alpha, t_gamma)?.into_iter().map(|s| s.1).collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Head-hash agreement `r_xy` for every word in both codebooks.
pub fn codebook_rxy(a: &Codebook, b: &Codebook) -> Vec<(String, f64)> {
    a.iter()
        .filter_map(|(w, ha)| {
            let hb = b.get(w)?;
            Some((w.to_string(), correlation_rxy(ha.head().as_bytes(), hb.head().as_bytes()).unwrap()))
        })
        .collect()
}

/// Head-hash `CRC` for every word in both codebooks.
pub fn codebook_crc(a: &Codebook, b: &Codebook) -> Vec<(String, f64)> {
    codebook_rxy(a, b).into_iter().map(|(w, r)| (w, 1.0 - r)).collect()
}

/// Least-squares line through `(x, y)`: slope, intercept and `R²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if xs.len() < 2 || sxx == 0.0 {
        return Err(EvalError::DegenerateFit);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// Wall-clock seconds of `f`, best of `repeats` runs.
pub fn time_best<T, F: FnMut() -> T>(repeats: usize, mut f: F) -> f64 {
    (0..repeats.max(1))
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(f());
            start.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

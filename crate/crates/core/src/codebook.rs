//! Time-varying codebook built from a word vector table.
//!
//! Each component is quantized to its first 16 significant decimal digits,
//! five of those strings form one 80-byte SHA-256 input, and the resulting
//! `D/5` digests split into a loop vector (all but the last) and a reserved
//! digest. Only the head of the loop is ever emitted; after use it is
//! replaced at the tail by `SHA-256(head ‖ reserved)`.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::WordVectorTable;

const MAGIC: &[u8; 8] = b"TEDLCBK1";

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("component is not finite")]
    NonFinite,
    #[error("dimension {0} is not a multiple of 5")]
    DimensionNotMultipleOf5(usize),
    #[error("dimension {0} leaves no loop vector")]
    NoLoopVector(usize),
    #[error("words {0:?} and {1:?} share a first hash")]
    HashCollision(String, String),
    #[error("word {0:?} is not in the codebook")]
    UnknownWord(String),
    #[error("corrupt codebook file: {0}")]
    CorruptFile(String),
}

/// A 256-bit value, big-endian.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest256(pub [u8; 32]);

impl Digest256 {
    pub fn sha256(data: &[u8]) -> Self {
        Digest256(Sha256::digest(data).into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn hamming(&self, other: &Digest256) -> u32 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    pub fn xor(&self, other: &Digest256) -> Digest256 {
        let mut out = [0u8; 32];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(&other.0)) {
            *o = a ^ b;
        }
        Digest256(out)
    }

    pub fn complement(&self) -> Digest256 {
        Digest256(self.0.map(|b| !b))
    }

    /// Flips bit `i`, counting from the most significant bit.
    pub fn flip_bit(&mut self, i: usize) {
        self.0[i / 8] ^= 0x80 >> (i % 8);
    }

    pub fn to_hex(&self) -> String {
        hex::encode_upper(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s.trim(), &mut out).ok()?;
        Some(Digest256(out))
    }
}

impl fmt::Debug for Digest256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// First 16 significant decimal digits of `|x|`; sign and exponent dropped.
///
/// `|x|` is rendered with 17 significant digits (correctly rounded) and the
/// 17th digit is cut off.
pub fn quantize_dim(x: f64) -> Result<[u8; 16], CodebookError> {
    if !x.is_finite() {
        return Err(CodebookError::NonFinite);
    }
    let mut out = [b'0'; 16];
    if x == 0.0 {
        return Ok(out);
    }
    let s = format!("{:.16e}", x.abs());
    let mantissa = s.split('e').next().unwrap();
    for (slot, c) in out
        .iter_mut()
        .zip(mantissa.bytes().filter(u8::is_ascii_digit))
    {
        *slot = c;
    }
    Ok(out)
}

/// One digest per group of five components.
pub fn vector_to_hashes(v: &[f64]) -> Result<Vec<Digest256>, CodebookError> {
    if v.is_empty() || !v.len().is_multiple_of(5) {
        return Err(CodebookError::DimensionNotMultipleOf5(v.len()));
    }
    let mut buf = [0u8; 80];
    v.chunks_exact(5)
        .map(|group| {
            for (slot, &x) in buf.chunks_exact_mut(16).zip(group) {
                slot.copy_from_slice(&quantize_dim(x)?);
            }
            Ok(Digest256::sha256(&buf))
        })
        .collect()
}

/// Next chain value: `SHA-256(prev ‖ reserved)` over the 64 raw bytes.
pub fn chain_step(prev: &Digest256, reserved: &Digest256) -> Digest256 {
    let mut h = Sha256::new();
    h.update(prev.0);
    h.update(reserved.0);
    Digest256(h.finalize().into())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashVector {
    loop_: VecDeque<Digest256>,
    reserved: Digest256,
    counter: u64,
}

impl HashVector {
    pub fn new(loop_: Vec<Digest256>, reserved: Digest256, counter: u64) -> Self {
        assert!(!loop_.is_empty(), "loop vector must hold at least one hash");
        HashVector {
            loop_: loop_.into(),
            reserved,
            counter,
        }
    }

    pub fn head(&self) -> Digest256 {
        self.loop_[0]
    }

    pub fn reserved(&self) -> Digest256 {
        self.reserved
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn loop_hashes(&self) -> impl ExactSizeIterator<Item = &Digest256> + '_ {
        self.loop_.iter()
    }

    pub fn loop_len(&self) -> usize {
        self.loop_.len()
    }

    /// Emits the head and appends its chain successor at the tail.
    pub fn advance(&mut self) -> Digest256 {
        let emitted = self.loop_.pop_front().expect("non-empty loop");
        self.loop_.push_back(chain_step(&emitted, &self.reserved));
        self.counter += 1;
        emitted
    }
}

/// Word → hash vector, plus the inverse index over current head hashes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    d: usize,
    n3: u64,
    words: Vec<String>,
    vectors: Vec<HashVector>,
    index: HashMap<String, usize>,
    inverse: HashMap<Digest256, Vec<usize>>,
}

impl Codebook {
    fn assemble(d: usize, n3: u64, entries: Vec<(String, HashVector)>) -> Result<Self, CodebookError> {
        let mut words = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        let mut inverse: HashMap<Digest256, Vec<usize>> = HashMap::with_capacity(entries.len());
        for (i, (w, hv)) in entries.into_iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(CodebookError::CorruptFile(format!("duplicate word {w:?}")));
            }
            inverse.entry(hv.head()).or_default().push(i);
            words.push(w);
            vectors.push(hv);
        }
        Ok(Codebook {
            d,
            n3,
            words,
            vectors,
            index,
            inverse,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n3(&self) -> u64 {
        self.n3
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn rank(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn entry(&self, rank: usize) -> &HashVector {
        &self.vectors[rank]
    }

    pub fn get(&self, word: &str) -> Option<&HashVector> {
        self.rank(word).map(|r| &self.vectors[r])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &HashVector)> + '_ {
        self.words.iter().map(String::as_str).zip(&self.vectors)
    }

    /// Words whose current head equals `symbol`.
    pub fn lookup(&self, symbol: &Digest256) -> &[usize] {
        self.inverse.get(symbol).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_valid(&self, symbol: &Digest256) -> bool {
        self.inverse.contains_key(symbol)
    }

    /// Current head hashes in vocabulary order.
    pub fn valid_hashes(&self) -> impl ExactSizeIterator<Item = Digest256> + '_ {
        self.vectors.iter().map(HashVector::head)
    }

    /// Advances `rank`'s chain, keeping the inverse index in step.
    pub fn advance(&mut self, rank: usize) -> Digest256 {
        let hv = &mut self.vectors[rank];
        let emitted = hv.advance();
        let new_head = hv.head();
        if let Some(list) = self.inverse.get_mut(&emitted) {
            list.retain(|&r| r != rank);
            if list.is_empty() {
                self.inverse.remove(&emitted);
            }
        }
        self.inverse.entry(new_head).or_default().push(rank);
        emitted
    }

    pub fn advance_word(&mut self, word: &str) -> Result<Digest256, CodebookError> {
        let r = self
            .rank(word)
            .ok_or_else(|| CodebookError::UnknownWord(word.to_string()))?;
        Ok(self.advance(r))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let loop_len = self.vectors.first().map_or(0, HashVector::loop_len);
        let mut out = Vec::with_capacity(32 + self.len() * (48 + 32 * (loop_len + 1)));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.d as u64).to_le_bytes());
        out.extend_from_slice(&self.n3.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (w, hv) in self.iter() {
            out.extend_from_slice(&(w.len() as u32).to_le_bytes());
            out.extend_from_slice(w.as_bytes());
            out.extend_from_slice(&hv.counter.to_le_bytes());
            for h in &hv.loop_ {
                out.extend_from_slice(&h.0);
            }
            out.extend_from_slice(&hv.reserved.0);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodebookError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CodebookError::CorruptFile("bad magic".into()));
        }
        let d = r.u64()? as usize;
        let n3 = r.u64()?;
        let count = r.u64()? as usize;
        if !d.is_multiple_of(5) || d / 5 < 2 || (10 + 5 * n3) as usize != d {
            return Err(CodebookError::CorruptFile(format!(
                "inconsistent layout d={d} n3={n3}"
            )));
        }
        let loop_len = d / 5 - 1;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let word = std::str::from_utf8(r.take(len)?)
                .map_err(|_| CodebookError::CorruptFile("word is not UTF-8".into()))?
                .to_string();
            let counter = r.u64()?;
            let mut loop_ = Vec::with_capacity(loop_len);
            for _ in 0..loop_len {
                loop_.push(r.digest()?);
            }
            let reserved = r.digest()?;
            entries.push((word, HashVector::new(loop_, reserved, counter)));
        }
        if r.pos != bytes.len() {
            return Err(CodebookError::CorruptFile("trailing bytes".into()));
        }
        Codebook::assemble(d, n3, entries)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodebookError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CodebookError::CorruptFile("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, CodebookError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CodebookError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn digest(&mut self) -> Result<Digest256, CodebookError> {
        Ok(Digest256(self.take(32)?.try_into().unwrap()))
    }
}

pub fn build_codebook(table: &WordVectorTable) -> Result<Codebook, CodebookError> {
    let d = table.dim();
    if !d.is_multiple_of(5) {
        return Err(CodebookError::DimensionNotMultipleOf5(d));
    }
    if d / 5 < 2 {
        return Err(CodebookError::NoLoopVector(d));
    }
    let n3 = ((d - 10) / 5) as u64;
    let mut entries = Vec::with_capacity(table.len());
    let mut heads: HashMap<Digest256, usize> = HashMap::with_capacity(table.len());
    for (i, (w, row)) in table.iter().enumerate() {
        let mut hashes = vector_to_hashes(row)?;
        let reserved = hashes.pop().expect("at least two hashes");
        if let Some(&other) = heads.get(&hashes[0]) {
            return Err(CodebookError::HashCollision(
                table.words()[other].clone(),
                w.to_string(),
            ));
        }
        heads.insert(hashes[0], i);
        entries.push((w.to_string(), HashVector::new(hashes, reserved, 0)));
    }
    Codebook::assemble(d, n3, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(x: f64) -> String {
        String::from_utf8(quantize_dim(x).unwrap().to_vec()).unwrap()
    }

    #[test]
    fn quantization_examples() {
        assert_eq!(q(0.0006421631111111111), "6421631111111111");
        assert_eq!(q(6421631111111111112341.0), "6421631111111111");
        assert_eq!(q(0.0), "0000000000000000");
        assert_eq!(q(-0.0), "0000000000000000");
        assert_eq!(q(-0.5), "5000000000000000");
        assert_eq!(q(1.0), "1000000000000000");
        assert_eq!(q(5e-324), "4940656458412465");
        assert!(matches!(quantize_dim(f64::NAN), Err(CodebookError::NonFinite)));
        assert!(matches!(quantize_dim(f64::INFINITY), Err(CodebookError::NonFinite)));
    }

    #[test]
    fn hashes_per_group() {
        let hs = vector_to_hashes(&[0.0; 10]).unwrap();
        assert_eq!(hs.len(), 2);
        assert_eq!(hs[0], hs[1]);
        assert!(matches!(
            vector_to_hashes(&[0.0; 7]),
            Err(CodebookError::DimensionNotMultipleOf5(7))
        ));
    }

    #[test]
    fn advance_rotates_and_chains() {
        let a = Digest256::sha256(b"a");
        let b = Digest256::sha256(b"b");
        let r = Digest256::sha256(b"r");
        let mut hv = HashVector::new(vec![a, b], r, 0);
        assert_eq!(hv.advance(), a);
        assert_eq!(hv.head(), b);
        assert_eq!(hv.advance(), b);
        assert_eq!(hv.head(), chain_step(&a, &r));
        assert_eq!(hv.counter(), 2);
        assert_eq!(hv.reserved(), r);
    }

    #[test]
    fn digest_bit_ops() {
        let a = Digest256::sha256(b"x");
        assert_eq!(a.hamming(&a), 0);
        assert_eq!(a.hamming(&a.complement()), 256);
        let mut b = a;
        b.flip_bit(0);
        b.flip_bit(255);
        assert_eq!(a.hamming(&b), 2);
        assert_eq!(Digest256::from_hex(&a.to_hex()), Some(a));
        assert_eq!(a.xor(&b).0[0], 0x80);
    }

    fn table(words: &[&str], d: usize) -> WordVectorTable {
        let data: Vec<f64> = (0..words.len() * d).map(|i| ((i + 1) as f64).sqrt() * 0.01).collect();
        WordVectorTable::new(words.iter().map(|w| w.to_string()).collect(), data, d).unwrap()
    }

    #[test]
    fn build_and_inverse() {
        let cb = build_codebook(&table(&["a", "b", "c"], 10)).unwrap();
        assert_eq!(cb.len(), 3);
        assert_eq!(cb.n3(), 0);
        for (i, (_, hv)) in cb.iter().enumerate() {
            assert_eq!(hv.loop_len(), 1);
            assert_eq!(cb.lookup(&hv.head()), [i]);
        }
        let cb = build_codebook(&table(&["a", "b"], 200)).unwrap();
        assert_eq!(cb.entry(0).loop_len(), 39);
        assert!(matches!(
            build_codebook(&table(&["a"], 5)),
            Err(CodebookError::NoLoopVector(5))
        ));
    }

    #[test]
    fn collisions_are_reported() {
        let t = WordVectorTable::new(vec!["a".into(), "b".into()], vec![0.5; 20], 10).unwrap();
        assert!(matches!(build_codebook(&t), Err(CodebookError::HashCollision(..))));
    }

    #[test]
    fn serialization_roundtrip() {
        let mut cb = build_codebook(&table(&["x", "yy", "zzz"], 15)).unwrap();
        for i in 0..1000 {
            cb.advance(i % 3);
        }
        let bytes = cb.to_bytes();
        assert_eq!(&bytes[..8], b"TEDLCBK1");
        let back = Codebook::from_bytes(&bytes).unwrap();
        assert_eq!(back, cb);
        assert_eq!(back.to_bytes(), bytes);
        assert!(Codebook::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Codebook::from_bytes(&bad), Err(CodebookError::CorruptFile(_))));
    }

    #[test]
    fn inverse_tracks_advances() {
        let mut cb = build_codebook(&table(&["a", "b"], 10)).unwrap();
        let before = cb.entry(0).head();
        let emitted = cb.advance(0);
        assert_eq!(emitted, before);
        assert!(!cb.is_valid(&emitted));
        assert_eq!(cb.lookup(&cb.entry(0).head()), [0]);
        assert_eq!(cb.inverse.len(), 2);
    }
}

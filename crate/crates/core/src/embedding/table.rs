use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::EmbeddingError;
use crate::key::Seed;

const MAGIC: &str = "TEDL-VEC v1";

/// Training parameters a table was produced with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableParams {
    pub window: usize,
    pub epochs: usize,
    pub seed: Seed,
}

/// Word → `d`-dimensional vector, rows in vocabulary order.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    words: Vec<String>,
    index: HashMap<String, u32>,
    data: Vec<f64>,
    d: usize,
    pub params: Option<TableParams>,
}

impl WordVectorTable {
    pub fn new(words: Vec<String>, data: Vec<f64>, d: usize) -> Result<Self, EmbeddingError> {
        if d == 0 || data.len() != words.len() * d {
            return Err(EmbeddingError::Shape {
                words: words.len(),
                d,
                values: data.len(),
            });
        }
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFiniteUpdate {
                word: words[bad / d].clone(),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(EmbeddingError::DuplicateWord(w.clone()));
            }
        }
        Ok(WordVectorTable {
            words,
            index,
            data,
            d,
            params: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
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
        self.index.get(word).map(|&i| i as usize)
    }

    pub fn row(&self, rank: usize) -> &[f64] {
        &self.data[rank * self.d..(rank + 1) * self.d]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.rank(word).map(|r| self.row(r))
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> + '_ {
        self.words
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.d))
    }

    /// Writes the binary table: a text header, then each word on its own line
    /// followed by `d` little-endian doubles.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{MAGIC} {} {}", self.words.len(), self.d)?;
        for (w, row) in self.iter() {
            out.write_all(w.as_bytes())?;
            out.write_all(b"\n")?;
            for x in row {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        out.flush()
    }

    pub fn read_from<R: BufRead>(mut input: R) -> Result<Self, EmbeddingError> {
        let corrupt = |m: &str| EmbeddingError::CorruptTable(m.to_string());
        let mut header = String::new();
        input.read_line(&mut header).map_err(|e| corrupt(&e.to_string()))?;
        let rest = header
            .trim_end()
            .strip_prefix(MAGIC)
            .ok_or_else(|| corrupt("bad magic"))?;
        let nums: Vec<usize> = rest
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| corrupt("bad header counts"))?;
        let [n, d] = nums[..] else {
            return Err(corrupt("bad header counts"));
        };
        let mut words = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * d);
        let mut line = Vec::new();
        let mut buf = [0u8; 8];
        for _ in 0..n {
            line.clear();
            input
                .read_until(b'\n', &mut line)
                .map_err(|e| corrupt(&e.to_string()))?;
            if line.pop() != Some(b'\n') {
                return Err(corrupt("truncated word"));
            }
            words.push(String::from_utf8(line.clone()).map_err(|_| corrupt("word is not UTF-8"))?);
            for _ in 0..d {
                input.read_exact(&mut buf).map_err(|_| corrupt("truncated vector"))?;
                data.push(f64::from_le_bytes(buf));
            }
        }
        let mut extra = [0u8; 1];
        if input.read(&mut extra).map_err(|e| corrupt(&e.to_string()))? != 0 {
            return Err(corrupt("trailing bytes"));
        }
        WordVectorTable::new(words, data, d)
    }
}

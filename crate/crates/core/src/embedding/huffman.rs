use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{sigmoid, EmbeddingError, Vocabulary};

/// Huffman tree over the vocabulary, stored as per-word paths of inner units.
///
/// Leaves take creation indices `0..n` in vocabulary order and inner nodes
/// `n..2n-1` in merge order. Inner unit `j` is node `n + j`, so the root is
/// the last inner unit. A branch label of `true` means the path continues to
/// the left child, which is always the first node popped in a merge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanTree {
    leaves: usize,
    offsets: Vec<usize>,
    nodes: Vec<u32>,
    left: Vec<bool>,
}

impl HuffmanTree {
    pub fn leaves(&self) -> usize {
        self.leaves
    }

    pub fn inner_units(&self) -> usize {
        self.leaves - 1
    }

    /// Inner units from the root down to `word`'s parent, with branch labels.
    pub fn path(&self, word: usize) -> (&[u32], &[bool]) {
        let (a, b) = (self.offsets[word], self.offsets[word + 1]);
        (&self.nodes[a..b], &self.left[a..b])
    }

    /// Path length `L(c)` counting the leaf itself.
    pub fn path_len(&self, word: usize) -> usize {
        self.offsets[word + 1] - self.offsets[word] + 1
    }

    /// Code of `word` as a bit string, `0` for left.
    pub fn code(&self, word: usize) -> String {
        self.path(word)
            .1
            .iter()
            .map(|&l| if l { '0' } else { '1' })
            .collect()
    }

    pub fn max_depth(&self) -> usize {
        (0..self.leaves).map(|w| self.path_len(w) - 1).max().unwrap_or(0)
    }

    /// `P(w_out = c | h)` for hidden vector `h` and inner-unit vectors `inner`
    /// laid out row-major with `d` columns.
    pub fn output_probability(&self, c: usize, hidden: &[f64], inner: &[f64]) -> f64 {
        let d = hidden.len();
        let (nodes, left) = self.path(c);
        nodes.iter().zip(left).fold(1.0, |p, (&n, &l)| {
            let row = &inner[n as usize * d..(n as usize + 1) * d];
            let x: f64 = row.iter().zip(hidden).map(|(a, b)| a * b).sum();
            p * if l { sigmoid(x) } else { sigmoid(-x) }
        })
    }
}

pub fn build_huffman(vocab: &Vocabulary) -> Result<HuffmanTree, EmbeddingError> {
    let n = vocab.len();
    if n < 2 {
        return Err(EmbeddingError::DegenerateVocab);
    }
    // (count, creation index); the heap pops the smallest count, then the
    // earliest-created node.
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        (0..n).map(|i| Reverse((vocab.count(i), i))).collect();
    let mut parent = vec![0usize; 2 * n - 1];
    let mut is_left = vec![false; 2 * n - 1];
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((c1, a)) = heap.pop().unwrap();
        let Reverse((c2, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        is_left[a] = true;
        heap.push(Reverse((c1 + c2, next)));
        next += 1;
    }
    let root = 2 * n - 2;
    let mut offsets = Vec::with_capacity(n + 1);
    let mut nodes = Vec::new();
    let mut left = Vec::new();
    let mut scratch: Vec<(u32, bool)> = Vec::new();
    offsets.push(0);
    for leaf in 0..n {
        scratch.clear();
        let mut cur = leaf;
        while cur != root {
            let p = parent[cur];
            scratch.push(((p - n) as u32, is_left[cur]));
            cur = p;
        }
        for &(node, l) in scratch.iter().rev() {
            nodes.push(node);
            left.push(l);
        }
        offsets.push(nodes.len());
    }
    Ok(HuffmanTree {
        leaves: n,
        offsets,
        nodes,
        left,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn vocab(pairs: &[(&str, u64)]) -> Vocabulary {
        Vocabulary::from_counts(pairs.iter().map(|(w, c)| (w.to_string(), *c)).collect::<HashMap<_, _>>())
            .unwrap()
    }

    #[test]
    fn two_words() {
        let t = build_huffman(&vocab(&[("a", 5), ("b", 1)])).unwrap();
        assert_eq!(t.inner_units(), 1);
        assert_eq!(t.path_len(0), 2);
        assert_eq!(t.path_len(1), 2);
        // b (count 1) is popped first and becomes the left child
        assert_eq!(t.code(1), "0");
        assert_eq!(t.code(0), "1");
    }

    #[test]
    fn three_words_codes() {
        let v = vocab(&[("a", 3), ("b", 2), ("c", 1)]);
        let t = build_huffman(&v).unwrap();
        // merge c(1)+b(2) -> inner 0 (3); tie a(3, idx 0) vs inner(3, idx 3): a first
        assert_eq!(t.code(0), "0");
        assert_eq!(t.code(1), "11");
        assert_eq!(t.code(2), "10");
        assert_eq!(t.path(2).0, [1, 0]);
    }

    #[test]
    fn single_word_is_degenerate() {
        assert!(matches!(
            build_huffman(&vocab(&[("a", 1)])),
            Err(EmbeddingError::DegenerateVocab)
        ));
    }

    #[test]
    fn inner_unit_count_and_prefix_freedom() {
        let pairs: Vec<(String, u64)> = (0..50).map(|i| (format!("w{i}"), (i % 7 + 1) as u64)).collect();
        let v = Vocabulary::from_counts(pairs.into_iter().collect()).unwrap();
        let t = build_huffman(&v).unwrap();
        assert_eq!(t.inner_units(), 49);
        let codes: Vec<String> = (0..50).map(|w| t.code(w)).collect();
        for (i, a) in codes.iter().enumerate() {
            assert!(t.path_len(i) >= 2);
            for (j, b) in codes.iter().enumerate() {
                if i != j {
                    assert!(!b.starts_with(a.as_str()), "{a} prefixes {b}");
                }
            }
        }
    }
}

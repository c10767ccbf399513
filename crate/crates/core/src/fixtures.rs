//! Seeded synthetic text for tests and experiments.
//!
//! Tokens follow a Zipf law over a fixed vocabulary made of common English
//! words followed by generated pseudo-words, so corpora of any size can be
//! produced offline and reproduced exactly from a seed.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DocumentStore, TokenStream};

/// Probe words and their synonyms for sensitivity experiments.
pub const WORD_GROUPS: &[(&str, &[&str])] = &[
    ("people", &["persons", "humans", "individuals", "folk", "humanity", "mankind", "mortals"]),
    ("female", &["woman", "girl", "lady", "lass"]),
    ("male", &["masculine", "manly", "macho", "virile", "manlike", "manful"]),
    ("beautiful", &["pretty", "lovely", "attractive", "gorgeous", "handsome", "stunning"]),
    ("good", &["excellent", "fine", "great", "decent", "superb"]),
    ("look", &["see", "glance", "gaze", "watch", "view", "observe"]),
];

const COMMON: &str = "the of and to a in is that for it as was with be by on not he i this are or his from at which \
but have an they you were her she there one all we their been has more if will would who so no when can what \
out up some them into other than then its only time new about two may first also after any like these our could \
made over such many most me where my between should through those very just even being back used before where \
much own well how must still while same way because day does under three us year never both each life another \
world found place work down part long since against around few something small later every without old within high \
number large however city during house water right name state home hand early few family back young thought service \
end school case still national point head white week country general order public fact power open side land body";

const SYLLABLES: &[&str] = &[
    "ka", "to", "ri", "ne", "sa", "lo", "mi", "du", "ve", "pa", "zo", "gu", "fe", "ba", "shi", "ta", "ru", "no", "ke",
    "li", "mo", "se", "da", "vi", "po", "za", "gi", "fo", "be", "chu", "ter", "lan", "mir", "dos", "val", "pen", "sor",
    "gan", "fel", "bur", "tin", "ral", "nek", "sil", "mon",
];

/// Zipf-distributed token source over a fixed vocabulary.
#[derive(Debug, Clone)]
pub struct TextGenerator {
    words: Vec<String>,
    cumulative: Vec<f64>,
}

impl TextGenerator {
    /// Vocabulary of `size` words (at least the built-in core) with Zipf
    /// exponent `s`. The same `(size, s, seed)` always yields the same words.
    pub fn new(size: usize, s: f64, seed: u64) -> Self {
        let mut words: Vec<String> = Vec::with_capacity(size);
        let mut seen = HashSet::new();
        for w in COMMON.split_whitespace() {
            if seen.insert(w.to_string()) {
                words.push(w.to_string());
            }
        }
        let mut probes: Vec<&str> = Vec::new();
        for (w, syn) in WORD_GROUPS {
            probes.push(w);
            probes.extend_from_slice(syn);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fresh: Vec<&str> = probes.into_iter().filter(|p| !seen.contains(*p)).collect();
        let target = size.max(words.len() + 4 * fresh.len() + 40);
        let mut probe_iter = fresh.into_iter();
        while words.len() < target {
            // probes are interleaved every few ranks after the core words
            if words.len().is_multiple_of(4) {
                if let Some(p) = probe_iter.next() {
                    seen.insert(p.to_string());
                    words.push(p.to_string());
                    continue;
                }
            }
            let n = rng.random_range(2..=4);
            let w: String = (0..n).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect();
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        let mut cumulative = Vec::with_capacity(words.len());
        let mut acc = 0.0;
        for r in 0..words.len() {
            acc += 1.0 / ((r + 1) as f64).powf(s);
            cumulative.push(acc);
        }
        TextGenerator { words, cumulative }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.words.len() - 1);
        &self.words[i]
    }

    pub fn tokens<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> TokenStream {
        let mut ts = TokenStream::with_capacity(n * 6, n);
        for _ in 0..n {
            ts.push(self.sample(rng));
        }
        ts
    }

    /// Prose with capitalised sentences and punctuation, `n` words long.
    pub fn text<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> String {
        let mut out = String::with_capacity(n * 7);
        let mut in_sentence = 0;
        let mut target = rng.random_range(6..20);
        for i in 0..n {
            let w = self.sample(rng);
            if in_sentence == 0 {
                let mut c = w.chars();
                if let Some(f) = c.next() {
                    out.extend(f.to_uppercase());
                    out.push_str(c.as_str());
                }
            } else {
                out.push_str(w);
            }
            in_sentence += 1;
            if in_sentence == target || i + 1 == n {
                out.push_str(if rng.random_range(0..8) == 0 { "?" } else { "." });
                in_sentence = 0;
                target = rng.random_range(6..20);
            } else if rng.random_range(0..12) == 0 {
                out.push(',');
            }
            out.push(if in_sentence == 0 && rng.random_range(0..5) == 0 { '\n' } else { ' ' });
        }
        out
    }
}

/// Tokens of two CJK ideographs each, for language-mismatch experiments.
pub fn cjk_tokens<R: Rng + ?Sized>(n: usize, distinct: usize, rng: &mut R) -> TokenStream {
    let words: Vec<String> = (0..distinct.max(1) as u32)
        .map(|i| {
            let a = char::from_u32(0x4E00 + (i * 7919) % 20_000).unwrap();
            let b = char::from_u32(0x4E00 + (i * 104_729 + 13) % 20_000).unwrap();
            format!("{a}{b}")
        })
        .collect();
    let gen = TextGenerator {
        cumulative: (0..words.len()).scan(0.0, |acc, r| {
            *acc += 1.0 / (r + 1) as f64;
            Some(*acc)
        })
        .collect(),
        words,
    };
    gen.tokens(n, rng)
}

/// A citation store: document `a` holds `doc_words` words of prose and cites
/// `refs` other documents chosen uniformly among addresses `0..docs`.
pub fn citation_store(gen: &TextGenerator, docs: u64, doc_words: usize, refs: usize, seed: u64) -> DocumentStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = DocumentStore::new();
    for a in 0..docs {
        store.insert(a, gen.text(doc_words, &mut rng));
    }
    for a in 0..docs {
        let mut cited = HashSet::new();
        while cited.len() < refs.min(docs as usize - 1) {
            let to = rng.random_range(0..docs);
            if to != a && cited.insert(to) {
                store.add_edge(a, to).unwrap();
            }
        }
    }
    store
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    #[test]
    fn generator_is_reproducible() {
        let g = TextGenerator::new(2000, 1.0, 7);
        assert_eq!(g.words().len(), 2000);
        assert_eq!(g.words(), TextGenerator::new(2000, 1.0, 7).words());
        let unique: HashSet<&String> = g.words().iter().collect();
        assert_eq!(unique.len(), 2000);
        let a = g.tokens(500, &mut ChaCha8Rng::seed_from_u64(1));
        let b = g.tokens(500, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        for (w, syn) in WORD_GROUPS {
            assert!(g.words().iter().any(|x| x == w));
            for s in *syn {
                assert!(g.words().iter().any(|x| x == s), "{s}");
            }
        }
    }

    #[test]
    fn text_tokenizes_back_to_vocabulary() {
        let g = TextGenerator::new(500, 1.0, 2);
        let t = g.text(300, &mut ChaCha8Rng::seed_from_u64(5));
        let toks = tokenize(&t);
        assert_eq!(toks.len(), 300);
        let vocab: HashSet<&str> = g.words().iter().map(String::as_str).collect();
        assert!(toks.iter().all(|w| vocab.contains(w)));
    }

    #[test]
    fn zipf_skew() {
        let g = TextGenerator::new(1000, 1.0, 3);
        let toks = g.tokens(20_000, &mut ChaCha8Rng::seed_from_u64(9));
        let the = toks.iter().filter(|&w| w == "the").count();
        assert!(the > 1000, "{the}");
    }

    #[test]
    fn store_cites_without_self_loops() {
        let g = TextGenerator::new(300, 1.0, 1);
        let s = citation_store(&g, 10, 20, 3, 4);
        assert_eq!(s.len(), 10);
        for a in 0..10 {
            let d = s.get(a).unwrap();
            assert_eq!(d.edges.len(), 3);
            assert!(!d.edges.contains(&a));
        }
    }
}

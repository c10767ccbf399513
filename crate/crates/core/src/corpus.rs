//! Document store, incremental corpus graph and the synthetic training corpus.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("address {0} is not in the document store")]
    UnknownAddress(u64),
    #[error("incremental corpus is empty")]
    EmptyIncrement,
    #[error("original corpus is empty")]
    EmptyOriginal,
    #[error("update mode needs transmitted data but none was supplied")]
    MissingTransmittedData,
    #[error("input is not valid UTF-8")]
    InvalidEncoding,
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("split mode has no increments to hand out")]
    NoSplitSlices,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A sequence of tokens stored in one contiguous buffer.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct TokenStream {
    buf: String,
    ends: Vec<usize>,
}

impl TokenStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bytes: usize, tokens: usize) -> Self {
        TokenStream {
            buf: String::with_capacity(bytes),
            ends: Vec::with_capacity(tokens),
        }
    }

    pub fn push(&mut self, token: &str) {
        debug_assert!(!token.is_empty());
        self.buf.push_str(token);
        self.ends.push(self.buf.len());
    }

    pub fn extend_from(&mut self, other: &TokenStream) {
        let base = self.buf.len();
        self.buf.push_str(&other.buf);
        self.ends.extend(other.ends.iter().map(|e| e + base));
    }

    /// `self ‖ other` as a new stream.
    pub fn concat(&self, other: &TokenStream) -> TokenStream {
        let mut out = TokenStream::with_capacity(
            self.buf.len() + other.buf.len(),
            self.ends.len() + other.ends.len(),
        );
        out.extend_from(self);
        out.extend_from(other);
        out
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    /// Total token bytes, excluding separators.
    pub fn byte_len(&self) -> usize {
        self.buf.len()
    }

    pub fn get(&self, i: usize) -> Option<&str> {
        let end = *self.ends.get(i)?;
        let start = if i == 0 { 0 } else { self.ends[i - 1] };
        Some(&self.buf[start..end])
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &str> + '_ {
        let mut start = 0;
        self.ends.iter().map(move |&end| {
            let s = &self.buf[start..end];
            start = end;
            s
        })
    }

    /// Token-per-line snapshot text.
    pub fn to_lines(&self) -> String {
        let mut out = String::with_capacity(self.buf.len() + self.ends.len());
        for tok in self.iter() {
            out.push_str(tok);
            out.push('\n');
        }
        out
    }

    pub fn from_lines(text: &str) -> TokenStream {
        text.lines().filter(|l| !l.is_empty()).collect()
    }
}

impl<'a> FromIterator<&'a str> for TokenStream {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        let mut ts = TokenStream::new();
        for t in iter {
            ts.push(t);
        }
        ts
    }
}

impl std::fmt::Debug for TokenStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut list = f.debug_list();
        for t in self.iter().take(16) {
            list.entry(&t);
        }
        if self.len() > 16 {
            list.entry(&format_args!("... {} tokens", self.len()));
        }
        list.finish()
    }
}

fn is_strip_char(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'..='\u{201F}' // curly quotes
                | '\u{2010}'..='\u{2015}' // dashes
                | '\u{2026}' // ellipsis
                | '\u{00AB}' | '\u{00BB}' | '\u{00BF}' | '\u{00A1}'
                | '\u{3001}' | '\u{3002}' // ideographic comma, full stop
                | '\u{FF0C}' | '\u{FF01}' | '\u{FF1F}' | '\u{FF1A}' | '\u{FF1B}'
        )
}

/// Lowercases, splits on whitespace and strips leading and trailing punctuation.
pub fn tokenize(text: &str) -> TokenStream {
    let mut ts = TokenStream::with_capacity(text.len(), text.len() / 5);
    let mut lowered = String::new();
    for raw in text.split_whitespace() {
        let trimmed = raw.trim_matches(is_strip_char);
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.chars().any(|c| c.is_uppercase()) {
            lowered.clear();
            lowered.extend(trimmed.chars().flat_map(char::to_lowercase));
            ts.push(&lowered);
        } else {
            ts.push(trimmed);
        }
    }
    ts
}

pub fn tokenize_bytes(bytes: &[u8]) -> Result<TokenStream, CorpusError> {
    let text = std::str::from_utf8(bytes).map_err(|_| CorpusError::InvalidEncoding)?;
    Ok(tokenize(text))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub text: String,
    /// Outgoing references, in manifest order.
    pub edges: Vec<u64>,
}

/// Local stand-in for an addressable document collection.
#[derive(Debug, Clone, Default)]
pub struct DocumentStore {
    docs: BTreeMap<u64, Document>,
}

impl DocumentStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, address: u64, text: impl Into<String>) {
        self.docs.entry(address).or_insert_with(|| Document {
            text: String::new(),
            edges: Vec::new(),
        });
        self.docs.get_mut(&address).unwrap().text = text.into();
    }

    /// Adds a reference edge; targets need not resolve.
    pub fn add_edge(&mut self, from: u64, to: u64) -> Result<(), CorpusError> {
        self.docs
            .get_mut(&from)
            .ok_or(CorpusError::UnknownAddress(from))?
            .edges
            .push(to);
        Ok(())
    }

    pub fn get(&self, address: u64) -> Option<&Document> {
        self.docs.get(&address)
    }

    pub fn contains(&self, address: u64) -> bool {
        self.docs.contains_key(&address)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn addresses(&self) -> impl Iterator<Item = u64> + '_ {
        self.docs.keys().copied()
    }

    /// Loads a line-oriented manifest. `FILE` paths are resolved against
    /// `root`, or the manifest's directory when `root` is `None`.
    pub fn load_manifest(path: &Path, root: Option<&Path>) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = match root {
            Some(r) => r.to_path_buf(),
            None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        Self::parse_manifest(&text, |file| {
            let p = base.join(file);
            let bytes = fs::read(&p).map_err(io_err(&p))?;
            String::from_utf8(bytes).map_err(|_| CorpusError::InvalidEncoding)
        })
    }

    /// Parses manifest text, reading document bodies through `read`.
    pub fn parse_manifest<F>(text: &str, mut read: F) -> Result<Self, CorpusError>
    where
        F: FnMut(&str) -> Result<String, CorpusError>,
    {
        let mut store = DocumentStore::new();
        let mut edges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| CorpusError::Manifest {
                line: line_no,
                msg: msg.to_string(),
            };
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("ADDR") => {
                    let addr: u64 = parts
                        .next()
                        .and_then(|a| a.parse().ok())
                        .ok_or_else(|| bad("expected decimal address"))?;
                    if parts.next() != Some("FILE") {
                        return Err(bad("expected FILE after address"));
                    }
                    let file = parts.collect::<Vec<_>>().join(" ");
                    if file.is_empty() {
                        return Err(bad("missing file path"));
                    }
                    if store.contains(addr) {
                        return Err(bad("duplicate address"));
                    }
                    store.insert(addr, read(&file)?);
                }
                Some("EDGE") => {
                    let from: u64 = parts
                        .next()
                        .and_then(|a| a.parse().ok())
                        .ok_or_else(|| bad("expected source address"))?;
                    let to: u64 = parts
                        .next()
                        .and_then(|a| a.parse().ok())
                        .ok_or_else(|| bad("expected target address"))?;
                    if parts.next().is_some() {
                        return Err(bad("trailing fields"));
                    }
                    edges.push((line_no, from, to));
                }
                _ => return Err(bad("unknown directive")),
            }
        }
        for (line, from, to) in edges {
            store.add_edge(from, to).map_err(|_| CorpusError::Manifest {
                line,
                msg: format!("edge source {from} is not a document"),
            })?;
        }
        Ok(store)
    }

    /// Renders the manifest for documents written as `<address>.txt`.
    pub fn manifest_text(&self) -> String {
        let mut out = String::new();
        for addr in self.docs.keys() {
            let _ = writeln!(out, "ADDR {addr} FILE {addr}.txt");
        }
        for (addr, doc) in &self.docs {
            for to in &doc.edges {
                let _ = writeln!(out, "EDGE {addr} {to}");
            }
        }
        out
    }

    /// Writes every document plus `manifest.txt` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<PathBuf, CorpusError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (addr, doc) in &self.docs {
            let p = dir.join(format!("{addr}.txt"));
            fs::write(&p, &doc.text).map_err(io_err(&p))?;
        }
        let manifest = dir.join("manifest.txt");
        fs::write(&manifest, self.manifest_text()).map_err(io_err(&manifest))?;
        Ok(manifest)
    }

    /// Builds a store from a directory of `<address>.txt` files and an edge
    /// list of `from to` lines.
    pub fn from_dir(dir: &Path, edges: Option<&str>) -> Result<Self, CorpusError> {
        let mut entries: Vec<(u64, PathBuf)> = Vec::new();
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let path = entry.map_err(io_err(dir))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            if let Some(addr) = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<u64>().ok())
            {
                entries.push((addr, path));
            }
        }
        entries.sort();
        let mut store = DocumentStore::new();
        for (addr, path) in entries {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            store.insert(addr, text);
        }
        if let Some(edges) = edges {
            for (i, line) in edges.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let nums: Vec<u64> = line
                    .split_whitespace()
                    .map(|t| t.parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| CorpusError::Manifest {
                        line: i + 1,
                        msg: "expected two addresses".into(),
                    })?;
                if nums.len() != 2 {
                    return Err(CorpusError::Manifest {
                        line: i + 1,
                        msg: "expected two addresses".into(),
                    });
                }
                store.add_edge(nums[0], nums[1])?;
            }
        }
        Ok(store)
    }
}

/// Returns the text at the key's initial address.
pub fn resolve_initial(store: &DocumentStore, n1: u64) -> Result<&Document, CorpusError> {
    store.get(n1).ok_or(CorpusError::UnknownAddress(n1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vertex {
    pub address: u64,
    /// Shortest directed distance from the initial unit.
    pub depth: u64,
}

/// Breadth-first expansion of the reference graph around the initial unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusGraph {
    /// Vertices in BFS discovery order; the initial unit comes first.
    pub vertices: Vec<Vertex>,
    /// Edges between vertices of the graph.
    pub edges: Vec<(u64, u64)>,
    pub radius: u64,
}

impl CorpusGraph {
    pub fn addresses(&self) -> impl Iterator<Item = u64> + '_ {
        self.vertices.iter().map(|v| v.address)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Concatenated tokens of `vertices`, in order.
    pub fn tokens_of(store: &DocumentStore, vertices: &[Vertex]) -> TokenStream {
        let mut ts = TokenStream::new();
        for v in vertices {
            if let Some(doc) = store.get(v.address) {
                ts.extend_from(&tokenize(&doc.text));
            }
        }
        ts
    }

    /// Concatenated tokens of the whole graph.
    pub fn tokens(&self, store: &DocumentStore) -> TokenStream {
        Self::tokens_of(store, &self.vertices)
    }
}

pub fn expand_graph(
    store: &DocumentStore,
    initial: u64,
    radius: u64,
) -> Result<CorpusGraph, CorpusError> {
    resolve_initial(store, initial)?;
    let mut seen = HashSet::from([initial]);
    let mut vertices = vec![Vertex {
        address: initial,
        depth: 0,
    }];
    let mut edges = Vec::new();
    let mut queue = VecDeque::from([(initial, 0u64)]);
    while let Some((addr, depth)) = queue.pop_front() {
        if depth == radius {
            continue;
        }
        let doc = store.get(addr).expect("queued vertices resolve");
        for &to in &doc.edges {
            if !store.contains(to) {
                log::warn!("reference {addr} -> {to} does not resolve; skipped");
                continue;
            }
            edges.push((addr, to));
            if seen.insert(to) {
                vertices.push(Vertex {
                    address: to,
                    depth: depth + 1,
                });
                queue.push_back((to, depth + 1));
            }
        }
    }
    Ok(CorpusGraph {
        vertices,
        edges,
        radius,
    })
}

/// `C_γ = C_α ‖ C_β` together with the bookkeeping needed for later rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticCorpus {
    pub original: TokenStream,
    pub incremental: TokenStream,
    /// Round index of this corpus version.
    pub version: u64,
    /// The public starting corpus, restored periodically.
    pub base_original: TokenStream,
    pub initial_address: u64,
    /// Radius of the graph that produced the current increment.
    pub radius: u64,
}

impl SyntheticCorpus {
    /// The training text: original followed by the increment.
    pub fn synthetic(&self) -> TokenStream {
        self.original.concat(&self.incremental)
    }

    /// `|C_β| : |C_α|` in tokens.
    pub fn ratio(&self) -> f64 {
        self.incremental.len() as f64 / self.original.len() as f64
    }
}

pub fn build_synthetic(
    original: &TokenStream,
    store: &DocumentStore,
    graph: &CorpusGraph,
) -> Result<SyntheticCorpus, CorpusError> {
    if original.is_empty() {
        return Err(CorpusError::EmptyOriginal);
    }
    let incremental = graph.tokens(store);
    if incremental.is_empty() {
        return Err(CorpusError::EmptyIncrement);
    }
    let initial = graph
        .vertices
        .first()
        .map(|v| v.address)
        .ok_or(CorpusError::EmptyIncrement)?;
    Ok(SyntheticCorpus {
        original: original.clone(),
        incremental,
        version: 0,
        base_original: original.clone(),
        initial_address: initial,
        radius: graph.radius,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    /// Re-expand the graph one step further.
    GrowRadius,
    /// Use the plaintext of the finished round as the next increment.
    TransmittedData,
    /// Hand out fixed-size slices of the graph's vertices in turn.
    Split { units_per_increment: usize },
}

/// Logical update schedule shared by both parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateSchedule {
    /// Round length in transmitted words.
    pub interval: u64,
    /// Current round index.
    pub round: u64,
    /// Every `x`-th update restores the public original corpus.
    pub restore_every: Option<u64>,
    pub mode: UpdateMode,
}

impl UpdateSchedule {
    /// Word count at which round `round` ends.
    pub fn boundary(&self) -> u64 {
        self.interval.saturating_mul(self.round + 1)
    }
}

pub fn update_corpus(
    current: &SyntheticCorpus,
    schedule: &UpdateSchedule,
    transmitted: Option<&TokenStream>,
    store: &DocumentStore,
) -> Result<SyntheticCorpus, CorpusError> {
    let next_version = current.version + 1;
    let restore = schedule
        .restore_every
        .is_some_and(|x| x > 0 && next_version.is_multiple_of(x));
    let original = if restore {
        current.base_original.clone()
    } else {
        current.synthetic()
    };
    let mut radius = current.radius;
    let incremental = match schedule.mode {
        UpdateMode::GrowRadius => {
            radius += 1;
            expand_graph(store, current.initial_address, radius)?.tokens(store)
        }
        UpdateMode::TransmittedData => transmitted
            .ok_or(CorpusError::MissingTransmittedData)?
            .clone(),
        UpdateMode::Split {
            units_per_increment,
        } => {
            let graph = expand_graph(store, current.initial_address, current.radius)?;
            let slices: Vec<&[Vertex]> =
                graph.vertices.chunks(units_per_increment.max(1)).collect();
            if slices.is_empty() {
                return Err(CorpusError::NoSplitSlices);
            }
            let slice = slices[(current.version % slices.len() as u64) as usize];
            CorpusGraph::tokens_of(store, slice)
        }
    };
    if incremental.is_empty() {
        return Err(CorpusError::EmptyIncrement);
    }
    Ok(SyntheticCorpus {
        original,
        incremental,
        version: next_version,
        base_original: current.base_original.clone(),
        initial_address: current.initial_address,
        radius,
    })
}

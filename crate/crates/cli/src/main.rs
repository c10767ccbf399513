use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tedl::cipher::{Barrier, CiphertextStream, Role, TiePolicy};
use tedl::corpus::{tokenize, UpdateSchedule};
use tedl::eval::{tamper, EvalError};
use tedl::fixtures::{citation_store, TextGenerator};
use tedl::key::KeyFile;
use tedl::pipeline::stage_one;
use tedl::{CipherError, DocumentStore, Key, KeyLayout, RecoveryPolicy, SessionState, TrainingConfig};

mod eval;
mod state;

/// Environment variable overriding the directory document files are read from.
const STORE_ROOT_VAR: &str = "TEDL_STORE_ROOT";

#[derive(Parser)]
#[command(name = "tedl", version, about = "Two-stage text cipher over key-addressed word embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key file.
    Keygen(KeygenArgs),
    /// Write a synthetic original corpus and citation store.
    Fixture(FixtureArgs),
    /// Index a directory of `<address>.txt` documents into a manifest.
    Store(StoreArgs),
    /// Build the synthetic corpus, train, and write an initial state directory.
    Build(BuildArgs),
    /// Encrypt a plaintext file, advancing the chains in the state directory.
    Encrypt(EncryptArgs),
    /// Decrypt a ciphertext file, advancing the chains in the state directory.
    Decrypt(DecryptArgs),
    /// Run the update barrier on one state directory.
    Barrier(BarrierArgs),
    /// Replay a message script between a sender and a receiver state.
    Session(SessionArgs),
    /// Compute an evaluation metric and write it as CSV.
    Eval(eval::EvalArgs),
}

#[derive(Args)]
struct KeygenArgs {
    /// Field widths in bits: address, radius, dimension, seed.
    #[arg(long, default_value = "30,2,8,256")]
    layout: String,
    /// Deterministic entropy (for tests); system randomness otherwise.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout if omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, short)]
    out: PathBuf,
    /// Words of original corpus text.
    #[arg(long, default_value_t = 100_000)]
    tokens: usize,
    /// Generator vocabulary size.
    #[arg(long, default_value_t = 5_000)]
    vocab: usize,
    #[arg(long, default_value_t = 200)]
    docs: u64,
    /// Words per store document.
    #[arg(long, default_value_t = 25)]
    doc_words: usize,
    /// Citations per store document.
    #[arg(long, default_value_t = 3)]
    refs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct StoreArgs {
    /// Directory holding `<address>.txt` files.
    #[arg(long)]
    dir: PathBuf,
    /// Edge list with one `from to` pair per line.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Manifest path; `<dir>/manifest.txt` if omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainingArgs {
    /// File of `key=value` training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
}

impl TrainingArgs {
    fn base(&self) -> Result<TrainingConfig> {
        let mut cfg = TrainingConfig::new(10, tedl::Seed::default());
        if let Some(p) = &self.config {
            cfg.apply_kv(&read_text(p)?)?;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(w) = self.window {
            cfg.window = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    key: PathBuf,
    /// Store manifest.
    #[arg(long)]
    store: PathBuf,
    /// Original corpus text.
    #[arg(long)]
    original: PathBuf,
    /// State directory to create.
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    training: TrainingArgs,
    /// Round length in words; 0 disables update barriers.
    #[arg(long, default_value_t = 0)]
    interval: u64,
    /// Every x-th corpus update restores the original corpus.
    #[arg(long)]
    restore_every: Option<u64>,
    /// Corpus update mode: grow, transmitted or split:N.
    #[arg(long, default_value = "grow")]
    mode: String,
}

#[derive(Args)]
struct EncryptArgs {
    #[arg(long)]
    state: PathBuf,
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Write one hex symbol per line instead of the binary stream.
    #[arg(long)]
    hex: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieArg {
    Fail,
    First,
}

#[derive(Args)]
struct PolicyArgs {
    /// Refuse recoveries farther than this many bits.
    #[arg(long)]
    max_distance: Option<u32>,
    /// What to do when several valid hashes are equally near.
    #[arg(long, value_enum, default_value = "fail")]
    on_tie: TieArg,
}

impl PolicyArgs {
    fn policy(&self) -> Result<RecoveryPolicy> {
        let on_tie = match self.on_tie {
            TieArg::Fail => TiePolicy::Fail,
            TieArg::First => TiePolicy::FirstLexicographic,
        };
        if let Some(m) = self.max_distance.filter(|&m| m > 256) {
            return Err(usage(format!("--max-distance {m} exceeds 256 bits")));
        }
        Ok(RecoveryPolicy {
            max_distance: self.max_distance,
            on_tie,
        })
    }
}

#[derive(Args)]
struct DecryptArgs {
    #[arg(long)]
    state: PathBuf,
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Per-position recovery report; stderr if omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Test only: flip this many bits in symbols before decrypting.
    #[arg(long, default_value_t = 0)]
    tamper_bits: u32,
    /// Fraction of symbols to tamper.
    #[arg(long, default_value_t = 1.0)]
    tamper_fraction: f64,
    #[arg(long, default_value_t = 0)]
    tamper_seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum BarrierKind {
    Corpus,
    Reseed,
}

#[derive(Args)]
struct BarrierArgs {
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long, value_enum)]
    kind: BarrierKind,
    /// Override the scheduled corpus update mode.
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long)]
    sender: PathBuf,
    #[arg(long)]
    receiver: PathBuf,
    /// Lines of `send <words>`, `barrier corpus [mode]` or `barrier reseed`.
    #[arg(long)]
    script: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Transcript file; stdout if omitted.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

/// Bad flag combinations detected after parsing.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn read_text(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn write_file(p: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))
}

fn load_store(manifest: &Path) -> Result<DocumentStore> {
    let root = std::env::var_os(STORE_ROOT_VAR).map(PathBuf::from);
    Ok(DocumentStore::load_manifest(manifest, root.as_deref())?)
}

fn read_ciphertext(p: &Path) -> Result<CiphertextStream> {
    let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
    if bytes.starts_with(b"TEDLCT1") {
        Ok(CiphertextStream::from_bytes(&bytes)?)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| anyhow!("{}: not a ciphertext file", p.display()))?;
        Ok(CiphertextStream::from_hex_lines(&text)?)
    }
}

fn keygen(a: KeygenArgs) -> Result<()> {
    let layout: KeyLayout = a.layout.parse().map_err(|e| usage(format!("--layout: {e}")))?;
    let key = match a.seed {
        Some(s) => Key::random(&layout, &mut ChaCha8Rng::seed_from_u64(s)),
        None => Key::random(&layout, &mut rand::rng()),
    };
    let text = KeyFile { layout, key }.to_text()?;
    match a.out {
        Some(p) => write_file(&p, text),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

fn fixture(a: FixtureArgs) -> Result<()> {
    let gen = TextGenerator::new(a.vocab, 1.0, a.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed.wrapping_add(1));
    fs::create_dir_all(&a.out)?;
    write_file(&a.out.join("original.txt"), gen.text(a.tokens, &mut rng))?;
    let store = citation_store(&gen, a.docs, a.doc_words, a.refs, a.seed.wrapping_add(2));
    let manifest = store.write_dir(&a.out.join("store"))?;
    println!("original {}", a.out.join("original.txt").display());
    println!("manifest {}", manifest.display());
    Ok(())
}

fn store_cmd(a: StoreArgs) -> Result<()> {
    let edges = a.edges.as_deref().map(read_text).transpose()?;
    let store = DocumentStore::from_dir(&a.dir, edges.as_deref())?;
    let out = a.out.unwrap_or_else(|| a.dir.join("manifest.txt"));
    write_file(&out, store.manifest_text())?;
    println!("{} documents indexed into {}", store.len(), out.display());
    Ok(())
}

fn build(a: BuildArgs) -> Result<()> {
    if a.restore_every.is_some() && a.interval == 0 {
        return Err(usage("--restore-every needs a non-zero --interval"));
    }
    let mode = state::parse_mode(&a.mode).map_err(|e| usage(e.to_string()))?;
    let base = a.training.base().map_err(|e| usage(e.to_string()))?;
    let key = KeyFile::parse(&read_text(&a.key)?)?.key;
    let store = load_store(&a.store)?;
    let original = tokenize(&read_text(&a.original)?);
    let built = stage_one(&key, &store, &original, &base)?;
    let schedule = UpdateSchedule {
        interval: a.interval,
        round: 0,
        restore_every: a.restore_every,
        mode,
    };
    let session = built.session(Role::Sender, schedule);
    state::save(&a.out, &session, &built.built.model.vectors)?;
    println!(
        "stage one: {:.3} s, |V| = {}, d = {}, {} + {} tokens",
        built.elapsed.as_secs_f64(),
        built.built.codebook.len(),
        built.built.codebook.dim(),
        built.corpus.original.len(),
        built.corpus.incremental.len()
    );
    Ok(())
}

fn encrypt(a: EncryptArgs) -> Result<()> {
    let mut saved = state::load(&a.state)?;
    saved.session.role = Role::Sender;
    let words: Vec<String> = tokenize(&read_text(&a.input)?).iter().map(str::to_string).collect();
    let ct = saved.session.encrypt_message(&words)?;
    if a.hex {
        write_file(&a.output, ct.to_hex_lines())?;
    } else {
        write_file(&a.output, ct.to_bytes())?;
    }
    state::save(&a.state, &saved.session, &saved.vectors)?;
    info!("encrypted {} words", words.len());
    Ok(())
}

fn decrypt(a: DecryptArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.tamper_fraction) {
        return Err(usage("--tamper-fraction must lie in [0, 1]"));
    }
    if a.tamper_bits > 256 {
        return Err(usage("--tamper-bits must be at most 256"));
    }
    let policy = a.policy.policy()?;
    let mut saved = state::load(&a.state)?;
    saved.session.role = Role::Receiver;
    let mut ct = read_ciphertext(&a.input)?;
    if a.tamper_bits > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(a.tamper_seed);
        let n = ct.symbols.len();
        let k = (a.tamper_fraction * n as f64).round() as usize;
        for i in sample(&mut rng, n, k.min(n)) {
            ct.symbols[i] = tamper(&ct.symbols[i], a.tamper_bits, &mut rng)?;
        }
    }
    let report = saved.session.decrypt_message(&ct, &policy);
    let text: Vec<&str> = report.words.iter().map(|w| w.as_deref().unwrap_or("?")).collect();
    write_file(&a.output, format!("{}\n", text.join(" ")))?;
    match &a.report {
        Some(p) => write_file(p, report.transcript())?,
        None => eprint!("{}", report.transcript()),
    }
    state::save(&a.state, &saved.session, &saved.vectors)?;
    let failed = report.failed_positions();
    if !failed.is_empty() {
        bail!(CipherError::RecoveryFailed(format!(
            "{} of {} symbols could not be decrypted (positions {failed:?})",
            failed.len(),
            ct.symbols.len()
        )));
    }
    Ok(())
}

fn barrier_of(kind: BarrierKind, mode: Option<&str>, s: &SessionState) -> Result<Barrier> {
    Ok(match kind {
        BarrierKind::Reseed => Barrier::Reseed,
        BarrierKind::Corpus => Barrier::Corpus(match mode {
            Some(m) => state::parse_mode(m).map_err(|e| usage(e.to_string()))?,
            None => s.schedule.mode,
        }),
    })
}

fn run_barrier(saved: &mut state::SavedState, store: &DocumentStore, barrier: Barrier) -> Result<()> {
    saved.vectors = saved.session.run_update_barrier(store, barrier)?.model.vectors;
    Ok(())
}

fn barrier(a: BarrierArgs) -> Result<()> {
    let mut saved = state::load(&a.state)?;
    let b = barrier_of(a.kind, a.mode.as_deref(), &saved.session)?;
    let store = load_store(&a.store)?;
    run_barrier(&mut saved, &store, b)?;
    state::save(&a.state, &saved.session, &saved.vectors)?;
    println!("round {} begins, corpus version {}", saved.session.schedule.round, saved.session.corpus.version);
    Ok(())
}

fn session(a: SessionArgs) -> Result<()> {
    use std::fmt::Write as _;
    let policy = a.policy.policy()?;
    let script = read_text(&a.script)?;
    let store = load_store(&a.store)?;
    let mut tx = state::load(&a.sender)?;
    let mut rx = state::load(&a.receiver)?;
    tx.session.role = Role::Sender;
    rx.session.role = Role::Receiver;
    tx.session.check_mirrored(&rx.session)?;
    let mut out = String::new();
    for (n, raw) in script.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (cmd, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        match cmd {
            "send" => {
                let words: Vec<String> = tokenize(rest).iter().map(str::to_string).collect();
                let ct = tx.session.encrypt_message(&words)?;
                let report = rx.session.decrypt_message(&ct, &policy);
                if report.plaintext().as_deref() != Some(&words[..]) {
                    bail!(CipherError::StateDivergence(format!("script line {}: receiver read {:?}", n + 1, report.words)));
                }
                for (w, s) in words.iter().zip(&ct.symbols) {
                    writeln!(out, "{}\t{w}\t{}", tx.session.words_transmitted, s.to_hex())?;
                }
            }
            "barrier" => {
                let mut parts = rest.split_whitespace();
                let kind = match parts.next() {
                    Some("corpus") => BarrierKind::Corpus,
                    Some("reseed") => BarrierKind::Reseed,
                    other => bail!(usage(format!("script line {}: unknown barrier {other:?}", n + 1))),
                };
                let b = barrier_of(kind, parts.next(), &tx.session)?;
                run_barrier(&mut tx, &store, b)?;
                run_barrier(&mut rx, &store, b)?;
                writeln!(
                    out,
                    "barrier\t{kind}\tround {}\tversion {}\tseed {}",
                    tx.session.schedule.round,
                    tx.session.corpus.version,
                    hex::encode(tx.session.training.seed.as_bytes()),
                    kind = match b {
                        Barrier::Reseed => "reseed".to_string(),
                        Barrier::Corpus(m) => format!("corpus:{}", state::mode_name(m)),
                    }
                )?;
            }
            _ => bail!(usage(format!("script line {}: unknown command {cmd:?}", n + 1))),
        }
        tx.session.check_mirrored(&rx.session)?;
    }
    state::save(&a.sender, &tx.session, &tx.vectors)?;
    state::save(&a.receiver, &rx.session, &rx.vectors)?;
    match a.transcript {
        Some(p) => write_file(&p, out),
        None => Ok(io::stdout().write_all(out.as_bytes())?),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(EvalError::AssertionFailed { .. }) = cause.downcast_ref::<EvalError>() {
            return 3;
        }
        if let Some(tedl::Error::Eval(EvalError::AssertionFailed { .. })) = cause.downcast_ref::<tedl::Error>() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Keygen(a) => keygen(a),
        Command::Fixture(a) => fixture(a),
        Command::Store(a) => store_cmd(a),
        Command::Build(a) => build(a),
        Command::Encrypt(a) => encrypt(a),
        Command::Decrypt(a) => decrypt(a),
        Command::Barrier(a) => barrier(a),
        Command::Session(a) => session(a),
        Command::Eval(a) => eval::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

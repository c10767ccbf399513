//! On-disk party state: everything needed to continue a session in a later
//! process.
//!
//! ```text
//! <dir>/codebook.bin     codebook with chain positions
//! <dir>/vectors.bin      word vectors behind the codebook
//! <dir>/state.txt        counters, schedule, training and corpus metadata
//! <dir>/base.txt         public original corpus, one token per line
//! <dir>/original.txt     current original corpus (absent while equal to base)
//! <dir>/increment.txt    current incremental corpus
//! <dir>/round.txt        plaintext of the unfinished round
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use tedl::cipher::Role;
use tedl::corpus::{SyntheticCorpus, UpdateMode, UpdateSchedule};
use tedl::{Codebook, SessionState, Seed, TokenStream, TrainingConfig, WordVectorTable};

pub struct SavedState {
    pub session: SessionState,
    pub vectors: WordVectorTable,
}

pub fn mode_name(mode: UpdateMode) -> String {
    match mode {
        UpdateMode::GrowRadius => "grow".into(),
        UpdateMode::TransmittedData => "transmitted".into(),
        UpdateMode::Split { units_per_increment } => format!("split:{units_per_increment}"),
    }
}

pub fn parse_mode(s: &str) -> Result<UpdateMode> {
    match s {
        "grow" => Ok(UpdateMode::GrowRadius),
        "transmitted" => Ok(UpdateMode::TransmittedData),
        _ => {
            let n = s
                .strip_prefix("split:")
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| anyhow!("unknown update mode {s:?} (grow, transmitted, split:N)"))?;
            Ok(UpdateMode::Split { units_per_increment: n })
        }
    }
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))
}

fn read_text(dir: &Path, name: &str) -> Result<String> {
    let p = dir.join(name);
    fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))
}

pub fn save(dir: &Path, s: &SessionState, vectors: &WordVectorTable) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(dir, "codebook.bin", s.codebook.to_bytes())?;
    let mut buf = Vec::new();
    vectors.write_to(&mut buf)?;
    write(dir, "vectors.bin", buf)?;
    let c = &s.corpus;
    let t = &s.training;
    let sc = &s.schedule;
    let meta = format!(
        "role={}\nwords_transmitted={}\nround={}\ninterval={}\nrestore_every={}\nmode={}\n\
         d={}\nseed={}\n{}version={}\ninitial_address={}\nradius={}\n",
        match s.role {
            Role::Sender => "sender",
            Role::Receiver => "receiver",
        },
        s.words_transmitted,
        sc.round,
        sc.interval,
        sc.restore_every.unwrap_or(0),
        mode_name(sc.mode),
        t.d,
        hex::encode(t.seed.as_bytes()),
        t.to_kv(),
        c.version,
        c.initial_address,
        c.radius,
    );
    write(dir, "state.txt", meta)?;
    write(dir, "base.txt", c.base_original.to_lines())?;
    let original = dir.join("original.txt");
    if c.original == c.base_original {
        if original.exists() {
            fs::remove_file(&original)?;
        }
    } else {
        write(dir, "original.txt", c.original.to_lines())?;
    }
    write(dir, "increment.txt", c.incremental.to_lines())?;
    write(dir, "round.txt", s.round_plaintext().to_lines())
}

pub fn load(dir: &Path) -> Result<SavedState> {
    let text = read_text(dir, "state.txt")?;
    let mut kv = BTreeMap::new();
    let mut training_lines = String::new();
    for line in text.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}: malformed line {line:?}", dir.display()))?;
        if matches!(k, "window" | "epochs" | "alpha_start" | "alpha_min") {
            training_lines.push_str(line);
            training_lines.push('\n');
        } else {
            kv.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| {
        kv.get(k)
            .cloned()
            .ok_or_else(|| anyhow!("{}: state.txt lacks {k}", dir.display()))
    };
    let num = |k: &str| -> Result<u64> { get(k)?.parse().with_context(|| format!("state.txt field {k}")) };

    let seed_bytes: [u8; 32] = hex::decode(get("seed")?)?
        .try_into()
        .map_err(|_| anyhow!("seed must be 32 bytes"))?;
    let mut training = TrainingConfig::new(num("d")? as usize, Seed(seed_bytes));
    training.apply_kv(&training_lines)?;

    let base = TokenStream::from_lines(&read_text(dir, "base.txt")?);
    let original = if dir.join("original.txt").exists() {
        TokenStream::from_lines(&read_text(dir, "original.txt")?)
    } else {
        base.clone()
    };
    let corpus = SyntheticCorpus {
        original,
        incremental: TokenStream::from_lines(&read_text(dir, "increment.txt")?),
        version: num("version")?,
        base_original: base,
        initial_address: num("initial_address")?,
        radius: num("radius")?,
    };
    let schedule = UpdateSchedule {
        interval: num("interval")?,
        round: num("round")?,
        restore_every: Some(num("restore_every")?).filter(|&x| x > 0),
        mode: parse_mode(&get("mode")?)?,
    };
    let role = match get("role")?.as_str() {
        "sender" => Role::Sender,
        "receiver" => Role::Receiver,
        r => bail!("unknown role {r:?}"),
    };
    let cb_path = dir.join("codebook.bin");
    let codebook = Codebook::from_bytes(&fs::read(&cb_path).with_context(|| format!("reading {}", cb_path.display()))?)?;
    let vec_path = dir.join("vectors.bin");
    let vectors = WordVectorTable::read_from(BufReader::new(
        fs::File::open(&vec_path).with_context(|| format!("reading {}", vec_path.display()))?,
    ))?;
    let round = TokenStream::from_lines(&read_text(dir, "round.txt")?);
    let session =
        SessionState::new(role, codebook, corpus, training, schedule).with_progress(num("words_transmitted")?, round);
    Ok(SavedState { session, vectors })
}

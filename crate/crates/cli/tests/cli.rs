use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tedl::key::KeyFile;
use tedl::{Codebook, Key, KeyLayout, Seed};

fn tedl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tedl")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    /// A small fixture plus a key whose initial address exists.
    fn new() -> Env {
        let dir = tempfile::tempdir().unwrap();
        let fx = dir.path().join("fx");
        ok(tedl(&["fixture", "--out", s(&fx), "--tokens", "12000", "--vocab", "1200", "--docs", "60"]));
        Env::write_key(&dir.path().join("key.txt"), 3);
        Env { dir }
    }

    fn write_key(path: &Path, n1: u64) {
        let key = Key {
            n1,
            n2: 1,
            n3: 0,
            n4: Seed::from_u64(5),
        };
        let text = KeyFile {
            layout: KeyLayout::DEFAULT,
            key,
        }
        .to_text()
        .unwrap();
        fs::write(path, text).unwrap();
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn manifest(&self) -> PathBuf {
        self.path("fx/store/manifest.txt")
    }

    fn build(&self, out: &str, extra: &[&str]) -> Output {
        let out = self.path(out);
        let key = self.path("key.txt");
        let manifest = self.manifest();
        let original = self.path("fx/original.txt");
        let mut args = vec![
            "build",
            "--key",
            s(&key),
            "--store",
            s(&manifest),
            "--original",
            s(&original),
            "--out",
            s(&out),
        ];
        args.extend_from_slice(extra);
        tedl(&args)
    }
}

#[test]
fn keygen_layouts_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.key");
    let b = dir.path().join("b.key");
    ok(tedl(&["keygen", "--layout", "30,2,8,256", "--seed", "7", "--out", s(&a)]));
    ok(tedl(&["keygen", "--seed", "7", "-o", s(&b)]));
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let kf = KeyFile::parse(&text).unwrap();
    assert_eq!(kf.layout.total_bits(), 296);
    assert_eq!(text.lines().nth(1).unwrap().len(), 74);

    let random = ok(tedl(&["keygen"]));
    assert!(KeyFile::parse(&String::from_utf8(random.stdout).unwrap()).is_ok());

    assert_eq!(code(&tedl(&["keygen", "--layout", "30,2,8"])), 1);
    assert_eq!(code(&tedl(&["keygen", "--layout", "x,2,8,256"])), 1);
    assert_eq!(code(&tedl(&["keygen", "--bogus"])), 1);
    assert_eq!(code(&tedl(&["frobnicate"])), 1);

    let help = String::from_utf8(ok(tedl(&["decrypt", "--help"])).stdout).unwrap();
    for flag in ["--state", "--input", "--output", "--report", "--max-distance", "--on-tie", "--tamper-bits", "--tamper-fraction", "--tamper-seed"] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn build_is_deterministic_and_rejects_unknown_address() {
    let env = Env::new();
    let first = ok(env.build("s1", &[]));
    assert!(String::from_utf8_lossy(&first.stdout).contains("stage one:"));
    ok(env.build("s2", &[]));
    let a = fs::read(env.path("s1/codebook.bin")).unwrap();
    assert_eq!(a, fs::read(env.path("s2/codebook.bin")).unwrap());
    assert_eq!(fs::read(env.path("s1/vectors.bin")).unwrap(), fs::read(env.path("s2/vectors.bin")).unwrap());
    assert!(Codebook::from_bytes(&a).unwrap().len() > 500);

    Env::write_key(&env.path("key.txt"), 9_999);
    let bad = env.build("s3", &[]);
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("9999"), "{}", stderr(&bad));
}

#[test]
fn store_root_override() {
    let env = Env::new();
    let docs = env.path("fx/store");
    ok(tedl(&["store", "--dir", s(&docs), "--out", s(&env.path("m.txt"))]));
    let manifest = fs::read_to_string(env.manifest()).unwrap();
    let edges: usize = manifest.lines().filter(|l| l.starts_with("EDGE")).count();
    assert!(edges > 0);
    // a manifest away from its documents resolves through the env override
    let moved = env.path("elsewhere/manifest.txt");
    fs::create_dir_all(moved.parent().unwrap()).unwrap();
    fs::write(&moved, manifest).unwrap();
    let key = env.path("key.txt");
    let original = env.path("fx/original.txt");
    let out = env.path("st");
    let args = ["build", "--key", s(&key), "--store", s(&moved), "--original", s(&original), "--out", s(&out)];
    assert_eq!(code(&tedl(&args)), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_tedl"))
        .args(args)
        .env("TEDL_STORE_ROOT", &docs)
        .output()
        .unwrap();
    ok(o);
}

fn copy_state(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), to.join(e.file_name())).unwrap();
    }
}

#[test]
fn encrypt_decrypt_roundtrip_is_stateful() {
    let env = Env::new();
    ok(env.build("tx", &[]));
    copy_state(&env.path("tx"), &env.path("rx"));
    let plain = env.path("msg.txt");
    fs::write(&plain, "the of and to a in is that the of\n").unwrap();
    let (tx, rx) = (env.path("tx"), env.path("rx"));
    let mut previous = Vec::new();
    for round in 0..2 {
        let ct = env.path(&format!("ct{round}"));
        let back = env.path(&format!("back{round}.txt"));
        ok(tedl(&["encrypt", "--state", s(&tx), "-i", s(&plain), "-o", s(&ct)]));
        ok(tedl(&["decrypt", "--state", s(&rx), "-i", s(&ct), "-o", s(&back), "--report", s(&env.path("r.tsv"))]));
        assert_eq!(fs::read(&back).unwrap(), fs::read(&plain).unwrap());
        let bytes = fs::read(&ct).unwrap();
        assert_ne!(bytes, previous);
        previous = bytes;
    }
    assert_eq!(fs::read(tx.join("codebook.bin")).unwrap(), fs::read(rx.join("codebook.bin")).unwrap());

    let hex = env.path("ct.hex");
    ok(tedl(&["encrypt", "--state", s(&tx), "-i", s(&plain), "-o", s(&hex), "--hex"]));
    assert_eq!(fs::read_to_string(&hex).unwrap().lines().count(), 10);
    ok(tedl(&["decrypt", "--state", s(&rx), "-i", s(&hex), "-o", s(&env.path("b.txt"))]));

    let oov = env.path("oov.txt");
    fs::write(&oov, "the of and to a in is zzqxj the").unwrap();
    let before = fs::read(tx.join("codebook.bin")).unwrap();
    let o = tedl(&["encrypt", "--state", s(&tx), "-i", s(&oov), "-o", s(&env.path("x"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("\"zzqxj\" at 7"), "{}", stderr(&o));
    assert_eq!(fs::read(tx.join("codebook.bin")).unwrap(), before);
}

#[test]
fn tampered_symbols_are_recovered_and_reported() {
    let env = Env::new();
    ok(env.build("tx", &[]));
    copy_state(&env.path("tx"), &env.path("rx"));
    let plain = env.path("msg.txt");
    fs::write(&plain, "in the house of the city there is water\n").unwrap();
    let ct = env.path("ct");
    ok(tedl(&["encrypt", "--state", s(&env.path("tx")), "-i", s(&plain), "-o", s(&ct)]));
    let back = env.path("back.txt");
    let report = env.path("report.tsv");
    ok(tedl(&[
        "decrypt", "--state", s(&env.path("rx")), "-i", s(&ct), "-o", s(&back), "--report", s(&report),
        "--tamper-bits", "16", "--tamper-fraction", "0.5", "--tamper-seed", "3",
    ]));
    assert_eq!(fs::read(&back).unwrap(), fs::read(&plain).unwrap());
    let rows = fs::read_to_string(&report).unwrap();
    let recovered: Vec<&str> = rows.lines().filter(|l| l.contains("\t1:16\t")).collect();
    assert_eq!(recovered.len(), 5, "{rows}");

    // a tight distance limit turns the same tampering into a failure
    copy_state(&env.path("tx"), &env.path("rx2"));
    let o = tedl(&[
        "decrypt", "--state", s(&env.path("rx2")), "-i", s(&ct), "-o", s(&back),
        "--tamper-bits", "16", "--max-distance", "8", "--report", s(&report),
    ]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&tedl(&["decrypt", "--state", s(&env.path("rx2")), "-i", s(&ct), "-o", s(&back), "--max-distance", "300"])), 1);
}

const SCRIPT: &str = "\
send the of and to a in is that
barrier corpus
send was with be by on not he i
barrier corpus
# restoration round
send this are or his from at which but
";

#[test]
fn session_transcripts_repeat_and_divergence_is_caught() {
    let env = Env::new();
    ok(env.build("init", &["--interval", "8", "--mode", "transmitted", "--restore-every", "2"]));
    let script = env.path("script.txt");
    fs::write(&script, SCRIPT).unwrap();
    let mut transcripts = Vec::new();
    for run in 0..2 {
        let (a, b) = (env.path(&format!("a{run}")), env.path(&format!("b{run}")));
        copy_state(&env.path("init"), &a);
        copy_state(&env.path("init"), &b);
        let t = env.path(&format!("t{run}.tsv"));
        ok(tedl(&[
            "session", "--sender", s(&a), "--receiver", s(&b), "--script", s(&script),
            "--store", s(&env.manifest()), "--transcript", s(&t),
        ]));
        transcripts.push(fs::read_to_string(&t).unwrap());
        assert_eq!(fs::read(a.join("codebook.bin")).unwrap(), fs::read(b.join("codebook.bin")).unwrap());
    }
    assert_eq!(transcripts[0], transcripts[1]);
    let t = &transcripts[0];
    assert_eq!(t.lines().filter(|l| l.starts_with("barrier")).count(), 2);
    assert_eq!(t.lines().count(), 26);

    // after the second update the original corpus is the public one again
    let state = fs::read_to_string(env.path("b0/state.txt")).unwrap();
    assert!(state.contains("version=2") && state.contains("round=2"));
    assert!(!env.path("b0/original.txt").exists());
    // and the first transmitted round became the increment of version 1
    let a = env.path("one");
    let b = env.path("two");
    copy_state(&env.path("init"), &a);
    copy_state(&env.path("init"), &b);
    fs::write(&script, SCRIPT.lines().take(2).collect::<Vec<_>>().join("\n")).unwrap();
    ok(tedl(&["session", "--sender", s(&a), "--receiver", s(&b), "--script", s(&script), "--store", s(&env.manifest())]));
    let inc = fs::read_to_string(b.join("increment.txt")).unwrap();
    assert_eq!(inc.lines().collect::<Vec<_>>(), ["the", "of", "and", "to", "a", "in", "is", "that"]);
    assert!(b.join("original.txt").exists());

    // a receiver that has silently consumed extra words has diverged
    let plain = env.path("extra.txt");
    fs::write(&plain, "the").unwrap();
    ok(tedl(&["encrypt", "--state", s(&b), "-i", s(&plain), "-o", s(&env.path("junk"))]));
    fs::write(&script, "send the of\n").unwrap();
    let o = tedl(&["session", "--sender", s(&a), "--receiver", s(&b), "--script", s(&script), "--store", s(&env.manifest())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("diverged"), "{}", stderr(&o));
}

#[test]
fn eval_metrics_and_assertions() {
    let env = Env::new();
    ok(env.build("st", &[]));
    let st = env.path("st");
    let out = env.path("racr.csv");
    ok(tedl(&["eval", "racr", "--state", s(&st), "--bits", "0", "--samples", "200", "--assert", "-o", s(&out)]));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.lines().any(|l| l == "racr,0,1"), "{csv}");

    let plain = env.path("msg.txt");
    fs::write(&plain, "the the the the of of of and and a").unwrap();
    let ct = env.path("ct");
    ok(tedl(&["encrypt", "--state", s(&st), "-i", s(&plain), "-o", s(&ct)]));
    let freq = String::from_utf8(ok(tedl(&["eval", "freq", "-i", s(&ct), "--assert"])).stdout).unwrap();
    assert!(freq.contains("# all_unique=true"));
    assert_eq!(freq.lines().filter(|l| l.starts_with("freq,")).count(), 10);

    let rxy = String::from_utf8(ok(tedl(&["eval", "rxy", "--assert"])).stdout).unwrap();
    assert!(rxy.lines().filter(|l| l.starts_with("rxy,")).count() > 1000);

    // identical codebooks have zero change rate, far outside the band
    let o = tedl(&["eval", "crc", "--state", s(&st), "--other", s(&st), "--assert"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert_eq!(code(&tedl(&["eval", "crc", "--state", s(&st)])), 1);
    ok(tedl(&["eval", "ccs", "--state", s(&st), "--samples", "500", "--assert"]));
    ok(tedl(&["eval", "residual", "--assert"]));
    let sim = String::from_utf8(ok(tedl(&["eval", "sim", "--assert"])).stdout).unwrap();
    assert!(sim.contains("# reported_full=0"));
}

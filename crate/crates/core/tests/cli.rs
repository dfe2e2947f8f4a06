//! End-to-end runs of the `covdetect` binary on a tiny configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use covdetect::autoencoder::Autoencoder;
use covdetect::config::RunConfig;

const CONFIG: &str = r#"
threads = 1

[synth]
n_event = 12
n_noise = 12

[arch]
base_channels = 2

[train]
epochs = 2
batch_size = 8
lr = 1e-3

[method]
k = 2

[projection]
epochs = 2

[eval]
folds = 2
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covdetect")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: String,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("run.toml");
        fs::write(&config, CONFIG).unwrap();
        Self { _dir: dir, config: config.to_string_lossy().into_owned(), root }
    }

    fn path(&self, rel: &str) -> String {
        self.root.join(rel).to_string_lossy().into_owned()
    }

    fn synth(&self, out: &str, seed: &str) -> String {
        ok(&["synth", "--config", &self.config, "--seed", seed, "--out", &self.path(out), "--name", "demo"]);
        self.path(&format!("{out}/demo.manifest"))
    }
}

fn rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(str::to_owned).collect()
}

#[test]
fn synth_train_score_evaluate() {
    let ws = Workspace::new();
    let manifest = ws.synth("data", "5");
    assert!(fs::metadata(ws.path("data/demo.rcvr")).unwrap().len() > 0);
    assert!(fs::read_to_string(ws.path("data/demo.report.txt")).unwrap().contains("events: 12"));

    ok(&["train", "--config", &ws.config, "--manifest", &manifest, "--out", &ws.path("model"), "--denoise", "0.2"]);
    assert_eq!(rows(&ws.root.join("model/history_0.csv")).len(), 2);
    let effective = RunConfig::load(&ws.root.join("model/effective_config.toml")).unwrap();
    assert_eq!(effective.train.denoise_sigma, 0.2);
    Autoencoder::load(&ws.root.join("model/model_0.rcvw"), &effective.arch).unwrap();

    ok(&[
        "score", "--config", &ws.config, "--manifest", &manifest, "--models", &ws.path("model"), "--out",
        &ws.path("scores"), "--dump-profiles",
    ]);
    let scores = rows(&ws.root.join("scores/scores.csv"));
    assert_eq!(scores.len(), 24);
    assert!(scores.iter().all(|r| r.split(',').nth(3).unwrap().parse::<f64>().unwrap().is_finite()));
    assert!(rows(&ws.root.join("scores/profiles.csv")).len() > 24);

    let out = ok(&["evaluate", "--config", &ws.config, "--manifest", &manifest, "--out", &ws.path("eval"), "--method", "single"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("single"));
    let report = rows(&ws.root.join("eval/report.csv"));
    assert_eq!(report.len(), 2 * 2, "two single variants, two folds each");
    for r in report {
        let auc: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&auc));
    }
}

#[test]
fn ensemble_train_then_score() {
    let ws = Workspace::new();
    let manifest = ws.synth("data", "6");
    ok(&["train", "--config", &ws.config, "--manifest", &manifest, "--out", &ws.path("m"), "--method", "ensemble"]);
    for f in ["model_0.rcvw", "model_1.rcvw", "projections.rcvw", "latent_stats.rcvw"] {
        assert!(ws.root.join("m").join(f).exists(), "{f}");
    }
    ok(&["score", "--config", &ws.config, "--manifest", &manifest, "--models", &ws.path("m"), "--out", &ws.path("s")]);
    let scores = rows(&ws.root.join("s/scores.csv"));
    assert!(scores.iter().all(|r| r.contains(",ensemble,")));
}

#[test]
fn seeded_runs_reproduce() {
    let ws = Workspace::new();
    let a = ws.synth("a", "9");
    let b = ws.synth("b", "9");
    assert_eq!(fs::read(ws.path("a/demo.rcvr")).unwrap(), fs::read(ws.path("b/demo.rcvr")).unwrap());
    ws.synth("c", "10");
    assert_ne!(fs::read(ws.path("a/demo.rcvr")).unwrap(), fs::read(ws.path("c/demo.rcvr")).unwrap());

    for (manifest, out) in [(&a, "ta"), (&b, "tb")] {
        ok(&["train", "--config", &ws.config, "--manifest", manifest, "--out", &ws.path(out), "--seed", "3"]);
        ok(&["score", "--config", &ws.config, "--manifest", manifest, "--models", &ws.path(out), "--out", &ws.path(out)]);
    }
    assert_eq!(fs::read(ws.path("ta/model_0.rcvw")).unwrap(), fs::read(ws.path("tb/model_0.rcvw")).unwrap());
    assert_eq!(fs::read(ws.path("ta/scores.csv")).unwrap(), fs::read(ws.path("tb/scores.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));

    let manifest = ws.synth("data", "1");
    let unknown = run(&["train", "--config", &ws.config, "--manifest", &manifest, "--out", &ws.path("x"), "--method", "bogus"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("unknown method"));

    let bad = ws.root.join("bad.toml");
    fs::write(&bad, "[train]\nepoch = 3\n").unwrap();
    assert_eq!(run(&["synth", "--config", &bad.to_string_lossy(), "--out", &ws.path("y")]).status.code(), Some(1));
    fs::write(&bad, "[train]\nepochs = 0\n").unwrap();
    assert_eq!(
        run(&["train", "--config", &bad.to_string_lossy(), "--manifest", &manifest, "--out", &ws.path("y")]).status.code(),
        Some(1)
    );

    let missing = ws.path("nowhere.manifest");
    assert_eq!(run(&["train", "--config", &ws.config, "--manifest", &missing, "--out", &ws.path("z")]).status.code(), Some(2));
    let empty = ws.root.join("empty.manifest");
    fs::write(&empty, "").unwrap();
    assert_eq!(
        run(&["train", "--config", &ws.config, "--manifest", &empty.to_string_lossy(), "--out", &ws.path("z")]).status.code(),
        Some(2)
    );
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn trade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trade")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = trade(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
}

fn last_report(path: &Path) -> serde_json::Value {
    let text = fs::read_to_string(path).unwrap();
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

const TINY: [&str; 12] = [
    "--data",
    "toy2d:two-moons",
    "--data-n",
    "1000",
    "--epochs",
    "3",
    "--set",
    "model.hidden=8",
    "--set",
    "model.ffn_hidden=16",
    "--set",
    "model.m=3",
];

fn train_tiny(out: &Path, extra: &[&str]) {
    let mut args = vec!["train", "--deterministic", "--seed", "3", "--out", out.to_str().unwrap()];
    args.extend(TINY);
    args.extend(extra);
    ok(&args);
}

#[test]
fn version_names_the_checkpoint_format() {
    let v = ok(&["--version"]);
    assert!(v.contains(env!("CARGO_PKG_VERSION")) && v.contains("checkpoint format 1"), "{v}");
}

#[test]
fn committed_checkpoint_reproduces_its_nll() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = fixture().join("best.ckpt");
    ok(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--task", "nll", "--out", dir.path().to_str().unwrap()]);
    let expected: f64 = fs::read_to_string(fixture().join("expected_test_ll.txt")).unwrap().trim().parse().unwrap();
    let got = last_report(&dir.path().join("results.jsonl"))["value"].as_f64().unwrap();
    assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
}

#[test]
fn train_writes_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train_tiny(&a, &[]);
    train_tiny(&b, &[]);
    for f in ["best.ckpt", "final.ckpt", "metrics.jsonl", "config.txt"] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    assert_eq!(fs::read(a.join("metrics.jsonl")).unwrap(), fs::read(b.join("metrics.jsonl")).unwrap());
    assert_eq!(fs::read(a.join("best.ckpt")).unwrap(), fs::read(b.join("best.ckpt")).unwrap());
    assert_eq!(fs::read_to_string(a.join("metrics.jsonl")).unwrap().lines().count(), 3);
    let cfg = fs::read_to_string(a.join("config.txt")).unwrap();
    assert!(cfg.contains("source = toy2d:two-moons") && cfg.contains("hidden = 8"), "{cfg}");
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train_tiny(&a, &[]);
    let cfg = a.join("config.txt");
    ok(&["train", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(fs::read(a.join("final.ckpt")).unwrap(), fs::read(b.join("final.ckpt")).unwrap());
}

#[test]
fn preset_is_resolved_into_the_echoed_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    ok(&["train", "--preset", "hepmass", "--data", "toy2d:spiral", "--data-n", "300", "--epochs", "1", "--set", "model.layers=1", "--out", o]);
    let cfg = fs::read_to_string(out.join("config.txt")).unwrap();
    for line in ["lambda = 0.1", "m = 100", "heads = 8", "hidden = 128", "lr = 0.0005", "batch_size = 512", "clip_norm = 5", "layers = 1"] {
        assert!(cfg.lines().any(|l| l == line), "missing `{line}` in\n{cfg}");
    }
}

#[test]
fn samples_are_seeded_and_match_training_moments() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    train_tiny(&run, &["--set", "train.epochs=15", "--lr", "3e-3"]);
    let ckpt = run.join("best.ckpt");
    let c = ckpt.to_str().unwrap();
    let s1 = ok(&["sample", "--checkpoint", c, "-n", "2000", "--seed", "5"]);
    let s2 = ok(&["sample", "--checkpoint", c, "-n", "2000", "--seed", "5"]);
    let s3 = ok(&["sample", "--checkpoint", c, "-n", "2000", "--seed", "6"]);
    assert_eq!(s1, s2);
    assert_ne!(s1, s3);
    let file = dir.path().join("s.csv");
    ok(&["sample", "--checkpoint", c, "-n", "2000", "--seed", "5", "--out", file.to_str().unwrap()]);
    let rows: Vec<Vec<f64>> = fs::read_to_string(&file)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2000);
    assert!(rows.iter().all(|r| r.len() == 2));

    // the model's own moments by quadrature over a box holding its mass
    let model = trade::model::load_checkpoint(&ckpt).unwrap();
    let bounds = trade::model::GridBounds::square(-8.0, 8.0);
    let pts = trade::model::grid_points(bounds, 400);
    let w: Vec<f64> = model.log_prob_data(&pts).unwrap().iter().map(|l| l.exp()).collect();
    let mass: f64 = w.iter().sum::<f64>() * (16.0f64 / 399.0).powi(2);
    assert!((mass - 1.0).abs() < 0.01, "box mass {mass}");
    for c in 0..2 {
        let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let target = (0..pts.rows()).map(|r| pts.get(r, c) * w[r]).sum::<f64>() / w.iter().sum::<f64>();
        assert!((mean - target).abs() < 4.0 * sd / n.sqrt(), "column {c}: {mean} vs {target}");
    }
}

#[test]
fn zero_rows_is_a_config_error() {
    let ckpt = fixture().join("best.ckpt");
    let out = trade(&["sample", "--checkpoint", ckpt.to_str().unwrap(), "-n", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "[train]\nepochz = 3\n").unwrap();
    let out = trade(&["train", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochz"));

    let missing = dir.path().join("nope.manifest");
    let out = trade(&["train", "--data", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let out = trade(&["eval", "--task", "nll", "--checkpoint", fixture().join("best.ckpt").to_str().unwrap(), "--data", "regression8", "--data-n", "100", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let run = dir.path().join("boom");
    let out = trade(&["train", "--data", "toy2d:two-rings", "--data-n", "500", "--epochs", "5", "--lr", "1e100", "--out", run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn grid_task_writes_images() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = fixture().join("best.ckpt");
    let stdout = ok(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--task", "grid", "--resolution", "64", "--out", dir.path().to_str().unwrap()]);
    assert!(stdout.contains("grid_kl"), "{stdout}");
    for f in ["truth.pgm", "model.pgm", "truth.csv", "model.csv"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let pgm = fs::read(dir.path().join("model.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n64 64\n255\n"));
    let r = last_report(&dir.path().join("results.jsonl"));
    assert!(r["value"].as_f64().unwrap() >= 0.0);
    assert_eq!(r["protocol"]["resolution"], 64);
}

#[test]
fn ood_task_on_the_synthetic_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let r = run.to_str().unwrap();
    ok(&["train", "--deterministic", "--data", "synth-ood", "--epochs", "2", "--set", "model.hidden=8", "--set", "model.ffn_hidden=16", "--set", "model.m=3", "--out", r]);
    let ckpt = run.join("best.ckpt");
    let stdout = ok(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--task", "ood"]);
    assert!(stdout.contains("average_precision"), "{stdout}");
    let rep = last_report(&run.join("results.jsonl"));
    assert_eq!(rep["protocol"]["corpus"], "synth-ood");
    assert_eq!(rep["protocol"]["split"], "test");
    assert!(rep["values"]["prevalence"].as_f64().unwrap() > 0.0);
}

#[test]
fn sample_tasks_report() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = fixture().join("best.ckpt");
    let c = ckpt.to_str().unwrap();
    let o = dir.path().to_str().unwrap();
    ok(&["eval", "--checkpoint", c, "--task", "two-sample", "--trees", "10", "--out", o]);
    let r = last_report(&dir.path().join("results.jsonl"));
    assert_eq!(r["task"], "two_sample");
    let v = r["value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&v));
}

use std::path::Path;
use std::process::{Command, Output};

fn latentid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latentid"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = latentid(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// simulate → extract → score → fit-weights → fit-cu → build-dataset →
/// train → evaluate → experiments → report, twice, with identical artifacts.
fn pipeline(dir: &Path) {
    ok(dir, &["simulate", "--duration", "60", "--period", "0.2", "--out", "t.jsonl", "--truth", "g.json"]);
    ok(dir, &["extract", "--trace", "t.jsonl", "--out", "pairs.csv"]);
    ok(dir, &["score", "--trace", "t.jsonl", "--pairs", "pairs.csv", "--out", "scored.csv"]);
    ok(dir, &["fit-weights", "--trace", "t.jsonl", "--probe-kind", "tcp_lo", "--out", "w.json"]);
    ok(dir, &["fit-cu", "--trace", "t.jsonl", "--weight", "w.json", "--out", "bins.json", "--samples-out", "samples.csv"]);
    ok(dir, &["build-dataset", "--trace", "t.jsonl", "--weight", "w.json", "--period", "0.2", "--out", "ds.csv"]);
    ok(dir, &["train", "--data", "ds.csv", "--kind", "gbdt", "--n-trees", "20", "--out", "model.json"]);
    ok(dir, &["evaluate", "--model", "model.json", "--data", "ds.csv", "--out", "metrics.json"]);
    ok(dir, &["evaluate", "--data", "ds.csv", "--compare", "dt,rf", "--iterations", "2", "--out", "cmp.csv"]);
    ok(dir, &["feature-study", "--data", "ds.csv", "--subsets", "latency;all", "--sizes", "100,200", "--iterations", "2", "--kind", "dt", "--out", "fs.csv"]);
    ok(dir, &["--scale", "0.02", "cross-bin", "--data", "ds.csv", "--bins", "bins.json", "--kind", "dt", "--out", "cb.csv"]);
    ok(dir, &[
        "report", "--input", "cmp.csv", "--input", "fs.csv", "--input", "cb.csv", "--samples", "samples.csv", "--bins",
        "bins.json", "--out-dir", "figs",
    ]);
}

/// Drops the wall-clock columns (train_s, infer_s) from a report CSV.
fn without_timing(csv: &str) -> String {
    csv.lines()
        .map(|l| l.split(',').take(6).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn full_pipeline_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());

    let ds = std::fs::read_to_string(a.path().join("ds.csv")).unwrap();
    let classes: std::collections::BTreeSet<&str> = ds.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(classes.len(), 5);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("metrics.json")).unwrap()).unwrap();
    let f1 = metrics["macro_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));

    for f in [
        "t.jsonl", "g.json", "pairs.csv", "scored.csv", "w.json", "bins.json", "samples.csv", "ds.csv", "model.json",
        "figs/score_by_level.csv", "figs/latency_by_score_bin.csv", "figs/cross_bin_f1.csv",
    ] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    for f in ["cmp.csv", "fs.csv", "cb.csv"] {
        let x = std::fs::read_to_string(a.path().join(f)).unwrap();
        let y = std::fs::read_to_string(b.path().join(f)).unwrap();
        assert_eq!(without_timing(&x), without_timing(&y), "{f}");
    }
    for fig in ["feature_subsets.csv", "latency_vs_all.csv", "model_comparison.csv"] {
        assert!(a.path().join("figs").join(fig).exists(), "{fig}");
    }
}

#[test]
fn usage_errors_exit_2_and_data_errors_exit_1() {
    let d = tempfile::tempdir().unwrap();
    let out = latentid(d.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = latentid(d.path(), &["extract", "--trace", "t.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));

    let out = latentid(d.path(), &["extract", "--trace", "missing.jsonl", "--out", "p.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: trace:"));
    assert!(!d.path().join("p.csv").exists());

    std::fs::write(d.path().join("bad.json"), "{\"devices\": 3}").unwrap();
    let out = latentid(d.path(), &["simulate", "--config", "bad.json", "--out", "t.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: simulator:"));
}

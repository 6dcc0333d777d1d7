use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_gistcast");

fn gistcast(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = gistcast(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn small_config(dir: &Path) {
    std::fs::write(
        dir.join("run.toml"),
        r#"seed = 11
[synth]
articles_per_month = 4
sentences_per_article = 3
dim = 8
[bootstrap]
m = 6
n = 3
k = 2
[model]
hidden = 4
[train]
lr = 0.01
max_steps = 40
eval_every = 10
[lda]
k = 3
iterations = 30
min_df = 1
"#,
    )
    .unwrap();
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[test]
fn bootstrap_counts_on_default_panel() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["--out", "o", "synth"]);
    ok(tmp.path(), &["--out", "o", "bootstrap"]);
    let v: serde_json::Value = serde_json::from_slice(&read(tmp.path(), "o/bootstrap.json")).unwrap();
    assert_eq!(v["collections"], 3960);
    assert_eq!(v["pseudo_articles"], 336600);
    assert_eq!(v["split_counts"]["train"], 2340);
    assert_eq!(v["split_counts"]["dev"], 720);
    assert_eq!(v["split_counts"]["test"], 900);
    let lines = read(tmp.path(), "o/manifest.jsonl").iter().filter(|&&b| b == b'\n').count();
    assert_eq!(lines, 3960 + 1, "one meta line plus one line per collection");
}

#[test]
fn pipeline_outputs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let steps: [&[&str]; 7] = [
        &["synth"],
        &["bootstrap"],
        &["train"],
        &["gist"],
        &["topics"],
        &["baseline"],
        &["report"],
    ];
    for dir in [a.path(), b.path()] {
        small_config(dir);
        for s in steps {
            let mut args = vec!["--config", "run.toml", "--out", "o"];
            args.extend_from_slice(s);
            ok(dir, &args);
        }
    }
    for rel in [
        "o/manifest.jsonl",
        "o/bootstrap.json",
        "o/runs/triple/checkpoint.json",
        "o/runs/triple/train_log.csv",
        "o/runs/triple/train_report.json",
        "o/runs/triple/gists.tsv",
        "o/runs/triple/profile.tsv",
        "o/topics/topic_model.json",
        "o/baseline/adl_model.json",
        "o/report.md",
    ] {
        assert_eq!(read(a.path(), rel), read(b.path(), rel), "{rel} differs between runs");
    }
    let report = String::from_utf8(read(a.path(), "o/report.md")).unwrap();
    assert!(report.contains("| Baseline | Triple-task |"), "{report}");

    // A different seed changes the checkpoint, and the stamp records it.
    let out = gistcast(a.path(), &["--config", "run.toml", "--out", "o2", "--seed", "12", "synth"]);
    assert!(out.status.success());
    ok(a.path(), &["--config", "run.toml", "--out", "o2", "--seed", "12", "bootstrap"]);
    ok(a.path(), &["--config", "run.toml", "--out", "o2", "--seed", "12", "train"]);
    let ck: serde_json::Value = serde_json::from_slice(&read(a.path(), "o2/runs/triple/checkpoint.json")).unwrap();
    assert_eq!(ck["meta"]["seed"], 12);
    assert_ne!(read(a.path(), "o/runs/triple/checkpoint.json"), read(a.path(), "o2/runs/triple/checkpoint.json"));
}

#[test]
fn variants_write_separate_runs() {
    let tmp = tempfile::tempdir().unwrap();
    small_config(tmp.path());
    let base = ["--config", "run.toml", "--out", "o"];
    ok(tmp.path(), &[&base[..], &["synth"]].concat());
    ok(tmp.path(), &[&base[..], &["bootstrap"]].concat());
    ok(tmp.path(), &[&base[..], &["--task-weights", "1,0,0", "train"]].concat());
    ok(tmp.path(), &[&base[..], &["--attention", "raw", "train"]].concat());
    ok(tmp.path(), &[&base[..], &["--task-weights", "1,0,0", "evaluate", "--split", "dev"]].concat());
    assert!(tmp.path().join("o/runs/single/eval_dev.json").exists());
    let rep: serde_json::Value = serde_json::from_slice(&read(tmp.path(), "o/runs/triple_raw/train_report.json")).unwrap();
    assert_eq!(rep["variant"], "Triple-task");
}

#[test]
fn errors_are_one_json_line_and_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gistcast(tmp.path(), &["--out", "missing", "bootstrap"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let last = stderr.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(last).unwrap();
    assert_eq!(v["error"], "io");

    let out = gistcast(tmp.path(), &["--task-weights", "1,2", "train"]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"], "usage");

    std::fs::write(tmp.path().join("bad.toml"), "[bootstrap]\nm = 0\n").unwrap();
    let out = gistcast(tmp.path(), &["--config", "bad.toml", "bootstrap"]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"], "invalid_argument");
}

#[test]
fn interpolate_writes_monthly_series() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("ipc.csv"), "country,month,phase\nAA,2017-01,2\nAA,2017-04,3\n").unwrap();
    ok(tmp.path(), &["--out", "o", "interpolate", "--ipc", "ipc.csv"]);
    let text = String::from_utf8(read(tmp.path(), "o/interpolated.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("AA")).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("AA,2017-02,"));
}

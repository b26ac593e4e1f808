mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::*;

fn droidflow(args: &[&str], paths: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_droidflow"));
    cmd.args(args);
    for p in paths {
        cmd.arg(p);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

const TOY_CONFIG: &str = r#"
seed = 5
state_dim = 8
embed_dim = 8

[hyper]
row_len = 50
hidden_layers = 1
lstm_units = 8
label_len = 13
gnn_steps = 4
epochs = 3
batch_size = 8

[train]
learning_rate = 0.01
"#;

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(droidflow(&["frobnicate"], &[]).status.code(), Some(1));
    assert_eq!(droidflow(&["extract"], &[]).status.code(), Some(1));
    assert_eq!(droidflow(&["--help"], &[]).status.code(), Some(0));
    assert_eq!(droidflow(&["--version"], &[]).status.code(), Some(0));
}

#[test]
fn bad_config_exits_1_and_missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let out = droidflow(&["synth", "--out"], &[&dir.path().join("s"), Path::new("--config"), &cfg]);
    assert_eq!(out.status.code(), Some(1));

    fs::write(&cfg, "workers = 0\n").unwrap();
    let out = droidflow(&["synth", "--out"], &[&dir.path().join("s"), Path::new("--config"), &cfg]);
    assert_eq!(out.status.code(), Some(1));

    let out = droidflow(&["extract", "--input"], &[&dir.path().join("absent"), Path::new("--out"), dir.path()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn extract_reproduces_goldens() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture_dir("flowgraph");
    ok(&droidflow(&["extract", "--input"], &[&input, Path::new("--out"), dir.path()]));
    for name in FLOWGRAPH_FIXTURES {
        for file in ["nodes.csv", "edges.csv"] {
            let got = fs::read(dir.path().join(name).join(file)).unwrap();
            let want = fs::read(input.join(name).join("expected").join(file)).unwrap();
            assert_eq!(got, want, "{name}/{file}");
        }
        assert!(dir.path().join(name).join("report.json").exists());
    }
}

#[test]
fn a_broken_app_does_not_stop_the_batch() {
    let dir = tempfile::tempdir().unwrap();
    let apps = dir.path().join("apps");
    ok(&droidflow(&["synth", "--apps", "4", "--out"], &[&apps]));
    // One app loses its manifest; another gets an unparseable class.
    let mut names: Vec<_> = fs::read_dir(&apps).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir()).collect();
    names.sort();
    fs::remove_file(names[0].join("AndroidManifest.xml")).unwrap();
    fs::write(names[1].join("smali").join("Junk.smali"), "garbage").unwrap();

    let out = dir.path().join("features");
    ok(&droidflow(&["extract", "--input"], &[&apps, Path::new("--out"), &out]));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("extraction.json")).unwrap()).unwrap();
    let entries = summary.as_array().unwrap();
    assert_eq!(entries.len(), 4);
    let failed: Vec<_> = entries.iter().filter(|e| e["ok"] == false).collect();
    assert_eq!(failed.len(), 1);
    assert!(failed[0]["error"].as_str().unwrap().contains("AndroidManifest.xml"));
    let junk = entries.iter().find(|e| e["app_id"] == names[1].file_name().unwrap().to_str().unwrap()).unwrap();
    assert_eq!(junk["ok"], true);
    assert_eq!(junk["diagnostics"], 1);
    let report = fs::read_to_string(out.join(names[1].file_name().unwrap()).join("report.json")).unwrap();
    assert!(report.contains("Junk.smali"));
}

fn toy_run(root: &Path) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let cfg = root.join("cfg.toml");
    fs::write(&cfg, TOY_CONFIG).unwrap();
    let c = Path::new("--config");
    let (apps, feat, run) = (root.join("apps"), root.join("feat"), root.join("run"));
    ok(&droidflow(&["synth", "--apps", "40", "--out"], &[&apps, c, &cfg]));
    ok(&droidflow(&["extract", "--workers", "3", "--input"], &[&apps, Path::new("--out"), &feat, c, &cfg]));
    ok(&droidflow(&["train", "--features"], &[&feat, Path::new("--out"), &run, c, &cfg]));
    let pred = root.join("pred.csv");
    ok(&droidflow(
        &["predict", "--model"],
        &[&run.join("model.bin"), Path::new("--features"), &feat, Path::new("--split"), &run.join("split.json"), Path::new("--out"), &pred, c, &cfg],
    ));
    let metrics = root.join("metrics.json");
    ok(&droidflow(&["evaluate", "--predictions"], &[&pred, Path::new("--out"), &metrics, c, &cfg]));
    let loss = fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().next(), Some("epoch,loss"));
    assert_eq!(loss.lines().count(), 4);
    (fs::read(run.join("model.bin")).unwrap(), fs::read(&pred).unwrap(), fs::read(&metrics).unwrap())
}

#[test]
fn toy_pipeline_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = toy_run(a.path());
    let rb = toy_run(b.path());
    assert!(ra.0 == rb.0, "model bytes differ");
    assert_eq!(ra.1, rb.1);
    assert_eq!(ra.2, rb.2);
    // Only held-out apps are scored: 10% of each class of 40.
    assert_eq!(String::from_utf8(ra.1).unwrap().lines().count(), 1 + 4);
}

#[test]
fn evaluate_hand_written_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("p.csv");
    fs::write(
        &pred,
        "app_id,predicted,probability,malicious_score,label\n\
         a,malicious,0.9,0.9,malicious\n\
         b,malicious,0.8,0.8,benign\n\
         c,benign,0.7,0.3,malicious\n\
         d,benign,0.9,0.1,benign\n",
    )
    .unwrap();
    let out = dir.path().join("m.json");
    ok(&droidflow(&["evaluate", "--predictions"], &[&pred, Path::new("--out"), &out]));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(m["accuracy"], 0.5);
    assert_eq!(m["precision"], 0.5);
    assert_eq!(m["recall"], 0.5);
    // Pairs (pos, neg): (0.9,0.8) (0.9,0.1) (0.3,0.1) ordered, (0.3,0.8) not.
    assert_eq!(m["roc_auc"], 0.75);

    fs::write(&pred, "app_id,predicted\nx,benign\n").unwrap();
    assert_eq!(droidflow(&["evaluate", "--predictions"], &[&pred, Path::new("--out"), &out]).status.code(), Some(2));
}

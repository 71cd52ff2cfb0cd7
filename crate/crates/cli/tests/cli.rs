use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn neurolight(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neurolight"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_BACKTRACE", "0")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_writes_fields_and_report() {
    let dir = tempfile::tempdir().unwrap();
    ok(&neurolight(&["simulate", "--seed", "3", "--out", "sim"], dir.path()));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sim/simulation.json")).unwrap()).unwrap();
    let residuals = report["residuals"].as_array().unwrap();
    assert_eq!(residuals.len(), 3);
    assert!(residuals.iter().all(|r| r.as_f64().unwrap() < 1e-6));
    for k in 0..3 {
        assert!(dir.path().join(format!("sim/port{k}_real.png")).exists());
        assert!(dir.path().join(format!("sim/port{k}_abs.png")).exists());
    }
}

#[test]
fn train_eval_sweep_plot_adapt_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(
        &cfg,
        "[device]\ncount = 13\n[model]\nchannels = 8\nblocks = 1\nhead_channels = 8\n[train]\nepochs = 1\n[adapt]\nprobe_epochs = 1\ntune_epochs = 1\ncount = 13\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    ok(&neurolight(&["gen-dataset", "--config", c, "--out", "data"], dir.path()));
    assert!(dir.path().join("data/manifest.json").exists());
    ok(&neurolight(&["train", "--config", c, "--data", "data", "--out", "run"], dir.path()));
    assert!(dir.path().join("run/best").is_dir());
    assert!(dir.path().join("run/curve.csv").exists());

    for mode in ["single", "multi"] {
        ok(&neurolight(&["eval", "--config", c, "--checkpoint", "run/best", "--data", "data", "--mode", mode, "--out", "eval"], dir.path()));
        assert!(dir.path().join(format!("eval/eval_{mode}.csv")).exists());
    }
    ok(&neurolight(&["sweep", "--config", c, "--checkpoint", "run/best", "--data", "data", "--port", "1", "--out", "sweep"], dir.path()));
    assert_eq!(fs::read_to_string(dir.path().join("sweep/sweep.csv")).unwrap().lines().count(), 9);
    ok(&neurolight(&["plot", "--config", c, "--checkpoint", "run/best", "--data", "data", "--out", "plots"], dir.path()));
    assert_eq!(fs::read_dir(dir.path().join("plots")).unwrap().count(), 1);

    let four = dir.path().join("four.toml");
    fs::write(&four, fs::read_to_string(&cfg).unwrap().replace("[device]\n", "[device]\nn_ports = 4\n")).unwrap();
    let f = four.to_str().unwrap();
    ok(&neurolight(&["gen-dataset", "--config", f, "--out", "data4"], dir.path()));
    ok(&neurolight(&["adapt", "--config", f, "--checkpoint", "run/best", "--data", "data4", "--out", "adapted"], dir.path()));
    assert!(dir.path().join("adapted/adapted").is_dir());
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[train]\nepoch = 3\n").unwrap();
    let out = neurolight(&["simulate", "--config", "bad.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));

    let out = neurolight(&["train", "--out", "run"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no dataset"));

    let out = neurolight(&["eval", "--checkpoint", "missing", "--data", "nowhere", "--mode", "both"], dir.path());
    assert!(!out.status.success());
}

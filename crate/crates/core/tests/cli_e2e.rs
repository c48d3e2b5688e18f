use std::path::Path;
use std::process::{Command, Output};

use vitalfuse::cli::PatientReport;
use vitalfuse::model::RiskLevel;
use vitalfuse::triage::Color;

fn vitalfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vitalfuse"))
        .args(args)
        .env("NO_COLOR", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const QUIET: &str = r#"{
  "patient_count": 2,
  "duration_s": 3600,
  "rng_seed": 5,
  "sigma_fraction": 0.02,
  "ages": [30, 50]
}"#;

fn simulate_and_run(dir: &Path, scenario: &str) -> std::path::PathBuf {
    let spec = dir.join("scenario.json");
    std::fs::write(&spec, scenario).unwrap();
    let replay = dir.join("replay.ndjson");
    let o = vitalfuse(&["simulate", "--scenario", s(&spec), "--out", s(&replay)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let data = dir.join("data");
    let o = vitalfuse(&["--data-dir", s(&data), "run", "--replay", s(&replay)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    data
}

#[test]
fn simulate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"patient_count": 2, "duration_s": -5, "rng_seed": 1}"#).unwrap();
    assert_eq!(code(&vitalfuse(&["simulate", "--scenario", s(&bad)])), 2);
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&vitalfuse(&["simulate", "--scenario", s(&bad)])), 2);
    assert_eq!(code(&vitalfuse(&["simulate"])), 2);
    assert_eq!(code(&vitalfuse(&["simulate", "--bogus"])), 2);
    let good = dir.path().join("good.json");
    std::fs::write(&good, QUIET).unwrap();
    let o = vitalfuse(&["simulate", "--scenario", s(&good)]);
    assert_eq!(code(&o), 0);
    assert!(!o.stdout.is_empty());
}

#[test]
fn seed_flag_changes_the_stream() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.json");
    std::fs::write(&spec, QUIET).unwrap();
    let a = vitalfuse(&["simulate", "--scenario", s(&spec)]).stdout;
    let b = vitalfuse(&["--seed", "5", "simulate", "--scenario", s(&spec)]).stdout;
    let c = vitalfuse(&["--seed", "6", "simulate", "--scenario", s(&spec)]).stdout;
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn empty_replay_is_fine() {
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("empty.ndjson");
    std::fs::write(&replay, "").unwrap();
    let data = dir.path().join("data");
    let o = vitalfuse(&["--data-dir", s(&data), "run", "--replay", s(&replay)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 samples accepted"));
}

#[test]
fn missing_replay_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = vitalfuse(&[
        "--data-dir",
        s(&dir.path().join("d")),
        "run",
        "--replay",
        s(&dir.path().join("nope.ndjson")),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn healthy_patients_stay_green_and_reports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_and_run(dir.path(), QUIET);

    let o = vitalfuse(&["--data-dir", s(&data), "report", "--patient", "p-001", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let report: PatientReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report.patient_id, "p-001");
    // One hour of one-minute epochs, plus the epoch holding the closing sample.
    assert_eq!(report.history.len(), 61);
    for t in &report.history {
        assert_eq!(t.risk, RiskLevel::Low, "at {}", t.ts_ms);
        assert_eq!(t.color, Color::Green);
    }

    let o = vitalfuse(&["--data-dir", s(&data), "report", "--patient", "p-001", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("ts_ms,risk,color,path,matched_row"));
    assert_eq!(lines.count(), report.history.len());

    let o = vitalfuse(&["--data-dir", s(&data), "report", "--patient", "p-002"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("next epoch:"));

    assert_eq!(
        code(&vitalfuse(&["--data-dir", s(&data), "report", "--patient", "p-404"])),
        2
    );
}

#[test]
fn training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_and_run(dir.path(), QUIET);
    let cfg = dir.path().join("train.cfg");
    std::fs::write(&cfg, "lstm.hidden_units = 4\nlstm.epochs = 20\nlstm.lr_decay_epoch = 10\n").unwrap();
    let ckpt = data.join("models").join("p-001.heart_rate.json");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let o = vitalfuse(&[
            "--config",
            s(&cfg),
            "--seed",
            "3",
            "--data-dir",
            s(&data),
            "train",
            "--patient",
            "p-001",
            "--kind",
            "heart_rate",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        runs.push(std::fs::read(&ckpt).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
    assert!(data.join("models").join("p-001.heart_rate.loss.csv").exists());
    assert_eq!(
        code(&vitalfuse(&["--data-dir", s(&data), "train", "--patient", "p-404", "--kind", "heart_rate"])),
        2
    );
}

#[test]
fn ranges_prints_the_table() {
    let o = vitalfuse(&["ranges"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).count() >= 6 * 7);
}

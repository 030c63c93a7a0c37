//! End-to-end runs of the `ems-bench` binary.

use std::path::Path;
use std::process::{Command, Output};

fn ems(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ems-bench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

#[test]
fn schedule_prints_header_and_48_days() {
    let o = ems(&["schedule", "--seed", "1"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 49);
    assert!(text.starts_with("day,house_1,house_2,house_3,house_4\n"));
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/schedule_seed1.csv")).unwrap();
    assert_eq!(text, golden);
}

#[test]
fn bad_arguments_exit_1() {
    assert_eq!(code(&ems(&[])), 1);
    assert_eq!(code(&ems(&["schedule", "--seed", "minus-one"])), 1);
    assert_eq!(code(&ems(&["no-such-command"])), 1);
    assert_eq!(code(&ems(&["report", "--input", "x.csv", "--format", "xml"])), 1);
}

#[test]
fn help_exits_0() {
    let o = ems(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("run-experiment"));
}

#[test]
fn missing_or_invalid_inputs_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&ems(&["run-experiment", "--config", p(&missing)])), 1);
    assert_eq!(code(&ems(&["report", "--input", p(&dir.path().join("missing.csv"))])), 1);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\nstart = \"2024-04-02\"\nprices = \"p.csv\"\nunknown_key = 3\n").unwrap();
    let o = ems(&["run-experiment", "--config", p(&bad)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let junk = dir.path().join("junk.csv");
    std::fs::write(&junk, "not,a,report\n").unwrap();
    assert_eq!(code(&ems(&["report", "--input", p(&junk)])), 1);
}

#[test]
fn synth_train_run_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = ems(&["synth", "--out", p(&data), "--start", "2024-05-01", "--days", "6", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg_path = data.join("experiment.toml");
    assert!(cfg_path.exists());

    let policy = data.join("policy.txt");
    let log = data.join("train.csv");
    let o = ems(&[
        "train-treec", "--config", p(&cfg_path), "--house", "1", "--from", "2024-05-02", "--days", "2",
        "--population", "6", "--generations", "3", "--restarts", "1", "--out", p(&policy), "--log", p(&log),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(policy.exists() && log.exists());

    // Two scheduled days, no MPC-P, with the trained policy.
    let cfg = std::fs::read_to_string(&cfg_path).unwrap();
    let cfg = cfg.replacen(
        "prices = \"prices.csv\"\n",
        "prices = \"prices.csv\"\ndays = 2\ntreec_policy = \"policy.txt\"\n\n[mpc]\nrun_mpc_p = false\n",
        1,
    );
    std::fs::write(&cfg_path, cfg).unwrap();

    let o = ems(&["simulate", "--config", p(&cfg_path), "--house", "2", "--ems", "RBC", "--from", "2024-05-02"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let days = dir.path().join("days.csv");
    let o = ems(&["run-experiment", "--config", p(&cfg_path), "--out", p(&days)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&days).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 4);
    assert!(!text.contains(",failed,"), "{text}");

    let o = ems(&["report", "--input", p(&days), "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let summary = stdout(&o);
    for name in ["RBC", "TreeC", "MPC", "RL-stub"] {
        assert!(summary.contains(name), "{summary}");
    }
    let o = ems(&["report", "--input", p(&days)]);
    assert_eq!(code(&o), 0);
}

use std::path::Path;
use std::process::{Command, Output};

fn qpv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpv")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_figure3(dir: &Path) -> String {
    let path = dir.join("fig.toml");
    std::fs::write(
        &path,
        "search_intensities = false\nloss_end = 30.0\nloss_step = 0.25\nN = [1e11, 1e12]\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_out_is_a_config_error_naming_the_field() {
    let o = qpv(&["bounds"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`out`"), "{}", stderr(&o));
}

#[test]
fn bad_config_values_name_their_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "dark_count = 2.0\n").unwrap();
    let out = dir.path().join("o");
    let o = qpv(&["simulate-decoy", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`dark_count`"), "{}", stderr(&o));

    let o = qpv(&["bounds", "--eta", "1.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`eta`"));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let o = qpv(&["bounds", "--eta", "1.0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn bounds_reports_zero_gap() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let o = qpv(&["bounds", "--eta", "1.0", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("bounds.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
    let gap: f64 = row[3].parse().unwrap();
    assert!(gap.abs() <= 1e-12);
    assert_eq!(row[4], "0");
    assert!(out.join("manifest.json").exists());
}

#[test]
fn figure3_is_byte_identical_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_figure3(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = qpv(&["figure3", "--config", &cfg, "--seed", "9", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let csv_a = std::fs::read(a.join("figure3.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read(b.join("figure3.csv")).unwrap());
    assert!(csv_a.starts_with(b"# config {"));

    let replayed = dir.path().join("r");
    let o = qpv(&[
        "replay",
        a.join("manifest.json").to_str().unwrap(),
        "--out",
        replayed.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_a, std::fs::read(replayed.join("figure3.csv")).unwrap());
}

#[test]
fn replay_detects_tampered_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q");
    let o = qpv(&["simulate-qubit", "--trials", "5", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let path = out.join("manifest.json");
    let mut manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    manifest["outputs"]["qubit.csv"] = serde_json::Value::String("0".repeat(64));
    std::fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
    let o = qpv(&["replay", path.to_str().unwrap(), "--out", dir.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("qubit.csv"));
}

#[test]
fn seeds_change_sampled_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let out = dir.path().join(seed);
        let o = qpv(&["attack-bench", "--eta", "0.5", "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(out.join("attack_bench.csv")).unwrap()
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn figure3_default_search_tolerates_high_loss_at_large_n() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f");
    let o = qpv(&["figure3", "--N", "1e13", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let cutoff = summary["curves"][0]["refined_cutoff_db"].as_f64().unwrap();
    assert!((cutoff - 47.0).abs() <= 3.0, "{cutoff}");
    assert!(stdout(&o).contains("cutoff"));
}

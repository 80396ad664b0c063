use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn quorum_sync(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quorum-sync"))
        .args(args)
        .env_remove("QUORUM_SYNC_OUTPUT_DIR")
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

const GRID: &str = r#"{
  "name": "cli-test",
  "axes": {
    "n_agents": [16],
    "cycle_len": [10],
    "horizon": [200],
    "theta": [0.5],
    "flash_fraction": [0.5],
    "noise": [0.0, 0.2],
    "topology": {"kind": "regular", "degrees": [3, 15]}
  },
  "repetitions": 3,
  "base_seed": 11
}"#;

fn write_grid(dir: &Path) -> String {
    let path = dir.join("grid.json");
    fs::write(&path, GRID).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn run_prints_record_with_header() {
    let out = quorum_sync(&["run", "--n", "30", "--t", "300", "--seed", "5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "seed,n_agents,cycle_len,horizon,theta,f,sigma,topology,k_or_r,a_max,success,time_to_sync,cluster_count_final"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 13);
    assert_eq!(row[0], "5");
    assert_eq!(row[1], "30");
}

#[test]
fn run_is_deterministic_in_json() {
    let args = ["run", "--n", "25", "--t", "300", "--sigma", "0.1", "--seed", "9", "--format", "json"];
    let a = quorum_sync(&args);
    let b = quorum_sync(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["seed"], 9);
    assert_eq!(v["sigma"], 0.1);
}

#[test]
fn run_rejects_too_small_flash_window() {
    let out = quorum_sync(&["run", "--f", "0.1", "--c", "10"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("flash_fraction"), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
}

#[test]
fn run_from_explicit_clocks_writes_amplitude_series() {
    let dir = tempfile::tempdir().unwrap();
    let clocks = dir.path().join("clocks.json");
    fs::write(&clocks, "[5, 5]").unwrap();
    let series = dir.path().join("amp.csv");
    let out = quorum_sync(&[
        "run",
        "--n",
        "2",
        "--t",
        "10",
        "--init-clocks",
        clocks.to_str().unwrap(),
        "--amplitude-csv",
        series.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(&series).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,amplitude,flashing_count");
    assert_eq!(lines.len(), 11);
    // two equal clocks stay equal, so the amplitude is always 0 or 1
    for line in &lines[1..] {
        let amp = line.split(',').nth(1).unwrap();
        assert!(amp == "0" || amp == "1" || amp == "0.0" || amp == "1.0", "{line}");
    }
}

#[test]
fn run_rejects_out_of_range_clocks() {
    let dir = tempfile::tempdir().unwrap();
    let clocks = dir.path().join("clocks.json");
    fs::write(&clocks, "[5, 10]").unwrap();
    let out = quorum_sync(&["run", "--n", "2", "--init-clocks", clocks.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn topology_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("topo.json");
    let t = topo.to_str().unwrap();
    let gen = quorum_sync(&["validate-graph", "--n", "30", "--topology", "regular", "--k", "4", "--seed", "2", "--topology-out", t]);
    assert!(gen.status.success(), "{}", stderr(&gen));
    assert!(stdout(&gen).contains("{4:30}"));

    let a = quorum_sync(&["run", "--n", "30", "--t", "200", "--topology-in", t, "--seed", "1"]);
    let b = quorum_sync(&["run", "--n", "30", "--t", "200", "--topology", "regular", "--k", "4", "--seed", "2"]);
    assert!(a.status.success(), "{}", stderr(&a));
    // same graph, different run seed: only the seed column and dynamics may differ,
    // but the topology columns must match
    let cols = |o: &Output| stdout(o).lines().nth(1).unwrap().split(',').skip(7).take(2).map(str::to_owned).collect::<Vec<_>>();
    assert_eq!(cols(&a), cols(&b));
}

#[test]
fn validate_graph_reports_disconnected_geometric_graph() {
    let out = quorum_sync(&["validate-graph", "--n", "50", "--topology", "geometric", "--r", "0.05", "--format", "json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["components"].as_array().unwrap().len() > 1);
}

#[test]
fn sweep_replays_from_manifest_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write_grid(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let first = quorum_sync(&["sweep", "--grid", &grid, "--out", a.to_str().unwrap(), "--jobs", "3"]);
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(stdout(&first).contains("success_fraction"));

    let manifest = a.join("manifest.json");
    let second = quorum_sync(&["sweep", "--manifest", manifest.to_str().unwrap(), "--out", b.to_str().unwrap(), "--jobs", "1"]);
    assert!(second.status.success(), "{}", stderr(&second));

    let ra = fs::read(a.join("results.csv")).unwrap();
    let rb = fs::read(b.join("results.csv")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(String::from_utf8(ra).unwrap().lines().count(), 1 + 2 * 2 * 3);
}

#[test]
fn sweep_seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write_grid(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(quorum_sync(&["sweep", "--grid", &grid, "--out", a.to_str().unwrap()]).status.success());
    assert!(quorum_sync(&["sweep", "--grid", &grid, "--seed", "12", "--out", b.to_str().unwrap()]).status.success());
    assert_ne!(fs::read(a.join("results.csv")).unwrap(), fs::read(b.join("results.csv")).unwrap());
}

#[test]
fn sweep_exits_3_when_points_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    fs::write(&grid, GRID.replace("\"flash_fraction\": [0.5]", "\"flash_fraction\": [0.1, 0.5]")).unwrap();
    let out = quorum_sync(&["sweep", "--grid", grid.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let issues = fs::read_to_string(dir.path().join("o/issues.log")).unwrap();
    assert!(issues.contains("flash_fraction"));
}

#[test]
fn sweep_preset_requires_seed() {
    let out = quorum_sync(&["sweep", "--preset", "parity"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--seed"));
}

#[test]
fn analyze_groups_results() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write_grid(dir.path());
    let o = dir.path().join("o");
    assert!(quorum_sync(&["sweep", "--grid", &grid, "--out", o.to_str().unwrap()]).status.success());
    let tidy = dir.path().join("tidy.csv");
    let out = quorum_sync(&[
        "analyze",
        o.join("results.csv").to_str().unwrap(),
        "--group-by",
        "sigma,k",
        "--out",
        tidy.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(tidy).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sigma,k_or_r,runs,successes,success_fraction,half_width,mean_a_max");
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(2) == Some("3")));
}

#[test]
fn analyze_reports_malformed_and_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "nonsense\n").unwrap();
    let out = quorum_sync(&["analyze", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = quorum_sync(&["analyze", empty.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("empty"), "{}", stderr(&out));
}

#[test]
fn run_help_lists_model_flags() {
    let out = quorum_sync(&["run", "--help"]);
    let text = stdout(&out);
    for flag in ["--n ", "--c ", "--t ", "--theta", "--f ", "--sigma", "--topology", "--seed", "--init-clocks"] {
        assert!(text.contains(flag), "missing {flag}");
    }
}

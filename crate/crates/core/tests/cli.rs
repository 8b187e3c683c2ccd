use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use infodemand::sim::Scenario;
use tempfile::tempdir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_infodemand"));
    c.env_remove("INFODEMAND_DRAWS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn small_scenario(dir: &Path) -> String {
    let mut s = Scenario::default();
    s.population.n = 150;
    s.model.draws = 2000;
    s.arms.weights.t3_star = 0.0;
    s.arms.weights.ra_star = 0.0;
    let path = dir.join("small.json");
    fs::write(&path, s.to_json()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn shipped_default_scenario_matches_builtin() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/default.json");
    let parsed = Scenario::from_json(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(parsed, Scenario::default());
}

#[test]
fn simulate_is_byte_identical_and_manifested() {
    let dir = tempdir().unwrap();
    let cfg = small_scenario(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["simulate", "--config", &cfg, "--seed", "11", "--out-dir", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    }
    let ta = fs::read(a.join("trials.csv")).unwrap();
    assert!(!ta.is_empty());
    assert_eq!(ta, fs::read(b.join("trials.csv")).unwrap());

    let ma: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let mb: serde_json::Value = serde_json::from_slice(&fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(ma["scenario_hash"], mb["scenario_hash"]);
    assert_eq!(ma["seed"], 11);
    assert_eq!(ma["subcommand"], "simulate");
    assert_eq!(ma["files"][0], "trials.csv");

    let c = dir.path().join("c");
    run(&["simulate", "--config", &cfg, "--seed", "12", "--out-dir", c.to_str().unwrap()]);
    assert_ne!(ta, fs::read(c.join("trials.csv")).unwrap());
}

#[test]
fn invalid_scenario_exits_3_with_field_path() {
    let dir = tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&Scenario::default().to_json()).unwrap();
    v["model"]["noise_var"] = serde_json::json!(-1.0);
    let path = dir.path().join("bad.json");
    fs::write(&path, v.to_string()).unwrap();
    let o = run(&["simulate", "--config", path.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(text(&o.stderr).contains("model.noise_var"), "{}", text(&o.stderr));

    v["model"]["noise_var"] = serde_json::json!("loud");
    fs::write(&path, v.to_string()).unwrap();
    let o = run(&["simulate", "--config", path.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(text(&o.stderr).contains("model.noise_var"));
}

#[test]
fn analyze_round_trip_and_schema_errors() {
    let dir = tempdir().unwrap();
    let cfg = small_scenario(dir.path());
    let sim_dir = dir.path().join("sim");
    let o = run(&["simulate", "--config", &cfg, "--out-dir", sim_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let trials = sim_dir.join("trials.csv");

    let out = dir.path().join("fit");
    let o = run(&[
        "analyze",
        "--trials",
        trials.to_str().unwrap(),
        "--specs",
        "persuasion,learning",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    for f in ["regressions.csv", "regressions_persuasion.csv", "regressions_learning.csv", "summary_beliefs.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert!(!out.join("regressions_demand.csv").exists());
    let reg = fs::read_to_string(out.join("regressions.csv")).unwrap();
    assert!(reg.starts_with("spec,term,estimate,cluster_se,t,p\n"));

    let o = run(&["analyze", "--trials", trials.to_str().unwrap(), "--specs", "astrology", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    // drop two required columns
    let full = fs::read_to_string(&trials).unwrap();
    let header: Vec<&str> = full.lines().next().unwrap().split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| header[i] != "disagreement" && header[i] != "learning").collect();
    let cut: String = full
        .lines()
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            keep.iter().map(|&i| cells[i]).collect::<Vec<_>>().join(",") + "\n"
        })
        .collect();
    let bad = dir.path().join("cut.csv");
    fs::write(&bad, cut).unwrap();
    let o = run(&["analyze", "--trials", bad.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let err = text(&o.stderr);
    assert!(err.contains("disagreement") && err.contains("learning"), "{err}");
}

#[test]
fn verify_exit_codes() {
    let o = run(&["verify", "--suite", "lemmaB1", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(text(&o.stdout).contains("result: pass"));

    let o = run(&["verify", "--suite", "prop1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(text(&o.stdout).contains("0 violations"));

    let o = run(&["verify", "--suite", "propB1", "--seed", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(text(&o.stdout).contains("[note]"));

    assert_eq!(run(&["verify", "--suite", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["verify"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn voi_draws_come_from_environment() {
    let args = ["voi", "--mu", "69", "--sigma2", "400", "--noise-var", "100", "--reservation", "80", "--cost", "0"];
    let o = bin().args(args).env("INFODEMAND_DRAWS", "5000").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let out = text(&o.stdout);
    assert!(out.lines().nth(1).unwrap().ends_with(",5000"), "{out}");

    let o = bin().args(args).args(["--draws", "3000"]).env("INFODEMAND_DRAWS", "5000").output().unwrap();
    assert!(text(&o.stdout).lines().nth(1).unwrap().ends_with(",3000"));

    let o = bin().args(args).env("INFODEMAND_DRAWS", "lots").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn voi_config_prints_bundle_table() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("belief.json");
    fs::write(
        &path,
        r#"{"mu": [60, 65, 70], "common_var": 50, "specific_var": [100, 200, 150],
            "noise_var": 100, "reservation": 72, "cost": 0.1}"#,
    )
    .unwrap();
    let o = run(&["voi", "--config", path.to_str().unwrap(), "--draws", "4000", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let out = text(&o.stdout);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "bundle,signals,value,std_err,argmax");
    assert_eq!(rows.len(), 1 + 8);
    assert_eq!(rows.iter().filter(|r| r.ends_with(",1")).count(), 1);
    assert!(rows[1].starts_with("\"{}\",0,0.000000000000,"));

    fs::write(&path, r#"{"mu": [1], "specific_var": [1], "noise_var": 1, "reservation": 0, "colour": 3}"#).unwrap();
    let o = run(&["voi", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

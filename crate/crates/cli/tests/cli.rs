use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sqa-lab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn sqa-lab")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails_naming(args: &[&str], key: &str) {
    let out = run(args);
    assert_eq!(out.status.code(), Some(2), "{args:?} should be rejected");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(key), "error for {args:?} does not name `{key}`: {err}");
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn version_names_commit_and_target() {
    let v = ok(&["--version"]);
    assert!(v.starts_with("sqa-lab "));
    assert!(v.contains("commit:") && v.contains("target:"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", r#"{"n": 4, "trotters": 8}"#);
    fails_naming(&["sqa", "run", "--config", &cfg], "trotters");
    let sweep = write(&dir, "s.json", r#"{"mode": "mixing", "ns": [4], "tolerance_x": 1}"#);
    fails_naming(&["sweep", "--config", &sweep], "tolerance_x");
    let mode = write(&dir, "m.json", r#"{"mode": "speed"}"#);
    fails_naming(&["sweep", "--config", &mode], "mode");
}

#[test]
fn invalid_values_name_the_parameter() {
    fails_naming(&["sqa", "run", "--n", "4", "--L", "0"], "`L`");
    fails_naming(&["oracle", "--n", "4", "--s-grid", "0.5:0.5:1.5"], "`s`");
    fails_naming(&["sa", "run", "--n", "4", "--ratio", "1.5"], "ratio");
    fails_naming(&["oracle", "--n", "4", "--marginal", "trotter", "--beta", "1"], "`L`");
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", r#"{"n": 6, "beta": 1.5, "L": 8, "replicas": 7, "seed": 3}"#);
    let json: Value = serde_json::from_str(&ok(&["sqa", "run", "--config", &cfg, "--replicas", "5", "--no-oracle"])).unwrap();
    let c = &json["config"];
    assert_eq!(c["replicas"], 5);
    assert_eq!(c["n"], 6);
    assert_eq!(c["L"], 8);
    assert_eq!(c["beta"], 1.5);
    assert_eq!(c["track_oracle"], false);
    assert_eq!(json["params"]["replicas"], 5);
}

#[test]
fn derived_defaults_are_recorded() {
    let json: Value = serde_json::from_str(&ok(&["sqa", "run", "--n", "4", "--replicas", "2", "--no-oracle"])).unwrap();
    // beta = n^(1/2), L = ceil(n^2 beta^(3/2))
    assert_eq!(json["config"]["beta"], 2.0);
    assert_eq!(json["config"]["L"], 46);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        ok(&["--no-timing", "sqa", "run", "--n", "6", "--L", "8", "--beta", "2", "--replicas", "16", "--seed", "11", "--out", path_str(out)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let sa1 = ok(&["--no-timing", "sa", "run", "--n", "8", "--replicas", "16", "--steps-per-t", "5", "--seed", "4"]);
    let sa2 = ok(&["--no-timing", "--threads", "1", "sa", "run", "--n", "8", "--replicas", "16", "--steps-per-t", "5", "--seed", "4"]);
    assert_eq!(sa1, sa2, "output depends on the thread count");
}

#[test]
fn report_is_reproducible_from_its_own_config() {
    let dir = TempDir::new().unwrap();
    let first = ok(&["--no-timing", "sqa", "run", "--n", "5", "--beta", "1", "--L", "6", "--replicas", "8", "--seed", "2"]);
    let json: Value = serde_json::from_str(&first).unwrap();
    let cfg = write(&dir, "echo.json", &json["config"].to_string());
    let second = ok(&["--no-timing", "sqa", "run", "--config", &cfg]);
    assert_eq!(first, second);
    assert!(json["success_rate"].as_f64().unwrap() >= 0.0);
    assert_eq!(json["per_s"][0]["s"], 0.0);
}

#[test]
fn sqa_csv_and_snapshots() {
    let dir = TempDir::new().unwrap();
    let snaps = dir.path().join("snaps.jsonl");
    let csv = ok(&[
        "sqa", "run", "--n", "4", "--beta", "1", "--L", "4", "--replicas", "3", "--format", "csv",
        "--snapshot-every", "1", "--snapshots", path_str(&snaps),
    ]);
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("s,active,tv_to_oracle"));
    assert!(lines.count() > 1);
    let text = std::fs::read_to_string(&snaps).unwrap();
    assert!(text.lines().count() > 1);
    for line in text.lines() {
        let _: Value = serde_json::from_str(line).unwrap();
    }
}

#[test]
fn oracle_csv_matches_the_free_qubit_at_s0() {
    let csv = ok(&["oracle", "--n", "4", "--s-grid", "0:0.5:1"]);
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3 * 5);
    // s = 0: Binomial(4, 1/2) and gap 2
    let binom = [1.0, 4.0, 6.0, 4.0, 1.0];
    for (k, row) in rows[..5].iter().enumerate() {
        assert_eq!(&row[0], "0");
        assert!((row[1].parse::<f64>().unwrap() - 2.0).abs() < 1e-12);
        assert!((row[3].parse::<f64>().unwrap() - binom[k] / 16.0).abs() < 1e-12);
    }
    // s = 1: all mass on weight 0
    assert!((rows[10][3].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn oracle_json_trotter_marginal() {
    let json: Value = serde_json::from_str(&ok(&["oracle", "--n", "6", "--beta", "2", "--L", "8", "--s-grid", "0.3:0.1:0.4", "--format", "json"])).unwrap();
    assert_eq!(json["marginal_kind"], "trotter");
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let total: f64 = rows[0]["marginal"]["probs"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn separation_sweep_writes_paired_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "sep.json",
        r#"{"ns": [4, 6], "alpha": 0.3333333333333333, "zeta": 0, "beta": 2, "kernel": "heat_bath",
            "c": 1, "steps_per_s": 1, "replicas": 10, "seed": 3}"#,
    );
    let out = dir.path().join("sep.csv");
    ok(&["sweep", "--config", &cfg, "--replicas", "12", "--out", path_str(&out)]);
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["n", "alpha", "zeta", "beta", "L", "s", "kernel", "sweeps", "tv", "st_mean", "st_m2", "success", "seed"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(&rows[0][6], "heat-bath");
    assert_eq!(&rows[1][6], "sa");
    // each n gives an SQA row then an SA row
    assert_eq!(&rows[0][0], &rows[1][0]);
    for r in &rows {
        let p: f64 = r[11].parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn mixing_sweep_json() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "mix.json",
        r#"{"mode": "mixing", "ns": [4, 6], "alpha": 0.3333333333333333, "zeta": 0, "beta": 2, "s": 0.5,
            "kernel": "metropolis", "replicas": 200, "max_sweeps": 2000, "tolerance": 0.1, "seed": 1}"#,
    );
    let json: Value = serde_json::from_str(&ok(&["sweep", "--config", &cfg, "--format", "json"])).unwrap();
    assert_eq!(json["config"]["mode"], "mixing");
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["warm"]["sweeps"].as_u64().unwrap() > 0));
    assert!(json["fit"]["exponent"].is_number());
}

#[test]
fn analyze_named_instances() {
    let json: Value = serde_json::from_str(&ok(&["analyze", "--instance", "sqa-pair"])).unwrap();
    let checks = json["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    for c in checks {
        assert_eq!(c["holds"], true, "sqa pair check failed: {c}");
    }
    assert_eq!(json["omega_theta"].as_array().unwrap().len(), 8);

    let json: Value = serde_json::from_str(&ok(&["analyze", "--instance", "trap"])).unwrap();
    assert_eq!(json["restricted"]["centered_holds"], true);
    assert!(json["leaky"]["rows"].as_array().unwrap().len() > 1);
}

#[test]
fn analyze_chain_file() {
    let dir = TempDir::new().unwrap();
    let chain = write(
        &dir,
        "two.json",
        r#"{"P": [[0.7, 0.3], [0.1, 0.9]], "pi": [0.25, 0.75]}"#,
    );
    let json: Value = serde_json::from_str(&ok(&["analyze", "--chain", &chain])).unwrap();
    assert_eq!(json["states"], 2);
    assert!((json["gap"].as_f64().unwrap() - 0.4).abs() < 1e-12);

    let easy = write(&dir, "easy.json", r#"{"P": [[0.5, 0.5], [0.5, 0.5]], "pi": [0.5, 0.5]}"#);
    // same chain on both sides: Omega_theta is empty and every check holds
    let json: Value = serde_json::from_str(&ok(&["analyze", "--easy", &chain, "--hard", &chain, "--theta", "1.5"])).unwrap();
    assert!(json["omega_theta"].as_array().unwrap().is_empty());
    assert!(json["checks"].as_array().unwrap().iter().all(|c| c["holds"] == true));
    fails_naming(&["analyze", "--easy", &easy, "--hard", &chain, "--theta", "1.5"], "infeasible");
    fails_naming(&["analyze", "--easy", &easy, "--hard", &chain], "theta");
    fails_naming(&["analyze"], "instance");
}

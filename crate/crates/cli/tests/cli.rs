use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use eti_core::chain::{analyze, instances, ChainAnalysis};
use eti_core::io::spec_to_json;

fn eti(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eti"))
        .args(args)
        .env_remove("ETI_SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn w2_file(dir: &Path) -> PathBuf {
    write(dir, "w2.json", &spec_to_json(&instances::w2()))
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn analyze_reports_treatment_effect_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let spec = w2_file(dir.path());
    let v = stdout_json(&eti(&["analyze", "--spec", spec.to_str().unwrap()]));
    assert!((v["result"]["treatment_effect"].as_f64().unwrap() + 1.0 / 6.0).abs() < 1e-12);
    assert_eq!(v["command"], "analyze");
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 16);
    let parsed: ChainAnalysis = serde_json::from_value(v["result"].clone()).unwrap();
    assert_eq!(parsed, analyze(&instances::w2()).unwrap());
}

#[test]
fn identical_chains_have_zero_effect() {
    let dir = tempfile::tempdir().unwrap();
    let mut raw = instances::w2_raw();
    raw.transition[1] = raw.transition[0].clone();
    raw.rewards[1] = raw.rewards[0].clone();
    let spec = eti_core::chain::validate_spec(&raw).unwrap();
    let path = write(dir.path(), "same.json", &spec_to_json(&spec));
    let v = stdout_json(&eti(&["analyze", "--spec", path.to_str().unwrap()]));
    assert_eq!(v["result"]["treatment_effect"].as_f64().unwrap(), 0.0);
}

#[test]
fn reducible_spec_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"n_states": 2, "chains": [
        {"P": [[1, 0], [0, 1]]},
        {"P": [[0.5, 0.5], [0.5, 0.5]]}]}"#;
    let path = write(dir.path(), "reducible.json", text);
    let out = eti(&["analyze", "--spec", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reducible"));
}

#[test]
fn configuration_errors_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = w2_file(dir.path());
    let spec = spec.to_str().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"unknown_field": 1}"#);
    for args in [
        vec!["analyze", "--config", bad.to_str().unwrap()],
        vec!["analyze", "--spec", "/does/not/exist.json"],
        vec!["simulate", "--spec", spec, "--policy", "markov:0.5"],
        vec!["design", "--spec", spec, "--regenerative", "3"],
        vec!["simulate", "--spec", spec, "--bogus"],
    ] {
        assert_eq!(eti(&args).status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn symmetric_spec_splits_stationary_mass_evenly() {
    let dir = tempfile::tempdir().unwrap();
    let mut raw = instances::w2_raw();
    raw.transition[1] = raw.transition[0].clone();
    raw.rewards[1] = raw.rewards[0].clone();
    let spec = eti_core::chain::validate_spec(&raw).unwrap();
    let path = write(dir.path(), "sym.json", &spec_to_json(&spec));
    let v = stdout_json(&eti(&["design", "--spec", path.to_str().unwrap()]));
    let pi = [2.0 / 3.0, 1.0 / 3.0];
    for c in 0..2 {
        for (x, p) in pi.iter().enumerate() {
            let k = v["result"]["markov"]["kappa_star"]["values"][c][x].as_f64().unwrap();
            assert!((k - p / 2.0).abs() < 1e-7, "chain {c} state {x}: {k}");
        }
    }
}

#[test]
fn regenerative_design_at_first_state() {
    let dir = tempfile::tempdir().unwrap();
    let spec = w2_file(dir.path());
    let v = stdout_json(&eti(&["design", "--spec", spec.to_str().unwrap(), "--regenerative", "1"]));
    let r = &v["result"]["regenerative"];
    assert_eq!(r["xr"], 0);
    assert!((r["p_star"].as_f64().unwrap() - 0.7496).abs() < 1e-3);
    assert!((r["q_star"].as_f64().unwrap() - 0.6918).abs() < 1e-3);
    assert_eq!(v["result"]["flags"].as_array().unwrap().len(), 0);
}

#[test]
fn zero_variance_states_are_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let spec = eti_core::simulator::coop_example_spec(8, 0.5, 0.5).unwrap();
    let path = write(dir.path(), "coop.json", &spec_to_json(&spec));
    let v = stdout_json(&eti(&["design", "--spec", path.to_str().unwrap()]));
    assert_eq!(v["result"]["flags"][0], "REGULARIZED");
    assert_eq!(v["result"]["markov"]["regularized"], true);
}

#[test]
fn monte_carlo_output_ignores_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let spec = w2_file(dir.path());
    let spec = spec.to_str().unwrap();
    let run = |t: &str| {
        let out = eti(&["mc", "--spec", spec, "--policy", "eti", "--n", "3000", "--reps", "12", "--seed", "9", "--threads", t]);
        assert!(out.status.success());
        out.stdout
    };
    let one = run("1");
    assert_eq!(one, run("2"));
    assert_eq!(one, run("4"));
}

#[test]
fn seed_precedence_is_flag_then_env_then_config() {
    let dir = tempfile::tempdir().unwrap();
    w2_file(dir.path());
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"spec": "w2.json", "policy": "markov:0.5,0.5", "n": 100, "seed": 3}"#,
    );
    let cfg = cfg.to_str().unwrap();
    let seed_of = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_eti"));
        cmd.args(["simulate", "--config", cfg]).args(extra).env_remove("ETI_SEED");
        if let Some(e) = env {
            cmd.env("ETI_SEED", e);
        }
        stdout_json(&cmd.output().unwrap())["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(&[], None), 3);
    assert_eq!(seed_of(&[], Some("5")), 5);
    assert_eq!(seed_of(&["--seed", "7"], Some("5")), 7);
}

#[test]
fn simulate_writes_checkpoint_csv_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let spec = w2_file(dir.path());
    let out_dir = dir.path().join("out");
    let v = stdout_json(&eti(&[
        "online",
        "--spec",
        spec.to_str().unwrap(),
        "--algo",
        "eti2",
        "--xr",
        "1",
        "--n",
        "5000",
        "--checkpoint",
        "1000",
        "--seed",
        "4",
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    let hash = v["config_hash"].as_str().unwrap();
    let csv = std::fs::read_to_string(out_dir.join("online_checkpoints.csv")).unwrap();
    assert!(!csv.contains('\r'));
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("n,alpha_hat_mle,alpha_hat_sae,gamma_hat_json"));
    assert_eq!(lines.len(), 6);
    assert!(lines[1..].iter().all(|l| l.ends_with(&format!("{hash},4"))));
    assert!(lines[5].contains("p_hat"));
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("online.json")).unwrap()).unwrap();
    assert_eq!(saved, v);
}

#[test]
fn coop_emits_ratio_table() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let v = stdout_json(&eti(&[
        "coop", "--s", "4", "--s", "8", "--n", "4000", "--reps", "40", "--out", out_dir.to_str().unwrap(),
    ]));
    let rows = v["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["ratio"].as_f64().unwrap() > 0.0));
    let csv = std::fs::read_to_string(out_dir.join("coop.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("s,designed_scaled_var,isolation_scaled_var,ratio"));
}

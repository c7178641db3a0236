//! End-to-end tests of the `feedaudit` binary: exit codes, report shape,
//! and bit-level determinism across reruns and thread counts.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};
use tempfile::TempDir;

struct Run {
    code: i32,
    report: Option<Value>,
    stderr: String,
}

fn feedaudit(subcommand: &str, config: &Path, args: &[&str], threads: &str) -> Run {
    let output = Command::new(env!("CARGO_BIN_EXE_feedaudit"))
        .arg(subcommand)
        .arg("--config")
        .arg(config)
        .args(args)
        .env("RAYON_NUM_THREADS", threads)
        .output()
        .expect("binary runs");
    let report = if output.stdout.is_empty() {
        None
    } else {
        Some(serde_json::from_slice(&output.stdout).expect("stdout is a JSON report"))
    };
    Run {
        code: output.status.code().expect("no signal"),
        report,
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
    }
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn simulate_config(out_dir: &Path, gap: f64, reference: Option<Value>) -> Value {
    let mut spec = json!({
        "n": 2,
        "users": 3,
        "gap": [gap, gap, gap],
        "eps1": 0.0,
        "eps2": 0.5
    });
    if let Some(reference) = reference {
        spec["reference"] = reference;
    }
    json!({
        "command": "simulate",
        "seed": 11,
        "spec": spec,
        "m_trajectories": 20,
        "horizon": 200,
        "out_dir": out_dir.display().to_string()
    })
}

fn regulatory_config(feed_dir: &Path, seed: u64) -> Value {
    json!({
        "command": "test-regulatory",
        "seed": seed,
        "filtered": feed_dir.join("filtered.jsonl").display().to_string(),
        "reference": feed_dir.join("reference.jsonl").display().to_string(),
        "test": {
            "n": 2, "u": 3, "m_trajectories": 20, "horizon": 200,
            "eps1": 0.0, "eps2": 0.5, "delta": 0.1, "m_bar": 100
        }
    })
}

#[test]
fn null_scenario_pipeline_exits_zero() {
    let dir = TempDir::new().unwrap();
    let feeds = dir.path().join("feeds");
    let sim = write_config(dir.path(), "sim.json", &simulate_config(&feeds, 0.0, None));
    let run = feedaudit("simulate", &sim, &[], "2");
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    let report = run.report.unwrap();
    assert_eq!(report["result"]["epochs"][0]["regime"], "Null");
    let epoch_dir = feeds.join("epoch-1");
    assert!(epoch_dir.join("truth.json").exists());

    let test = write_config(dir.path(), "reg.json", &regulatory_config(&epoch_dir, 12));
    let run = feedaudit("test-regulatory", &test, &[], "2");
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    let report = run.report.unwrap();
    assert_eq!(report["result"]["decision"], "YES");
    assert_eq!(report["result"]["reason"], Value::Null);
    assert_eq!(report["result"]["m_bar"], 100);
}

#[test]
fn alternative_scenario_exits_one_with_statistic_reason() {
    let dir = TempDir::new().unwrap();
    let feeds = dir.path().join("feeds");
    let reference = json!([[0.75, 0.25], [0.25, 0.75]]);
    let sim = write_config(
        dir.path(),
        "sim.json",
        &simulate_config(&feeds, 1.0, Some(reference)),
    );
    let run = feedaudit("simulate", &sim, &[], "2");
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    let report = run.report.unwrap();
    assert_eq!(report["result"]["epochs"][0]["regime"], "Alternative");

    let epoch_dir = feeds.join("epoch-1");
    let test = write_config(dir.path(), "reg.json", &regulatory_config(&epoch_dir, 13));
    let run = feedaudit("test-regulatory", &test, &[], "2");
    assert_eq!(run.code, 1, "stderr: {}", run.stderr);
    let report = run.report.unwrap();
    assert_eq!(report["result"]["decision"], "NO");
    assert_eq!(report["result"]["reason"], "Statistic");
}

#[test]
fn echoed_config_reproduces_the_result() {
    let dir = TempDir::new().unwrap();
    let feeds = dir.path().join("feeds");
    let sim = write_config(dir.path(), "sim.json", &simulate_config(&feeds, 0.0, None));
    assert_eq!(feedaudit("simulate", &sim, &[], "2").code, 0);

    let epoch_dir = feeds.join("epoch-1");
    let test = write_config(dir.path(), "reg.json", &regulatory_config(&epoch_dir, 12));
    let first = feedaudit("test-regulatory", &test, &[], "2");
    let first_report = first.report.unwrap();

    // The report's config echo, taken alone, must reproduce the result.
    let echo = write_config(dir.path(), "echo.json", &first_report["config"]);
    let second = feedaudit("test-regulatory", &echo, &[], "2");
    assert_eq!(second.code, first.code);
    let second_report = second.report.unwrap();
    assert_eq!(second_report["result"], first_report["result"]);
    assert_eq!(second_report["seed"], first_report["seed"]);
}

#[test]
fn iid_samples_round_trip_through_the_binary() {
    let dir = TempDir::new().unwrap();
    let mut identical = String::new();
    let mut disjoint = String::new();
    for half in [1, 2] {
        let ones = json!({"u": 1, "world": "P", "half": half, "symbols": vec![1; 50]});
        identical.push_str(&format!(
            "{ones}\n{}\n",
            json!({"u": 1, "world": "Q", "half": half, "symbols": vec![1; 50]})
        ));
        disjoint.push_str(&format!(
            "{ones}\n{}\n",
            json!({"u": 1, "world": "Q", "half": half, "symbols": vec![2; 50]})
        ));
    }
    let same = dir.path().join("same.jsonl");
    let apart = dir.path().join("apart.jsonl");
    std::fs::write(&same, identical).unwrap();
    std::fs::write(&apart, disjoint).unwrap();

    let config = |samples: &Path| {
        json!({
            "command": "test-iid",
            "seed": 4,
            "samples": samples.display().to_string(),
            "test": {
                "u": 1, "n": 2, "m": 50, "eps1": 0.0, "eps2": 0.5,
                "delta": 0.1, "poissonize": false
            }
        })
    };
    let yes = write_config(dir.path(), "same.json", &config(&same));
    let run = feedaudit("test-iid", &yes, &[], "2");
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    let report = run.report.unwrap();
    assert_eq!(report["result"]["decision"], "YES");
    assert!(report["result"]["g"].as_f64().unwrap() < 0.0);
    assert!(report["inputs"][same.display().to_string()].is_string());

    let no = write_config(dir.path(), "apart.json", &config(&apart));
    let run = feedaudit("test-iid", &no, &[], "2");
    assert_eq!(run.code, 1, "stderr: {}", run.stderr);
    assert_eq!(run.report.unwrap()["result"]["decision"], "NO");
}

#[test]
fn missing_field_exits_two_naming_it() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "bad.json",
        &json!({
            "command": "test-iid",
            "seed": 4,
            "samples": "unused.jsonl",
            "test": {"u": 1, "n": 2, "m": 50, "eps1": 0.0, "delta": 0.1}
        }),
    );
    let run = feedaudit("test-iid", &config, &[], "2");
    assert_eq!(run.code, 2);
    assert!(run.report.is_none());
    assert!(run.stderr.contains("eps2"), "stderr: {}", run.stderr);
}

#[test]
fn subcommand_must_match_config_command() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "cover.json",
        &json!({
            "command": "cover-time",
            "seed": 1,
            "chain": [[0.0, 1.0], [1.0, 0.0]],
            "m": 1, "k": 1, "trials": 200
        }),
    );
    let run = feedaudit("test-iid", &config, &[], "2");
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("does not match"), "stderr: {}", run.stderr);
}

#[test]
fn cover_time_reports_the_exact_alternating_stop_and_horizon() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "cover.json",
        &json!({
            "command": "cover-time",
            "seed": 9,
            "chain": [[0.0, 1.0], [1.0, 0.0]],
            "m": 1, "k": 1, "trials": 200,
            "u": 1, "delta": 0.2
        }),
    );
    let run = feedaudit("cover-time", &config, &[], "2");
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    let report = run.report.unwrap();
    // The alternating chain covers both states at step 2 from any start.
    assert_eq!(report["result"]["t_hat"], 2.0);
    // ceil(e * ln(4 / 0.2) * 2) + 1.
    assert_eq!(report["result"]["horizon"], 18);
    assert_eq!(
        report["result"]["per_profile"].as_array().unwrap().len(),
        3
    );
}

#[test]
fn sweep_is_bit_identical_across_threads_and_reruns() {
    let dir = TempDir::new().unwrap();
    let csv_path = dir.path().join("sweep.csv");
    let truth = |p: Value, q: Value| json!({"users": [{"P_R": p, "Q_F": q}], "eps1": 0.0, "eps2": 0.5});
    let uniform = json!([[0.5, 0.5], [0.5, 0.5]]);
    let skewed = json!([[0.9, 0.1], [0.5, 0.5]]);
    let flipped = json!([[0.1, 0.9], [0.5, 0.5]]);
    let iid = json!({
        "u": 1, "n": 2, "m": 60, "eps1": 0.0, "eps2": 0.5,
        "delta": 0.1, "poissonize": false
    });
    let config = write_config(
        dir.path(),
        "sweep.json",
        &json!({
            "command": "sweep",
            "seed": 5,
            "trials": 150,
            "csv_out": csv_path.display().to_string(),
            "points": [
                {
                    "scenario_id": "null-uniform",
                    "truth": truth(uniform.clone(), uniform),
                    "tester": {"kind": "iid", "config": iid}
                },
                {
                    "scenario_id": "alt-flipped",
                    "truth": truth(skewed, flipped),
                    "tester": {"kind": "iid", "config": iid}
                }
            ]
        }),
    );
    let out1 = dir.path().join("r1.json");
    let out2 = dir.path().join("r2.json");
    let run = feedaudit(
        "sweep",
        &config,
        &["--out", out1.to_str().unwrap()],
        "4",
    );
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    let csv1 = std::fs::read(&csv_path).unwrap();

    let run = feedaudit(
        "sweep",
        &config,
        &["--out", out2.to_str().unwrap()],
        "1",
    );
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    let csv2 = std::fs::read(&csv_path).unwrap();

    assert_eq!(csv1, csv2, "CSV bytes must not depend on thread count");
    assert_eq!(
        std::fs::read(&out1).unwrap(),
        std::fs::read(&out2).unwrap(),
        "reports must not depend on thread count"
    );

    let text = String::from_utf8(csv1).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario_id,tester,trials,yes_rate,se,seed"
    );
    let rate = |line: &str| line.split(',').nth(3).unwrap().parse::<f64>().unwrap();
    let null_rate = rate(lines.next().unwrap());
    let alt_rate = rate(lines.next().unwrap());
    assert!(null_rate >= 0.9, "null point yes rate {null_rate}");
    assert!(alt_rate <= 0.1, "alternative point yes rate {alt_rate}");
}

#[test]
fn seed_override_changes_the_report_seed() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "cover.json",
        &json!({
            "command": "cover-time",
            "seed": 9,
            "chain": [[0.5, 0.5], [0.5, 0.5]],
            "m": 1, "k": 1, "trials": 200
        }),
    );
    let base = feedaudit("cover-time", &config, &[], "2");
    let overridden = feedaudit("cover-time", &config, &["--seed-override", "77"], "2");
    assert_eq!(base.report.as_ref().unwrap()["seed"], 9);
    let report = overridden.report.unwrap();
    assert_eq!(report["seed"], 77);
    assert_eq!(report["config"]["seed"], 77, "echo carries the override");
}

#[test]
fn calibrate_writes_a_stable_artifact_that_testers_accept() {
    let dir = TempDir::new().unwrap();
    let artifact = dir.path().join("constants.json");
    let grid = json!([
        {
            "n": 2, "u": 1, "eps1": 0.0, "eps2": 1.0,
            "pairs": [[[0.5, 0.5], [0.5, 0.5]]],
            "regime": "null"
        },
        {
            "n": 2, "u": 1, "eps1": 0.0, "eps2": 1.0,
            "pairs": [[[1.0, 0.0], [0.0, 1.0]]],
            "regime": "alternative"
        }
    ]);
    let config = write_config(
        dir.path(),
        "cal.json",
        &json!({
            "command": "calibrate",
            "seed": 21,
            "trials": 200,
            "target_delta": 0.1,
            "grid": grid,
            "artifact_out": artifact.display().to_string()
        }),
    );
    let run = feedaudit("calibrate", &config, &[], "2");
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    let report = run.report.unwrap();
    assert!(report["result"]["achieved_error"].as_f64().unwrap() <= 0.1);
    let first = std::fs::read(&artifact).unwrap();
    let parsed: Value = serde_json::from_slice(&first).unwrap();
    assert!(parsed["c"].as_f64().unwrap() > 0.0);
    assert!(parsed["C"].as_f64().unwrap() >= 2.0);
    assert!(parsed["grid_hash"].is_string());

    assert_eq!(feedaudit("calibrate", &config, &[], "1").code, 0);
    assert_eq!(
        std::fs::read(&artifact).unwrap(),
        first,
        "artifact bytes must be reproducible"
    );

    // A tester config can point at the artifact instead of inline constants.
    let samples = dir.path().join("s.jsonl");
    let mut lines = String::new();
    for half in [1, 2] {
        for world in ["P", "Q"] {
            lines.push_str(&format!(
                "{}\n",
                json!({"u": 1, "world": world, "half": half, "symbols": vec![1; 50]})
            ));
        }
    }
    std::fs::write(&samples, lines).unwrap();
    let test = write_config(
        dir.path(),
        "iid.json",
        &json!({
            "command": "test-iid",
            "seed": 4,
            "samples": samples.display().to_string(),
            "test": {
                "u": 1, "n": 2, "m": 50, "eps1": 0.0, "eps2": 0.5, "delta": 0.1,
                "poissonize": false,
                "calibration_file": artifact.display().to_string()
            }
        }),
    );
    let run = feedaudit("test-iid", &test, &[], "2");
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    let report = run.report.unwrap();
    assert!(
        report["inputs"][artifact.display().to_string()].is_string(),
        "artifact hash belongs in the provenance block"
    );
}

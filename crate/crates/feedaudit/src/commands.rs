//! Command implementations. Each takes its parsed config and a root seed,
//! runs the core, and returns a JSON result plus an exit code; `run` wraps
//! everything in the self-describing report envelope.

use anyhow::{bail, Context, Result};
use feedaudit_core::calibrate::{calibrate_constant, shipped_grid, GridPoint};
use feedaudit_core::counterfactual::{
    counterfactual_tester, CounterfactualConfig, CounterfactualPairing, CounterfactualVerdict,
};
use feedaudit_core::cover::{estimate_cover_time, StartProfile};
use feedaudit_core::iid::{iid_tester, IidVerdict};
use feedaudit_core::markov::validate_chain;
use feedaudit_core::oracle::{verdict_probability, ScenarioTruth, TesterKind};
use feedaudit_core::regulatory::{
    horizon_multiplier, regulatory_tester, NoReason, RegulatoryVerdict,
};
use feedaudit_core::scenario::{generate_feeds, make_scenario};
use feedaudit_core::seed::Seed;
use feedaudit_core::{Decision, Regime};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    CalibrateConfig, ChainSource, CounterfactualJson, ExperimentConfig, GridChoice,
    SimulateConfig, SweepConfig, TestCounterfactualConfig, TestIidConfig, TestRegulatoryConfig,
    TesterJson, CoverTimeConfig,
};
use crate::formats::{
    batch_to_records, load_json, load_jsonl, records_to_batches, records_to_sample_sets,
    write_json, write_jsonl, CalibrationJson, ChainJson, PairingJson, SampleRecord,
    TrajectoryRecord, TruthJson, TruthUserJson,
};
use crate::hash::InputHashes;

/// What a command produced: the full report and the process exit code.
#[derive(Debug)]
pub struct Outcome {
    /// The report document.
    pub report: Value,
    /// 0 for YES/success, 1 for NO.
    pub exit_code: i32,
}

/// Dispatches `config` and wraps the result in the report envelope:
/// command, config echo, input hashes, seed, result.
pub fn run(config: &ExperimentConfig, mut hashes: InputHashes) -> Result<Outcome> {
    let seed = Seed::new(config.seed());
    let (result, exit_code) = match config {
        ExperimentConfig::Simulate(c) => (simulate(c, seed)?, 0),
        ExperimentConfig::TestIid(c) => test_iid(c, seed, &mut hashes)?,
        ExperimentConfig::TestRegulatory(c) => test_regulatory(c, seed, &mut hashes)?,
        ExperimentConfig::TestCounterfactual(c) => test_counterfactual(c, seed, &mut hashes)?,
        ExperimentConfig::Calibrate(c) => (calibrate(c, seed)?, 0),
        ExperimentConfig::CoverTime(c) => (cover_time(c, seed, &mut hashes)?, 0),
        ExperimentConfig::Sweep(c) => (sweep(c, seed, &mut hashes)?, 0),
    };
    let report = json!({
        "command": config.command(),
        "config": serde_json::to_value(config)?,
        "inputs": hashes.entries(),
        "seed": config.seed(),
        "result": result,
    });
    Ok(Outcome { report, exit_code })
}

fn exit_for(decision: Decision) -> i32 {
    match decision {
        Decision::Yes => 0,
        Decision::No => 1,
    }
}

fn regime_str(regime: Regime) -> &'static str {
    match regime {
        Regime::Null => "Null",
        Regime::Alternative => "Alternative",
        Regime::Between => "Between",
    }
}

fn iid_verdict_json(v: &IidVerdict) -> Value {
    let per_pair_g: Vec<f64> = v
        .statistic
        .per_pair_terms
        .iter()
        .map(|terms| terms.iter().sum())
        .collect();
    json!({
        "decision": v.decision.to_string(),
        "g": v.statistic.total,
        "tau": v.statistic.threshold,
        "per_pair_g": per_pair_g,
        "truncated": v.truncated,
    })
}

fn regulatory_verdict_json(v: &RegulatoryVerdict) -> Value {
    json!({
        "decision": v.decision.to_string(),
        "reason": v.reason.map(|r| match r {
            NoReason::Coverage => "Coverage",
            NoReason::Statistic => "Statistic",
        }),
        "m_bar": v.m_bar,
        "per_state": v.per_state.iter().map(|s| json!({
            "state": s.state,
            "coverage_ok": s.coverage_ok,
            "coverage": s.coverage.iter().map(|c| json!({
                "user": c.user,
                "filtered_visits": c.filtered_visits,
                "reference_visits": c.reference_visits,
                "ok": c.ok,
            })).collect::<Vec<_>>(),
            "verdict": s.verdict.as_ref().map(iid_verdict_json),
        })).collect::<Vec<_>>(),
    })
}

fn counterfactual_verdict_json(v: &CounterfactualVerdict) -> Value {
    json!({
        "decision": v.decision.to_string(),
        "reference_users": v.reference_users,
        "block1": regulatory_verdict_json(&v.block1),
        "block2": regulatory_verdict_json(&v.block2),
    })
}

fn simulate(config: &SimulateConfig, seed: Seed) -> Result<Value> {
    let spec = config.spec.to_spec();
    let scenario = make_scenario(&spec, seed.child("scenario"))?;
    let feeds = generate_feeds(
        &scenario,
        config.m_trajectories,
        config.horizon,
        seed.child("feeds"),
    )?;
    let mut epochs = Vec::with_capacity(feeds.len());
    for (epoch, epoch_feeds) in scenario.epochs.iter().zip(&feeds) {
        let dir = config.out_dir.join(format!("epoch-{}", epoch.epoch));
        let collect = |batches: &[feedaudit_core::regulatory::FeedBatch]| {
            batches
                .iter()
                .flat_map(batch_to_records)
                .collect::<Vec<TrajectoryRecord>>()
        };
        write_jsonl(&dir.join("filtered.jsonl"), &collect(&epoch_feeds.filtered))?;
        write_jsonl(&dir.join("reference.jsonl"), &collect(&epoch_feeds.reference))?;
        let truth = TruthJson {
            users: epoch
                .users
                .iter()
                .map(|u| TruthUserJson {
                    p_r: u.reference.rows().to_vec(),
                    q_f: u.filtered.rows().to_vec(),
                })
                .collect(),
            eps1: scenario.eps1,
            eps2: scenario.eps2,
        };
        write_json(&dir.join("truth.json"), &truth)?;
        epochs.push(json!({
            "epoch": epoch.epoch,
            "dir": dir.display().to_string(),
            "total_gap": epoch.total_gap,
            "regime": regime_str(epoch.regime),
            "users": epoch.users.iter().map(|u| json!({
                "user": u.user,
                "designated_row": u.designated_row,
                "target_gap": u.target_gap,
                "realized_gap": u.realized_gap,
                "adversarial": u.adversarial,
            })).collect::<Vec<_>>(),
        }));
    }
    Ok(json!({
        "out_dir": config.out_dir.display().to_string(),
        "n": scenario.n,
        "epochs": epochs,
    }))
}

fn test_iid(config: &TestIidConfig, seed: Seed, hashes: &mut InputHashes) -> Result<(Value, i32)> {
    let test_config = config.test.to_config(hashes)?;
    let records: Vec<SampleRecord> = load_jsonl(&config.samples, hashes)?;
    let (p, q) = records_to_sample_sets(&records)?;
    if p.len() != test_config.u as usize {
        bail!(
            "samples file holds {} pairs, config says u = {}",
            p.len(),
            test_config.u
        );
    }
    let verdict = iid_tester(&p, &q, &test_config, seed.child("test"))?;
    Ok((iid_verdict_json(&verdict), exit_for(verdict.decision)))
}

fn test_regulatory(
    config: &TestRegulatoryConfig,
    seed: Seed,
    hashes: &mut InputHashes,
) -> Result<(Value, i32)> {
    let test_config = config.test.to_config(hashes)?;
    let filtered_records: Vec<TrajectoryRecord> = load_jsonl(&config.filtered, hashes)?;
    let reference_records: Vec<TrajectoryRecord> = load_jsonl(&config.reference, hashes)?;
    let filtered = records_to_batches(&filtered_records, "F", test_config.n)?;
    let reference = records_to_batches(&reference_records, "R", test_config.n)?;
    let verdict = regulatory_tester(&filtered, &reference, &test_config, seed.child("test"))?;
    Ok((
        regulatory_verdict_json(&verdict),
        exit_for(verdict.decision),
    ))
}

fn counterfactual_config(
    json: &CounterfactualJson,
    hashes: &mut InputHashes,
) -> Result<CounterfactualConfig> {
    Ok(CounterfactualConfig {
        regulatory: json.regulatory.to_config(hashes)?,
        delta_b1: json.delta_b1,
        delta_b2: json.delta_b2,
    })
}

fn test_counterfactual(
    config: &TestCounterfactualConfig,
    seed: Seed,
    hashes: &mut InputHashes,
) -> Result<(Value, i32)> {
    let test_config = counterfactual_config(&config.test, hashes)?;
    let pairing_json: PairingJson = load_json(&config.pairing, hashes)?;
    let pairing = CounterfactualPairing::new(pairing_json.pairs)?;
    let filtered_records: Vec<TrajectoryRecord> = load_jsonl(&config.filtered, hashes)?;
    let reference_records: Vec<TrajectoryRecord> = load_jsonl(&config.reference, hashes)?;
    let n = test_config.regulatory.n;
    let filtered = records_to_batches(&filtered_records, "F", n)?;
    let reference = records_to_batches(&reference_records, "R", n)?;
    let verdict = counterfactual_tester(&pairing, &filtered, &reference, &test_config, seed.child("test"))?;
    Ok((
        counterfactual_verdict_json(&verdict),
        exit_for(verdict.decision),
    ))
}

fn calibrate(config: &CalibrateConfig, seed: Seed) -> Result<Value> {
    let grid: Vec<GridPoint> = match &config.grid {
        GridChoice::Named(name) if name == "shipped" => shipped_grid(),
        GridChoice::Named(other) => {
            bail!("unknown grid {other:?}; only \"shipped\" is built in")
        }
        GridChoice::Inline(points) => points
            .iter()
            .map(|p| p.to_point())
            .collect::<Result<_>>()?,
    };
    let calibration = calibrate_constant(
        &grid,
        config.trials,
        config.target_delta,
        seed.child("calibrate"),
    )?;
    let grid_hash = format!("{:016x}", calibration.grid_hash);
    if let Some(path) = &config.artifact_out {
        write_json(
            path,
            &CalibrationJson {
                c: calibration.c,
                big_c: calibration.big_c,
                grid_hash: grid_hash.clone(),
                achieved_error: calibration.achieved_error,
            },
        )?;
    }
    Ok(json!({
        "c": calibration.c,
        "C": calibration.big_c,
        "regime_constant": calibration.regime_constant,
        "c_low": calibration.c_low,
        "c_high": calibration.c_high,
        "achieved_error": calibration.achieved_error,
        "achieved_error_se": calibration.achieved_error_se,
        "point_errors": calibration.point_errors,
        "trials": calibration.trials,
        "grid_points": grid.len(),
        "grid_hash": grid_hash,
        "artifact": config.artifact_out.as_ref().map(|p| p.display().to_string()),
    }))
}

fn cover_time(config: &CoverTimeConfig, seed: Seed, hashes: &mut InputHashes) -> Result<Value> {
    if config.u.is_some() != config.delta.is_some() {
        bail!("u and delta must be given together to report a horizon");
    }
    let rows = match &config.chain {
        ChainSource::Rows(rows) => rows.clone(),
        ChainSource::File(path) => {
            let chain_json: ChainJson = load_json(path, hashes)?;
            if chain_json.rows.len() != chain_json.n as usize {
                bail!(
                    "chain file declares n = {} but has {} rows",
                    chain_json.n,
                    chain_json.rows.len()
                );
            }
            chain_json.rows
        }
    };
    let chain = validate_chain(rows)?;
    let estimate = estimate_cover_time(
        &chain,
        config.m,
        config.k,
        config.trials,
        config.budget,
        seed.child("cover"),
    )?;
    let t_hat = estimate.t_hat();
    let horizon = match (config.u, config.delta) {
        (Some(u), Some(delta)) => {
            Some((horizon_multiplier(u, delta) * t_hat).ceil() as u64 + 1)
        }
        _ => None,
    };
    Ok(json!({
        "m": estimate.m,
        "k": estimate.k,
        "trials": estimate.trials,
        "budget": config.budget,
        "t_hat": t_hat,
        "per_profile": estimate.per_profile.iter().map(|p| json!({
            "profile": match p.profile {
                StartProfile::AllAt(s) => format!("all-at-{s}"),
                StartProfile::Stationary => "stationary".to_string(),
            },
            "mean": p.mean,
            "se": p.se,
        })).collect::<Vec<_>>(),
        "horizon": horizon,
    }))
}

#[derive(Debug, Serialize)]
struct SweepRow {
    scenario_id: String,
    tester: &'static str,
    trials: u32,
    yes_rate: f64,
    se: f64,
    seed: u64,
}

fn sweep(config: &SweepConfig, seed: Seed, hashes: &mut InputHashes) -> Result<Value> {
    if config.points.is_empty() {
        bail!("sweep needs at least one point");
    }
    struct Prepared {
        scenario_id: String,
        tester_name: &'static str,
        truth: ScenarioTruth,
        tester: TesterKind,
        seed: Seed,
    }
    // Constants resolution touches files, so it happens serially up front;
    // only the trials parallelize.
    let prepared: Vec<Prepared> = config
        .points
        .iter()
        .enumerate()
        .map(|(i, point)| {
            let context = || format!("sweep point {} ({})", i, point.scenario_id);
            let truth = point.truth.to_truth().with_context(context)?;
            let tester = match &point.tester {
                TesterJson::Iid { config, row } => TesterKind::Iid {
                    config: config.to_config(hashes).with_context(context)?,
                    row: *row,
                },
                TesterJson::Regulatory { config } => TesterKind::Regulatory {
                    config: config.to_config(hashes).with_context(context)?,
                },
                TesterJson::Counterfactual { config, pairing } => TesterKind::Counterfactual {
                    config: counterfactual_config(config, hashes).with_context(context)?,
                    pairing: CounterfactualPairing::new(pairing.pairs.clone())
                        .with_context(context)?,
                },
            };
            Ok(Prepared {
                scenario_id: point.scenario_id.clone(),
                tester_name: point.tester.kind_name(),
                truth,
                tester,
                seed: seed.child("point").index(i as u64),
            })
        })
        .collect::<Result<_>>()?;

    let rows: Vec<SweepRow> = prepared
        .par_iter()
        .map(|p| {
            let prob = verdict_probability(&p.truth, &p.tester, config.trials, p.seed)
                .with_context(|| format!("sweep point {}", p.scenario_id))?;
            Ok(SweepRow {
                scenario_id: p.scenario_id.clone(),
                tester: p.tester_name,
                trials: prob.trials,
                yes_rate: prob.yes_rate,
                se: prob.se,
                seed: p.seed.value(),
            })
        })
        .collect::<Result<_>>()?;

    if let Some(parent) = config.csv_out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let mut writer = csv::Writer::from_path(&config.csv_out)
        .with_context(|| format!("opening {}", config.csv_out.display()))?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;

    Ok(json!({
        "csv": config.csv_out.display().to_string(),
        "rows": rows.iter().map(|r| json!({
            "scenario_id": r.scenario_id,
            "tester": r.tester,
            "trials": r.trials,
            "yes_rate": r.yes_rate,
            "se": r.se,
            "seed": r.seed,
        })).collect::<Vec<_>>(),
    }))
}

//! Acceptance gate for the whole stack. Each test exercises one advertised
//! guarantee end to end and prints a single PASS/FAIL line; run with
//! `cargo test --test acceptance -- --nocapture` to see every line.

use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;

use feedaudit_core::calibrate::CalibrationConstants;
use feedaudit_core::counterfactual::{
    combine_block_verdicts, counterfactual_tester, counterfactual_variability,
    required_horizon_cf, CounterfactualConfig, CounterfactualPairing,
};
use feedaudit_core::cover::{estimate_cover_time, joint_k_cover_stop, ChainWalk};
use feedaudit_core::iid::{required_m, IIDTestConfig};
use feedaudit_core::markov::{simulate_trajectory, validate_chain, MarkovChain};
use feedaudit_core::oracle::{
    empirical_g_moments, linf_matrix_distance, plugin_chain_estimate, verdict_probability,
    ScenarioTruth, TesterKind,
};
use feedaudit_core::regulatory::{required_horizon, FeedBatch, RegulatoryConfig, World};
use feedaudit_core::scenario::{make_scenario, simulate_feed_batch, ScenarioSpec};
use feedaudit_core::seed::Seed;
use feedaudit_core::successors::extract_successors;
use feedaudit_core::Decision;
use rand::Rng;
use tempfile::TempDir;

fn verdict_line(name: &str, pass: bool, detail: &str) {
    println!("{}: {name} [{detail}]", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn uniform10() -> Vec<f64> {
    vec![0.1; 10]
}

/// l1 distance exactly 0.5 from uniform over ten symbols.
fn alt10() -> Vec<f64> {
    vec![0.35, 0.0, 0.0, 0.05, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]
}

fn iid_truth(u: u32, q: &[f64]) -> ScenarioTruth {
    let users = (1..=u)
        .map(|id| (id, vec![uniform10()], vec![q.to_vec()]))
        .collect();
    ScenarioTruth::new(users, 0.0, 0.5).unwrap()
}

fn iid_kind(u: u32, m: u64) -> TesterKind {
    TesterKind::Iid {
        config: IIDTestConfig {
            u,
            n: 10,
            m,
            eps1: 0.0,
            eps2: 0.5,
            delta: 0.1,
            c: CalibrationConstants::shipped().c,
            poissonize: true,
        },
        row: 1,
    }
}

fn uniform2() -> MarkovChain {
    validate_chain(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
}

fn chain3() -> MarkovChain {
    validate_chain(vec![
        vec![0.5, 0.3, 0.2],
        vec![0.2, 0.5, 0.3],
        vec![0.3, 0.2, 0.5],
    ])
    .unwrap()
}

#[test]
fn statistic_mean_matches_the_squared_gap() {
    let cases = [(0.3, 0.1, 100u64), (0.5, 0.5, 100), (0.9, 0.1, 50)];
    let mut pass = true;
    let mut detail = String::new();
    for (i, &(p, q, m)) in cases.iter().enumerate() {
        let want = (m as f64) * (m as f64) * (p - q) * (p - q);
        let moment = &empirical_g_moments(
            &[p],
            &[q],
            m,
            100_000,
            Seed::new(101).child("case").index(i as u64),
        )[0];
        pass &= (moment.mean - want).abs() <= 4.0 * moment.se_mean;
        let sep = if i > 0 { "; " } else { "" };
        write!(
            detail,
            "{sep}(p={p}, q={q}, m={m}): mean {:.2} vs {want} +- {:.2}",
            moment.mean,
            4.0 * moment.se_mean
        )
        .unwrap();
    }
    verdict_line("statistic mean equals m^2 (p - q)^2", pass, &detail);
}

#[test]
fn calibrated_tester_meets_the_risk_budget_on_both_regimes() {
    let shipped = CalibrationConstants::shipped();
    let mut pass = true;
    let mut detail = String::new();
    for (i, u) in [1u32, 2, 4].into_iter().enumerate() {
        let m = required_m(10, u, 0.0, 0.5, 0.1, &shipped).unwrap();
        let seed = Seed::new(202).child("pairs").index(u64::from(u));
        let null = verdict_probability(
            &iid_truth(u, &uniform10()),
            &iid_kind(u, m),
            200,
            seed.child("null"),
        )
        .unwrap();
        let alt = verdict_probability(
            &iid_truth(u, &alt10()),
            &iid_kind(u, m),
            200,
            seed.child("alt"),
        )
        .unwrap();
        let no_rate = 1.0 - alt.yes_rate;
        pass &= null.yes_rate >= 0.9 - 3.0 * null.se;
        pass &= no_rate >= 0.9 - 3.0 * alt.se;
        let sep = if i > 0 { "; " } else { "" };
        write!(
            detail,
            "{sep}U={u}, m={m}: yes|matched {:.3}, no|separated {no_rate:.3}",
            null.yes_rate
        )
        .unwrap();
    }
    verdict_line(
        "calibrated tester reaches 0.9 confidence on matched and separated pairs",
        pass,
        &detail,
    );
}

#[test]
fn detection_budget_does_not_grow_with_more_pairs() {
    const LADDER: [u64; 16] = [
        6, 8, 11, 15, 20, 27, 36, 48, 64, 85, 113, 151, 201, 268, 357, 476,
    ];
    let trials = 300u32;
    let no_rate = |u: u32, m: u64| {
        let vp = verdict_probability(
            &iid_truth(u, &alt10()),
            &iid_kind(u, m),
            trials,
            Seed::new(303)
                .child("pairs")
                .index(u64::from(u))
                .child("budget")
                .index(m),
        )
        .unwrap();
        1.0 - vp.yes_rate
    };
    let users = [1u32, 2, 4];
    let found: Vec<Option<u64>> = users
        .iter()
        .map(|&u| LADDER.into_iter().find(|&m| no_rate(u, m) >= 0.9))
        .collect();
    let mut pass = found.iter().all(Option::is_some);
    let tol = 3.0 * (0.9_f64 * 0.1 / f64::from(trials)).sqrt();
    if pass {
        for w in [(0usize, 1usize), (1, 2)] {
            let (ma, mb) = (found[w.0].unwrap(), found[w.1].unwrap());
            if mb > ma {
                // A larger budget at more pairs is tolerable only when the
                // smaller budget already sits within noise of the target.
                pass &= no_rate(users[w.1], ma) >= 0.9 - tol;
            }
        }
    }
    let detail = users
        .iter()
        .zip(&found)
        .map(|(u, m)| match m {
            Some(m) => format!("U={u}: m*={m}"),
            None => format!("U={u}: not reached"),
        })
        .collect::<Vec<_>>()
        .join("; ");
    verdict_line(
        "smallest budget for 0.9 detection is non-increasing in the pair count",
        pass,
        &detail,
    );
}

fn two_state_config(horizon: u32) -> RegulatoryConfig {
    RegulatoryConfig {
        n: 2,
        u: 3,
        m_trajectories: 20,
        horizon,
        eps1: 0.0,
        eps2: 0.5,
        delta: 0.1,
        m_bar: None,
        poissonize: false,
        constants: CalibrationConstants::shipped(),
        cover_trials: 200,
        cover_budget: 1_000_000,
    }
}

#[test]
fn trajectory_procedure_decides_both_scenarios_end_to_end() {
    let spec = |gap: f64, reference: Option<Vec<Vec<f64>>>| ScenarioSpec {
        n: 2,
        users: 3,
        gap: vec![gap; 3],
        mixing_hint: 0.0,
        epochs: 1,
        adversarial: 0,
        eps1: 0.0,
        eps2: 0.5,
        reference,
    };
    let separated = Some(vec![vec![0.75, 0.25], vec![0.25, 0.75]]);
    let mut pass = true;
    let mut detail = String::new();
    for (i, (label, sp, want_yes)) in [
        ("matched", spec(0.0, None), true),
        ("separated", spec(1.0, separated), false),
    ]
    .into_iter()
    .enumerate()
    {
        let seed = Seed::new(404).child(label);
        let scenario = make_scenario(&sp, seed.child("scenario")).unwrap();
        let chains: Vec<(MarkovChain, MarkovChain)> = scenario.epochs[0]
            .users
            .iter()
            .map(|u| (u.reference.clone(), u.filtered.clone()))
            .collect();
        let horizon = required_horizon(&chains, &two_state_config(2), seed.child("horizon")).unwrap();
        let vp = verdict_probability(
            &scenario.epoch_truth(0),
            &TesterKind::Regulatory {
                config: two_state_config(horizon),
            },
            200,
            seed.child("mc"),
        )
        .unwrap();
        let rate = if want_yes {
            vp.yes_rate
        } else {
            1.0 - vp.yes_rate
        };
        pass &= rate >= 0.9 - 3.0 * vp.se;
        let sep = if i > 0 { "; " } else { "" };
        let wanted = if want_yes { "yes" } else { "no" };
        write!(detail, "{sep}{label}: T={horizon}, {wanted} rate {rate:.3}").unwrap();
    }
    verdict_line(
        "trajectory procedure reaches 0.9 correctness on matched and separated scenarios",
        pass,
        &detail,
    );
}

#[test]
fn extracted_successors_match_the_row_without_serial_correlation() {
    let chain = chain3();
    let traj = simulate_trajectory(&chain, 1, 400_000, Seed::new(505).child("traj"));
    let succ = extract_successors(&[traj], 1, 100_000).unwrap();
    let total = succ.len() as f64;
    let mut counts = [0u64; 3];
    for &s in &succ {
        counts[(s - 1) as usize] += 1;
    }
    let tv = counts
        .iter()
        .zip(chain.row(1))
        .map(|(&c, &p)| (c as f64 / total - p).abs())
        .sum::<f64>()
        / 2.0;
    let mean = succ.iter().map(|&s| f64::from(s)).sum::<f64>() / total;
    let num: f64 = succ
        .windows(2)
        .map(|w| (f64::from(w[0]) - mean) * (f64::from(w[1]) - mean))
        .sum();
    let den: f64 = succ.iter().map(|&s| (f64::from(s) - mean).powi(2)).sum();
    let autocorr = num / den;
    verdict_line(
        "extracted successors are i.i.d. draws from the designated row",
        tv <= 0.02 && autocorr.abs() <= 0.02,
        &format!("TV {tv:.4} <= 0.02; lag-1 autocorr {autocorr:+.4} within 0.02"),
    );
}

#[test]
fn cover_time_estimates_scale_and_concentrate() {
    let lazy3 = validate_chain(vec![
        vec![0.6, 0.2, 0.2],
        vec![0.2, 0.6, 0.2],
        vec![0.2, 0.2, 0.6],
    ])
    .unwrap();
    let sym2 = uniform2();
    let trials = 10_000u32;
    let budget = 100_000u32;
    let mut pass = true;
    let mut worst_ratio = 0.0_f64;
    let mut sym2_single = 0.0;
    for (ci, chain) in [&sym2, &lazy3].into_iter().enumerate() {
        for m in [1u32, 2, 4] {
            let seed = Seed::new(606)
                .child("chain")
                .index(ci as u64)
                .child("walks")
                .index(u64::from(m));
            let t1 = estimate_cover_time(chain, m, 1, trials, budget, seed.child("level").index(1))
                .unwrap()
                .t_hat();
            if ci == 0 && m == 1 {
                sym2_single = t1;
            }
            for k in [2u64, 4] {
                let tk = estimate_cover_time(chain, m, k, trials, budget, seed.child("level").index(k))
                    .unwrap()
                    .t_hat();
                let ratio = tk / (k as f64 * t1);
                worst_ratio = worst_ratio.max(ratio);
                pass &= ratio <= 1.1;
            }
        }
    }
    // Start plus Geometric(1/2) hits the other state after 3 steps on average.
    pass &= (sym2_single - 3.0).abs() <= 0.05;
    let mut tails = String::new();
    let stops: Vec<u32> = (0..trials)
        .map(|i| {
            let walk = ChainWalk::new(&sym2, 1, Seed::new(607).child("tail").index(u64::from(i)));
            joint_k_cover_stop(&mut [walk], 2, 1, budget).unwrap()
        })
        .collect();
    for beta in [1.0_f64, 2.0] {
        let thresh = std::f64::consts::E * beta * sym2_single;
        let tail = stops.iter().filter(|&&t| f64::from(t) >= thresh).count() as f64
            / f64::from(trials);
        let se = (tail * (1.0 - tail) / f64::from(trials)).sqrt();
        pass &= tail <= (-beta).exp() + 3.0 * se;
        write!(tails, "; tail(beta={beta}) {tail:.4} <= {:.3}", (-beta).exp()).unwrap();
    }
    verdict_line(
        "cover-time estimates scale in k, match the two-state law, and obey the tail bound",
        pass,
        &format!(
            "worst k-scaling ratio {worst_ratio:.3} <= 1.1; two-state mean {sym2_single:.3} vs 3.0{tails}"
        ),
    );
}

#[test]
fn counterfactual_composition_combines_blocks_and_respects_the_variability_bound() {
    use Decision::{No, Yes};
    let table_ok = combine_block_verdicts(Yes, Yes) == Yes
        && combine_block_verdicts(Yes, No) == No
        && combine_block_verdicts(No, Yes) == No
        && combine_block_verdicts(No, No) == No;

    let config_for = |pairs: u32, eps1: f64, horizon: u32| CounterfactualConfig {
        regulatory: RegulatoryConfig {
            n: 2,
            u: pairs,
            m_trajectories: 20,
            horizon,
            eps1,
            eps2: 0.5,
            delta: 0.05,
            m_bar: None,
            poissonize: false,
            constants: CalibrationConstants::shipped(),
            cover_trials: 200,
            cover_budget: 1_000_000,
        },
        delta_b1: 0.05,
        delta_b2: 0.05,
    };
    let seed = Seed::new(707);

    // Joint confidence when both blocks face identical chains.
    let pairing = CounterfactualPairing::new(vec![(1, 2)]).unwrap();
    let twins: Vec<(u32, MarkovChain, MarkovChain)> = vec![
        (1, uniform2(), uniform2()),
        (2, uniform2(), uniform2()),
    ];
    let horizon = required_horizon_cf(&pairing, &twins, &config_for(1, 0.0, 2), seed.child("horizon"))
        .unwrap();
    let rows = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
    let truth = ScenarioTruth::new(
        vec![(1, rows.clone(), rows.clone()), (2, rows.clone(), rows.clone())],
        0.0,
        0.5,
    )
    .unwrap();
    let vp = verdict_probability(
        &truth,
        &TesterKind::Counterfactual {
            config: config_for(1, 0.0, horizon),
            pairing,
        },
        200,
        seed.child("mc"),
    )
    .unwrap();
    let joint_ok = vp.yes_rate >= 0.95 * 0.95 - 3.0 * vp.se;

    // A YES verdict certifies small spread between the paired filtered chains.
    let pairing2 = CounterfactualPairing::new(vec![(1, 2), (3, 4)]).unwrap();
    let nudged = validate_chain(vec![vec![0.51, 0.49], vec![0.49, 0.51]]).unwrap();
    let chain_list: Vec<(u32, MarkovChain, MarkovChain)> = vec![
        (1, uniform2(), uniform2()),
        (2, uniform2(), uniform2()),
        (3, uniform2(), uniform2()),
        (4, nudged.clone(), nudged),
    ];
    let horizon2 = required_horizon_cf(
        &pairing2,
        &chain_list,
        &config_for(2, 0.1, 2),
        seed.child("horizon2"),
    )
    .unwrap();
    let config2 = config_for(2, 0.1, horizon2);
    let filtered_rows: Vec<(u32, Vec<Vec<f64>>)> = chain_list
        .iter()
        .map(|(u, _, f)| (*u, f.rows().to_vec()))
        .collect();
    let spread =
        counterfactual_variability(&pairing2, &filtered_rows).unwrap() * pairing2.len() as f64;
    let bound = 2.0 * pairing2.len() as f64 * config2.regulatory.eps1;
    let mut yes_runs = 0u32;
    let mut bound_ok = true;
    for i in 0..20u64 {
        let run_seed = seed.child("run").index(i);
        let filtered: Vec<FeedBatch> = chain_list
            .iter()
            .map(|(u, _, f)| {
                simulate_feed_batch(
                    f,
                    *u,
                    World::Filtered,
                    20,
                    horizon2,
                    run_seed.child("user").index(u64::from(*u)).child("F"),
                )
                .unwrap()
            })
            .collect();
        let reference: Vec<FeedBatch> = [1u32, 3]
            .iter()
            .map(|&u| {
                let (_, r, _) = chain_list.iter().find(|(id, _, _)| *id == u).unwrap();
                simulate_feed_batch(
                    r,
                    u,
                    World::Reference,
                    20,
                    horizon2,
                    run_seed.child("user").index(u64::from(u)).child("R"),
                )
                .unwrap()
            })
            .collect();
        let verdict =
            counterfactual_tester(&pairing2, &filtered, &reference, &config2, run_seed.child("test"))
                .unwrap();
        if verdict.decision == Decision::Yes {
            yes_runs += 1;
            bound_ok &= spread <= bound;
        }
    }
    verdict_line(
        "counterfactual composition needs both blocks and certifies bounded spread",
        table_ok && joint_ok && yes_runs >= 1 && bound_ok,
        &format!(
            "combiner table exact; P(both yes) {:.3} >= {:.3}; {yes_runs}/20 yes runs, spread {spread:.3} <= {bound:.1}",
            vp.yes_rate,
            0.95 * 0.95 - 3.0 * vp.se
        ),
    );
}

fn run_binary(sub: &str, config: &Path, out: &Path, threads: &str) -> i32 {
    let output = Command::new(env!("CARGO_BIN_EXE_feedaudit"))
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("RAYON_NUM_THREADS", threads)
        .output()
        .unwrap();
    output.status.code().unwrap_or(-1)
}

#[test]
fn reports_are_bit_identical_across_reruns_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("sweep.csv");
    let iid = serde_json::json!({
        "u": 1, "n": 2, "m": 60, "eps1": 0.0, "eps2": 0.5,
        "delta": 0.1, "poissonize": false
    });
    let truth = |p: serde_json::Value, q: serde_json::Value| {
        serde_json::json!({"users": [{"P_R": p, "Q_F": q}], "eps1": 0.0, "eps2": 0.5})
    };
    let uniform = serde_json::json!([[0.5, 0.5], [0.5, 0.5]]);
    let skewed = serde_json::json!([[0.9, 0.1], [0.5, 0.5]]);
    let sweep = serde_json::json!({
        "command": "sweep",
        "seed": 808,
        "trials": 120,
        "csv_out": csv.display().to_string(),
        "points": [
            {"scenario_id": "matched", "truth": truth(uniform.clone(), uniform.clone()),
             "tester": {"kind": "iid", "config": iid}},
            {"scenario_id": "separated", "truth": truth(skewed.clone(), uniform),
             "tester": {"kind": "iid", "config": iid}}
        ]
    });
    let sweep_path = dir.path().join("sweep.json");
    std::fs::write(&sweep_path, serde_json::to_vec_pretty(&sweep).unwrap()).unwrap();
    let cover = serde_json::json!({
        "command": "cover-time",
        "seed": 809,
        "chain": [[0.5, 0.5], [0.5, 0.5]],
        "m": 2, "k": 2, "trials": 300,
        "u": 2, "delta": 0.1
    });
    let cover_path = dir.path().join("cover.json");
    std::fs::write(&cover_path, serde_json::to_vec_pretty(&cover).unwrap()).unwrap();

    let mut pass = true;
    let mut sweep_outputs: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    for (i, threads) in ["1", "4", "8"].into_iter().enumerate() {
        let out = dir.path().join(format!("sweep-{i}.json"));
        pass &= run_binary("sweep", &sweep_path, &out, threads) == 0;
        sweep_outputs.push((std::fs::read(&out).unwrap(), std::fs::read(&csv).unwrap()));
    }
    pass &= sweep_outputs.windows(2).all(|w| w[0] == w[1]);
    let mut cover_outputs: Vec<Vec<u8>> = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("cover-{i}.json"));
        pass &= run_binary("cover-time", &cover_path, &out, "2") == 0;
        cover_outputs.push(std::fs::read(&out).unwrap());
    }
    pass &= cover_outputs[0] == cover_outputs[1];
    verdict_line(
        "reports and CSVs are bit-identical across reruns and thread counts",
        pass,
        &format!(
            "sweep report {} bytes x3 runs, csv {} bytes; cover report {} bytes x2 runs",
            sweep_outputs[0].0.len(),
            sweep_outputs[0].1.len(),
            cover_outputs[0].len()
        ),
    );
}

#[test]
fn oracle_metrics_behave_and_the_plugin_estimate_converges() {
    let mut rng = Seed::new(909).child("matrices").rng();
    let mut rand_matrix = |scale: f64| -> Vec<Vec<f64>> {
        (0..3)
            .map(|_| (0..3).map(|_| scale * rng.random::<f64>()).collect())
            .collect()
    };
    let d = |x: &[Vec<f64>], y: &[Vec<f64>]| linf_matrix_distance(x, y).unwrap();
    let mut metric_ok = true;
    for _ in 0..1000 {
        let (a, b, c) = (rand_matrix(1.0), rand_matrix(1.0), rand_matrix(1.0));
        metric_ok &= d(&a, &b) == d(&b, &a);
        metric_ok &= d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12;
        metric_ok &= d(&a, &a) == 0.0;
    }

    let mut rows_rng = Seed::new(909).child("rows").rng();
    let mut rand_rows = || -> Vec<Vec<f64>> {
        (0..3)
            .map(|_| {
                let raw: Vec<f64> = (0..3).map(|_| rows_rng.random::<f64>() + 1e-3).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / sum).collect()
            })
            .collect()
    };
    let mut range_ok = true;
    let mut largest = 0.0_f64;
    for _ in 0..200 {
        let truth = ScenarioTruth::new(
            vec![(1, rand_rows(), rand_rows()), (2, rand_rows(), rand_rows())],
            0.1,
            0.5,
        )
        .unwrap();
        let v = truth.total_filter_variability();
        largest = largest.max(v);
        range_ok &= (0.0..=2.0).contains(&v);
    }

    let chain = chain3();
    let traj = simulate_trajectory(&chain, 1, 1_000_000, Seed::new(909).child("traj"));
    let batch = FeedBatch {
        user: 1,
        world: World::Filtered,
        n: 3,
        trajectories: vec![traj],
    };
    let est = plugin_chain_estimate(&batch);
    let worst_row = (0..3)
        .map(|i| {
            est.rows[i]
                .iter()
                .zip(chain.row(i as u32 + 1))
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        })
        .fold(0.0_f64, f64::max);
    verdict_line(
        "distance metric, variability range, and plug-in row recovery all hold",
        metric_ok && range_ok && est.uncovered.is_empty() && worst_row <= 0.01
            && est.transitions == 999_999,
        &format!(
            "1000 triples symmetric and triangular; variability max {largest:.3} in [0, 2]; worst row l1 {worst_row:.4} <= 0.01"
        ),
    );
}

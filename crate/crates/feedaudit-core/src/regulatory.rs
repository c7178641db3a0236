//! The per-state regulation procedure over feed trajectories.
//!
//! Each user contributes two batches of trajectories: one from the
//! platform's filtered chain (the `Q` side) and one from a reference chain
//! (the `P` side). For every state, visits with a recorded successor are
//! i.i.d. draws from that state's transition row, so the procedure gates on
//! coverage (every batch must hold at least `m_bar` such visits), extracts
//! exactly `m_bar` successors per user per world, and hands the pooled pairs
//! to the i.i.d. tester at per-state risk `delta / (2n)`. The first failing
//! state decides NO: short coverage is reported as `Coverage`, a rejected
//! statistic as `Statistic`. All `n` states passing decides YES.
//!
//! [`required_horizon`] sizes the trajectory length so the coverage gate
//! passes everywhere with probability at least `1 - delta/2`: the mean joint
//! cover time is estimated per chain and scaled by `e * ln(4U / delta)`,
//! which by the exponential tail of cover times drives every batch's failure
//! chance below `delta / (4U)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::calibrate::CalibrationConstants;
use crate::cover::estimate_cover_time;
use crate::error::{ConfigViolation, HorizonError, RegulatoryError, RegimeViolation};
use crate::iid::{iid_tester, required_m, HalvedSamples, IIDTestConfig, IidVerdict};
use crate::markov::{MarkovChain, Trajectory};
use crate::seed::Seed;
use crate::successors::{extract_successors, successor_bearing_visits};
use crate::Decision;

/// Which chain a batch of trajectories came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum World {
    /// The platform's filtered chain (`Q` side).
    Filtered,
    /// The reference chain (`P` side).
    Reference,
}

impl core::fmt::Display for World {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            World::Filtered => f.write_str("filtered"),
            World::Reference => f.write_str("reference"),
        }
    }
}

/// One user's trajectories from one world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedBatch {
    /// The user the batch belongs to.
    pub user: u32,
    /// Which chain generated it.
    pub world: World,
    /// State space size; states are `1..=n`.
    pub n: u32,
    /// The observed trajectories, all of one shared length.
    pub trajectories: Vec<Trajectory>,
}

/// Configuration of the regulation procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulatoryConfig {
    /// State space size.
    pub n: u32,
    /// Number of users.
    pub u: u32,
    /// Trajectories per user per world.
    pub m_trajectories: u32,
    /// Length of every trajectory.
    pub horizon: u32,
    /// Lower tolerance on the mean row-sum distance.
    pub eps1: f64,
    /// Upper tolerance.
    pub eps2: f64,
    /// Overall risk, split as `delta/2` for coverage and `delta/(2n)` per
    /// state for the statistics.
    pub delta: f64,
    /// Successors consumed per user per world per state; `None` uses
    /// [`default_m_bar`].
    pub m_bar: Option<u64>,
    /// Poissonize the inner tester's counts. Off by default: the gate
    /// guarantees exactly `m_bar` successors, and Poisson draws above the
    /// available half would truncate about half the time.
    pub poissonize: bool,
    /// Threshold and budget constants.
    pub constants: CalibrationConstants,
    /// Monte Carlo trials per start profile when estimating cover times.
    pub cover_trials: u32,
    /// Step budget per cover-time trial.
    pub cover_budget: u32,
}

impl RegulatoryConfig {
    /// Checks every field against its documented range.
    pub fn validate(&self) -> Result<(), ConfigViolation> {
        let field = |ok: bool, field: &'static str, requirement: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigViolation { field, requirement })
            }
        };
        field(self.n >= 1, "n", "at least one state")?;
        field(self.u >= 1, "u", "at least one user")?;
        field(self.m_trajectories >= 1, "m_trajectories", "at least one trajectory")?;
        field(self.horizon >= 2, "horizon", "at least two positions")?;
        field(self.eps1 >= 0.0 && self.eps1 <= 1.0, "eps1", "in [0, 1]")?;
        field(self.eps2 > 0.0 && self.eps2 <= 1.0, "eps2", "in (0, 1]")?;
        field(self.eps1 < self.eps2, "eps1", "strictly below eps2")?;
        field(self.delta > 0.0 && self.delta < 1.0, "delta", "in (0, 1)")?;
        field(
            self.constants.c > 0.0 && self.constants.c.is_finite(),
            "constants.c",
            "positive and finite",
        )?;
        field(self.constants.big_c > 0.0, "constants.big_c", "positive")?;
        if let Some(m_bar) = self.m_bar {
            field(m_bar >= 2, "m_bar", "at least 2 (one sample per half)")?;
        }
        field(self.cover_trials >= 100, "cover_trials", "at least 100")?;
        field(self.cover_budget >= 1, "cover_budget", "at least 1")?;
        Ok(())
    }
}

/// The successor budget per user per world per state when none is given:
/// the i.i.d. tester's requirement at per-state risk `delta / (2n)`.
pub fn default_m_bar(config: &RegulatoryConfig) -> Result<u64, RegimeViolation> {
    required_m(
        config.n,
        config.u,
        config.eps1,
        config.eps2,
        config.delta / (2.0 * f64::from(config.n)),
        &config.constants,
    )
}

/// True when `batch` holds at least `m_bar` successor-bearing visits to
/// `state`.
pub fn coverage_gate(batch: &FeedBatch, state: u32, m_bar: u64) -> bool {
    successor_bearing_visits(&batch.trajectories, state) >= m_bar
}

/// Why the procedure answered NO.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoReason {
    /// Some batch lacked `m_bar` successor-bearing visits to a state.
    Coverage,
    /// A per-state statistic crossed its threshold.
    Statistic,
}

/// One user's visit counts for one state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserStateCoverage {
    /// The user.
    pub user: u32,
    /// Successor-bearing visits in the filtered batch.
    pub filtered_visits: u64,
    /// Successor-bearing visits in the reference batch.
    pub reference_visits: u64,
    /// Both counts reach `m_bar`.
    pub ok: bool,
}

/// Everything the procedure saw at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateReport {
    /// The state, 1-based.
    pub state: u32,
    /// Per-user visit counts, in processing order.
    pub coverage: Vec<UserStateCoverage>,
    /// Every user passed the gate.
    pub coverage_ok: bool,
    /// The inner tester's verdict; `None` when the gate failed.
    pub verdict: Option<IidVerdict>,
}

/// The procedure's decision with per-state evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulatoryVerdict {
    /// YES iff every state passed gate and statistic.
    pub decision: Decision,
    /// What stopped the run; `None` on YES.
    pub reason: Option<NoReason>,
    /// The successor budget that was enforced.
    pub m_bar: u64,
    /// Reports for the states processed (ascending; stops at the first NO).
    pub per_state: Vec<StateReport>,
}

fn check_batch(
    batch: &FeedBatch,
    expected_world: World,
    config: &RegulatoryConfig,
) -> Result<(), RegulatoryError> {
    let complain = |detail: String| Err(RegulatoryError::ConfigMismatch(detail));
    if batch.world != expected_world {
        return complain(format!(
            "user {} sits in the {expected_world} slot but is tagged {}",
            batch.user, batch.world
        ));
    }
    if batch.n != config.n {
        return complain(format!(
            "user {} ({}) has n = {}, config says {}",
            batch.user, batch.world, batch.n, config.n
        ));
    }
    if batch.trajectories.len() != config.m_trajectories as usize {
        return complain(format!(
            "user {} ({}) has {} trajectories, config says {}",
            batch.user,
            batch.world,
            batch.trajectories.len(),
            config.m_trajectories
        ));
    }
    for traj in &batch.trajectories {
        if traj.len() != config.horizon as usize {
            return complain(format!(
                "user {} ({}) has a trajectory of length {}, config says {}",
                batch.user,
                batch.world,
                traj.len(),
                config.horizon
            ));
        }
        for &s in &traj.states {
            if s < 1 || s > config.n {
                return complain(format!(
                    "user {} ({}) visits state {s}, outside 1..={}",
                    batch.user, batch.world, config.n
                ));
            }
        }
    }
    Ok(())
}

/// Runs the procedure on positionally paired `(filtered, reference)` batches.
///
/// No user-id agreement is required between the two slots of a pair; the
/// counterfactual composition exploits this to test one user's filtered feed
/// against another's reference. Every batch must still match the config's
/// dimensions.
pub fn regulatory_tester_paired(
    pairs: &[(&FeedBatch, &FeedBatch)],
    config: &RegulatoryConfig,
    seed: Seed,
) -> Result<RegulatoryVerdict, RegulatoryError> {
    config.validate()?;
    if pairs.len() != config.u as usize {
        return Err(RegulatoryError::ConfigMismatch(format!(
            "{} pairs supplied, config says u = {}",
            pairs.len(),
            config.u
        )));
    }
    for (filtered, reference) in pairs {
        check_batch(filtered, World::Filtered, config)?;
        check_batch(reference, World::Reference, config)?;
    }
    let m_bar = match config.m_bar {
        Some(m) => m,
        None => default_m_bar(config)?,
    };
    let m_half = m_bar / 2;
    let iid_config = IIDTestConfig {
        u: config.u,
        n: config.n,
        m: m_half,
        eps1: config.eps1,
        eps2: config.eps2,
        delta: config.delta / (2.0 * f64::from(config.n)),
        c: config.constants.c,
        poissonize: config.poissonize,
    };

    let mut per_state = Vec::new();
    for state in 1..=config.n {
        let coverage: Vec<UserStateCoverage> = pairs
            .iter()
            .map(|(filtered, reference)| {
                let filtered_visits = successor_bearing_visits(&filtered.trajectories, state);
                let reference_visits = successor_bearing_visits(&reference.trajectories, state);
                UserStateCoverage {
                    user: filtered.user,
                    filtered_visits,
                    reference_visits,
                    ok: filtered_visits >= m_bar && reference_visits >= m_bar,
                }
            })
            .collect();
        let coverage_ok = coverage.iter().all(|c| c.ok);
        if !coverage_ok {
            per_state.push(StateReport {
                state,
                coverage,
                coverage_ok,
                verdict: None,
            });
            return Ok(RegulatoryVerdict {
                decision: Decision::No,
                reason: Some(NoReason::Coverage),
                m_bar,
                per_state,
            });
        }

        let mut p_sets = Vec::with_capacity(pairs.len());
        let mut q_sets = Vec::with_capacity(pairs.len());
        for (filtered, reference) in pairs {
            let split = |trajs: &[Trajectory]| {
                let succ = extract_successors(trajs, state, m_bar)
                    .expect("coverage gate guarantees m_bar successors");
                HalvedSamples {
                    half1: succ[..m_half as usize].to_vec(),
                    half2: succ[m_half as usize..2 * m_half as usize].to_vec(),
                }
            };
            p_sets.push(split(&reference.trajectories));
            q_sets.push(split(&filtered.trajectories));
        }
        let verdict = iid_tester(
            &p_sets,
            &q_sets,
            &iid_config,
            seed.child("state").index(u64::from(state)),
        )?;
        let rejected = verdict.decision == Decision::No;
        per_state.push(StateReport {
            state,
            coverage,
            coverage_ok,
            verdict: Some(verdict),
        });
        if rejected {
            return Ok(RegulatoryVerdict {
                decision: Decision::No,
                reason: Some(NoReason::Statistic),
                m_bar,
                per_state,
            });
        }
    }
    Ok(RegulatoryVerdict {
        decision: Decision::Yes,
        reason: None,
        m_bar,
        per_state,
    })
}

/// Runs the procedure on per-user batches, pairing them by user id.
///
/// `filtered` and `reference` must cover the same `u` distinct users; pairs
/// are processed in ascending user order.
pub fn regulatory_tester(
    filtered: &[FeedBatch],
    reference: &[FeedBatch],
    config: &RegulatoryConfig,
    seed: Seed,
) -> Result<RegulatoryVerdict, RegulatoryError> {
    config.validate()?;
    let index_by_user = |batches: &[FeedBatch], slot: &str| {
        let mut order: Vec<usize> = (0..batches.len()).collect();
        order.sort_by_key(|&i| batches[i].user);
        for w in order.windows(2) {
            if batches[w[0]].user == batches[w[1]].user {
                return Err(RegulatoryError::ConfigMismatch(format!(
                    "user {} appears twice in the {slot} batches",
                    batches[w[0]].user
                )));
            }
        }
        Ok(order)
    };
    let f_order = index_by_user(filtered, "filtered")?;
    let r_order = index_by_user(reference, "reference")?;
    if filtered.len() != reference.len() {
        return Err(RegulatoryError::ConfigMismatch(format!(
            "{} filtered batches vs {} reference batches",
            filtered.len(),
            reference.len()
        )));
    }
    for (&fi, &ri) in f_order.iter().zip(&r_order) {
        if filtered[fi].user != reference[ri].user {
            return Err(RegulatoryError::ConfigMismatch(format!(
                "user sets differ: filtered has {}, reference has {}",
                filtered[fi].user, reference[ri].user
            )));
        }
    }
    let pairs: Vec<(&FeedBatch, &FeedBatch)> = f_order
        .iter()
        .zip(&r_order)
        .map(|(&fi, &ri)| (&filtered[fi], &reference[ri]))
        .collect();
    regulatory_tester_paired(&pairs, config, seed)
}

/// `e * ln(4U / delta)`: the factor between a mean cover time and a horizon
/// whose coverage failure chance is below `delta / (4U)` per batch.
///
/// Pure in its arguments so the identity `horizon_multiplier(1, 4/e) = e`
/// can anchor tests; real configurations keep `delta` in `(0, 1)`.
///
/// # Panics
///
/// If `u == 0` or `delta` is not positive and finite.
pub fn horizon_multiplier(u: u32, delta: f64) -> f64 {
    assert!(u >= 1, "need at least one user");
    assert!(delta > 0.0 && delta.is_finite(), "delta must be positive");
    core::f64::consts::E * libm::log(4.0 * f64::from(u) / delta)
}

/// Sizes the horizon so every user's coverage gate passes with probability
/// at least `1 - delta / 2`.
///
/// `user_chains` holds each user's `(reference, filtered)` chains. The mean
/// joint `m_bar`-cover time of `m_trajectories` walks is estimated for every
/// chain; the worst mean is scaled by [`horizon_multiplier`], and one extra
/// position is added so that visits counted within the cover window all have
/// recorded successors.
///
/// # Panics
///
/// If `user_chains` is empty, its length differs from `config.u`, or a
/// chain's state count differs from `config.n`.
pub fn required_horizon(
    user_chains: &[(MarkovChain, MarkovChain)],
    config: &RegulatoryConfig,
    seed: Seed,
) -> Result<u32, HorizonError> {
    config.validate()?;
    assert_eq!(
        user_chains.len(),
        config.u as usize,
        "one chain pair per user"
    );
    let m_bar = match config.m_bar {
        Some(m) => m,
        None => default_m_bar(config)?,
    };
    let mut worst = 0.0f64;
    for (u, (reference, filtered)) in user_chains.iter().enumerate() {
        for (label, chain) in [("R", reference), ("F", filtered)] {
            assert_eq!(chain.n(), config.n, "chain size must match config");
            let est = estimate_cover_time(
                chain,
                config.m_trajectories,
                m_bar,
                config.cover_trials,
                config.cover_budget,
                seed.child("user").index(u as u64).child(label),
            )?;
            worst = worst.max(est.t_hat());
        }
    }
    let t = libm::ceil(horizon_multiplier(config.u, config.delta) * worst) as u32 + 1;
    Ok(t)
}

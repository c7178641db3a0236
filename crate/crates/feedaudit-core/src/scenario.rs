//! Synthetic platform scenarios: paired filtered/reference chains with a
//! controllable per-user distance, re-filtering epochs, and adversarial
//! users.
//!
//! The reference chain is the platform showing content with no preference:
//! uniform rows, optionally blended with a self-loop mass (`mixing_hint`)
//! that slows mixing without breaking irreducibility. A user's filtered
//! chain is built from the reference by moving probability mass within one
//! designated row until the row's l1 distance reaches that user's gap
//! target, never draining an entry below `1/(10n)` so every constructed
//! chain stays irreducible.

use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{ConfigViolation, InfeasibleGap, ScenarioError};
use crate::markov::{
    simulate_trajectory, stationary_distribution, validate_chain, MarkovChain,
};
use crate::oracle::ScenarioTruth;
use crate::regulatory::{FeedBatch, World};
use crate::seed::Seed;
use crate::Regime;

/// Entries of a constructed filtered row never drop below `1 / (10n)`.
pub const ROW_FLOOR_SCALE: f64 = 10.0;

/// Generator description of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// State space size, at least 2.
    pub n: u32,
    /// Honest user count.
    pub users: u32,
    /// Per-user target row distance, one entry per honest user, in `[0, 2]`.
    pub gap: Vec<f64>,
    /// Self-loop mass blended into the default reference rows, in `[0, 1)`.
    /// Higher values slow mixing. Ignored when `reference` is given.
    pub mixing_hint: f64,
    /// Re-filtering intervals. With a single epoch the designated row is
    /// row 1; with more, each epoch redraws it per user.
    pub epochs: u32,
    /// Adversarial users appended at construction, each at the maximal
    /// feasible gap.
    pub adversarial: u32,
    /// Lower tolerance used for regime labels.
    pub eps1: f64,
    /// Upper tolerance used for regime labels.
    pub eps2: f64,
    /// Explicit reference rows used verbatim for every user; `None` builds
    /// the blended uniform default.
    pub reference: Option<Vec<Vec<f64>>>,
}

impl ScenarioSpec {
    /// Checks every field against its documented range.
    pub fn validate(&self) -> Result<(), ConfigViolation> {
        let field = |ok: bool, field: &'static str, requirement: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigViolation { field, requirement })
            }
        };
        field(self.n >= 2, "n", "at least two states")?;
        field(self.users >= 1, "users", "at least one honest user")?;
        field(
            self.gap.len() == self.users as usize,
            "gap",
            "one entry per honest user",
        )?;
        field(
            self.gap.iter().all(|g| g.is_finite() && (0.0..=2.0).contains(g)),
            "gap",
            "entries in [0, 2]",
        )?;
        field(
            self.mixing_hint.is_finite() && (0.0..1.0).contains(&self.mixing_hint),
            "mixing_hint",
            "in [0, 1)",
        )?;
        field(self.epochs >= 1, "epochs", "at least one epoch")?;
        field(
            self.eps1 >= 0.0 && self.eps1.is_finite(),
            "eps1",
            "nonnegative and finite",
        )?;
        field(
            self.eps2 > self.eps1 && self.eps2 <= 2.0,
            "eps2",
            "in (eps1, 2]",
        )?;
        if let Some(reference) = &self.reference {
            field(
                reference.len() == self.n as usize,
                "reference",
                "n rows when given",
            )?;
        }
        Ok(())
    }
}

/// One user's chain pair within one epoch.
#[derive(Debug, Clone)]
pub struct ScenarioUser {
    /// The user id; honest users are `1..=users`, adversarial ones follow.
    pub user: u32,
    /// The reference chain.
    pub reference: MarkovChain,
    /// The filtered chain.
    pub filtered: MarkovChain,
    /// The row the mass-moving rule perturbed, 1-based.
    pub designated_row: u32,
    /// The gap that was requested.
    pub target_gap: f64,
    /// `||reference - filtered||_inf` as this module recomputes it.
    pub realized_gap: f64,
    /// True for injected users.
    pub adversarial: bool,
}

/// All users' chain pairs for one interval.
#[derive(Debug, Clone)]
pub struct EpochScenario {
    /// 1-based epoch index.
    pub epoch: u32,
    /// Users ascending by id.
    pub users: Vec<ScenarioUser>,
    /// Sum of realized gaps.
    pub total_gap: f64,
    /// Side of the tolerances the epoch's truth sits on.
    pub regime: Regime,
}

/// A fully constructed scenario: chains, realized distances, and regime
/// labels for every epoch.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// State space size.
    pub n: u32,
    /// Lower tolerance.
    pub eps1: f64,
    /// Upper tolerance.
    pub eps2: f64,
    /// Self-loop mass of the default reference.
    mixing_hint: f64,
    /// Explicit reference rows, when the spec gave them.
    reference: Option<Vec<Vec<f64>>>,
    /// Per-epoch users.
    pub epochs: Vec<EpochScenario>,
}

impl Scenario {
    /// Ground truth for one epoch (0-based index), with distances
    /// recomputed by the oracle.
    ///
    /// # Panics
    ///
    /// If `epoch` is out of range.
    pub fn epoch_truth(&self, epoch: usize) -> ScenarioTruth {
        let users = self.epochs[epoch]
            .users
            .iter()
            .map(|u| {
                (
                    u.user,
                    u.reference.rows().to_vec(),
                    u.filtered.rows().to_vec(),
                )
            })
            .collect();
        ScenarioTruth::new(users, self.eps1, self.eps2).expect("stored chains share one shape")
    }
}

/// The default reference row set: uniform rows with `hint` self-loop mass.
fn blended_reference(n: u32, hint: f64) -> Vec<Vec<f64>> {
    let spread = (1.0 - hint) / f64::from(n);
    (0..n as usize)
        .map(|i| {
            (0..n as usize)
                .map(|j| if i == j { hint + spread } else { spread })
                .collect()
        })
        .collect()
}

/// Independent recomputation of the max-row l1 distance, kept apart from
/// the oracle's so stored values can be cross-checked against it.
fn realized_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (ra, rb) in a.iter().zip(b) {
        let mut sum = 0.0;
        for (x, y) in ra.iter().zip(rb) {
            sum += libm::fabs(x - y);
        }
        worst = worst.max(sum);
    }
    worst
}

/// Largest row gap the mass-moving rule can realize on `row`.
fn max_feasible_gap(row: &[f64], floor: f64) -> f64 {
    let target = argmin(row);
    let movable: f64 = row
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target)
        .map(|(_, &v)| (v - floor).max(0.0))
        .sum();
    2.0 * movable
}

fn argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v < row[best] {
            best = j;
        }
    }
    best
}

/// Moves `gap / 2` of mass into the row's smallest entry, draining the
/// other entries in ascending column order, none below `floor`.
fn move_mass(
    rows: &[Vec<f64>],
    designated_row: u32,
    gap: f64,
    floor: f64,
    user: u32,
) -> Result<Vec<Vec<f64>>, InfeasibleGap> {
    let mut out = rows.to_vec();
    if gap == 0.0 {
        return Ok(out);
    }
    let row = &mut out[(designated_row - 1) as usize];
    let max_feasible = max_feasible_gap(row, floor);
    if gap > max_feasible {
        return Err(InfeasibleGap {
            user,
            requested: gap,
            max_feasible,
        });
    }
    let target = argmin(row);
    let mut need = gap / 2.0;
    for j in 0..row.len() {
        if j == target || need <= 0.0 {
            continue;
        }
        let take = (row[j] - floor).max(0.0).min(need);
        row[j] -= take;
        row[target] += take;
        need -= take;
    }
    Ok(out)
}

fn build_user(
    reference_rows: &[Vec<f64>],
    user: u32,
    designated_row: u32,
    gap: f64,
    floor: f64,
    adversarial: bool,
) -> Result<ScenarioUser, ScenarioError> {
    let filtered_rows = move_mass(reference_rows, designated_row, gap, floor, user)?;
    let realized_gap = realized_distance(reference_rows, &filtered_rows);
    Ok(ScenarioUser {
        user,
        reference: validate_chain(reference_rows.to_vec())?,
        filtered: validate_chain(filtered_rows)?,
        designated_row,
        target_gap: gap,
        realized_gap,
        adversarial,
    })
}

fn designated_row(n: u32, epochs: u32, seed: Seed) -> u32 {
    if epochs == 1 {
        1
    } else {
        seed.child("row").rng().random_range(1..=n)
    }
}

fn finish_epoch(epoch: u32, users: Vec<ScenarioUser>, eps1: f64, eps2: f64) -> EpochScenario {
    let total_gap: f64 = users.iter().map(|u| u.realized_gap).sum();
    let u = users.len() as f64;
    let regime = if total_gap <= u * eps1 {
        Regime::Null
    } else if total_gap >= u * eps2 {
        Regime::Alternative
    } else {
        Regime::Between
    };
    EpochScenario {
        epoch,
        users,
        total_gap,
        regime,
    }
}

/// Builds every epoch's chain pairs from a spec.
///
/// Deterministic given `seed`; the seed only matters when `epochs >= 2`
/// (designated rows are redrawn) or `spec.adversarial > 0`.
pub fn make_scenario(spec: &ScenarioSpec, seed: Seed) -> Result<Scenario, ScenarioError> {
    spec.validate()?;
    let reference_rows = match &spec.reference {
        Some(rows) => rows.clone(),
        None => blended_reference(spec.n, spec.mixing_hint),
    };
    // Surfaces bad explicit references once, before any per-user work.
    validate_chain(reference_rows.clone())?;
    let floor = 1.0 / (ROW_FLOOR_SCALE * f64::from(spec.n));
    let mut epochs = Vec::with_capacity(spec.epochs as usize);
    for epoch in 1..=spec.epochs {
        let epoch_seed = seed.child("epoch").index(u64::from(epoch));
        let mut users = Vec::with_capacity(spec.users as usize);
        for (idx, &gap) in spec.gap.iter().enumerate() {
            let user = idx as u32 + 1;
            let row = designated_row(
                spec.n,
                spec.epochs,
                epoch_seed.child("user").index(u64::from(user)),
            );
            users.push(build_user(&reference_rows, user, row, gap, floor, false)?);
        }
        epochs.push(finish_epoch(epoch, users, spec.eps1, spec.eps2));
    }
    let scenario = Scenario {
        n: spec.n,
        eps1: spec.eps1,
        eps2: spec.eps2,
        mixing_hint: spec.mixing_hint,
        reference: spec.reference.clone(),
        epochs,
    };
    if spec.adversarial > 0 {
        inject_adversarial_users(&scenario, spec.adversarial, seed.child("adversarial"))
    } else {
        Ok(scenario)
    }
}

/// Appends `count` users whose filtered chain attains the maximal feasible
/// gap, then recomputes each epoch's total distance and regime label.
///
/// New ids continue after the current largest. `count = 0` returns the
/// scenario unchanged.
pub fn inject_adversarial_users(
    scenario: &Scenario,
    count: u32,
    seed: Seed,
) -> Result<Scenario, ScenarioError> {
    let mut out = scenario.clone();
    if count == 0 {
        return Ok(out);
    }
    let reference_rows = match &scenario.reference {
        Some(rows) => rows.clone(),
        None => blended_reference(scenario.n, scenario.mixing_hint),
    };
    let floor = 1.0 / (ROW_FLOOR_SCALE * f64::from(scenario.n));
    let total_epochs = scenario.epochs.len() as u32;
    for epoch in &mut out.epochs {
        let next_id = epoch.users.iter().map(|u| u.user).max().unwrap_or(0) + 1;
        let epoch_seed = seed.child("epoch").index(u64::from(epoch.epoch));
        let mut users = core::mem::take(&mut epoch.users);
        for k in 0..count {
            let user = next_id + k;
            let row = designated_row(
                scenario.n,
                total_epochs,
                epoch_seed.child("user").index(u64::from(user)),
            );
            let gap = max_feasible_gap(&reference_rows[(row - 1) as usize], floor);
            users.push(build_user(&reference_rows, user, row, gap, floor, true)?);
        }
        *epoch = finish_epoch(epoch.epoch, users, scenario.eps1, scenario.eps2);
    }
    Ok(out)
}

/// Simulates one user's batch: `m` trajectories of length `horizon` with
/// independent stationary starts.
pub fn simulate_feed_batch(
    chain: &MarkovChain,
    user: u32,
    world: World,
    m: u32,
    horizon: u32,
    seed: Seed,
) -> Result<FeedBatch, ScenarioError> {
    let pi = stationary_distribution(chain, 1e-10)?;
    let start_sampler = WeightedIndex::new(pi).expect("stationary sums to 1");
    let mut start_rng = seed.child("start").rng();
    let trajectories = (0..m)
        .map(|j| {
            let start = start_sampler.sample(&mut start_rng) as u32 + 1;
            simulate_trajectory(chain, start, horizon, seed.child("traj").index(u64::from(j)))
        })
        .collect();
    Ok(FeedBatch {
        user,
        world,
        n: chain.n(),
        trajectories,
    })
}

/// One epoch's simulated batches.
#[derive(Debug, Clone)]
pub struct EpochFeeds {
    /// 1-based epoch index.
    pub epoch: u32,
    /// One filtered batch per user, ascending by id.
    pub filtered: Vec<FeedBatch>,
    /// One reference batch per user, ascending by id.
    pub reference: Vec<FeedBatch>,
}

/// Simulates `m` trajectories of length `horizon` per user per world for
/// every epoch. Deterministic given `seed`; the filtered and reference
/// streams of a user derive from sibling seeds and are independent.
pub fn generate_feeds(
    scenario: &Scenario,
    m: u32,
    horizon: u32,
    seed: Seed,
) -> Result<Vec<EpochFeeds>, ScenarioError> {
    assert!(m >= 1, "need at least one trajectory");
    assert!(horizon >= 1, "need at least one position");
    scenario
        .epochs
        .iter()
        .map(|epoch| {
            let epoch_seed = seed.child("epoch").index(u64::from(epoch.epoch));
            let mut filtered = Vec::with_capacity(epoch.users.len());
            let mut reference = Vec::with_capacity(epoch.users.len());
            for user in &epoch.users {
                let user_seed = epoch_seed.child("user").index(u64::from(user.user));
                filtered.push(simulate_feed_batch(
                    &user.filtered,
                    user.user,
                    World::Filtered,
                    m,
                    horizon,
                    user_seed.child("F"),
                )?);
                reference.push(simulate_feed_batch(
                    &user.reference,
                    user.user,
                    World::Reference,
                    m,
                    horizon,
                    user_seed.child("R"),
                )?);
            }
            Ok(EpochFeeds {
                epoch: epoch.epoch,
                filtered,
                reference,
            })
        })
        .collect()
}

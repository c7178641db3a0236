//! Independent oracles: exact metrics, moment checks, plug-in estimation,
//! and Monte Carlo verdict probabilities.
//!
//! Everything here is deliberately simple and direct (one-pass sums, literal
//! formulas, no shared code with the testers' internals) so it can serve as
//! ground truth when validating the statistical machinery.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::Poisson;

use crate::counterfactual::{counterfactual_tester, CounterfactualConfig, CounterfactualPairing};
use crate::error::{DimensionMismatch, OracleError};
use crate::iid::{iid_tester, HalvedSamples, IIDTestConfig};
use crate::markov::{stationary_distribution, validate_chain, MarkovChain, Trajectory};
use crate::regulatory::{regulatory_tester, FeedBatch, RegulatoryConfig, World};
use crate::seed::Seed;
use crate::{Decision, Regime};

/// `max_i sum_j |a[i][j] - b[i][j]|`: the maximum absolute row-sum distance.
///
/// Rows accumulate in ascending `i`, entries in ascending `j`, so results
/// are bit-stable. Matrices must agree in shape row by row.
pub fn linf_matrix_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, DimensionMismatch> {
    if a.len() != b.len() {
        return Err(DimensionMismatch {
            rows_a: a.len(),
            cols_a: a.first().map_or(0, Vec::len),
            rows_b: b.len(),
            cols_b: b.first().map_or(0, Vec::len),
        });
    }
    let mut worst = 0.0f64;
    for (ra, rb) in a.iter().zip(b) {
        if ra.len() != rb.len() {
            return Err(DimensionMismatch {
                rows_a: a.len(),
                cols_a: ra.len(),
                rows_b: b.len(),
                cols_b: rb.len(),
            });
        }
        let mut sum = 0.0;
        for (x, y) in ra.iter().zip(rb) {
            sum += libm::fabs(x - y);
        }
        worst = worst.max(sum);
    }
    Ok(worst)
}

/// One user's true chain pair and their realized distance.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTruth {
    /// The user id.
    pub user: u32,
    /// Reference transition rows.
    pub p_r: Vec<Vec<f64>>,
    /// Filtered transition rows.
    pub q_f: Vec<Vec<f64>>,
    /// `||p_r - q_f||_inf`, computed at construction.
    pub distance: f64,
}

/// Ground truth for a whole scenario: every user's chains and the
/// tolerances the tester will be held to.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTruth {
    /// Per-user truth, in the given order.
    pub users: Vec<UserTruth>,
    /// Lower tolerance.
    pub eps1: f64,
    /// Upper tolerance.
    pub eps2: f64,
}

impl ScenarioTruth {
    /// Builds the table, computing each user's distance.
    pub fn new(
        users: Vec<(u32, Vec<Vec<f64>>, Vec<Vec<f64>>)>,
        eps1: f64,
        eps2: f64,
    ) -> Result<Self, DimensionMismatch> {
        let mut out = Vec::with_capacity(users.len());
        for (user, p_r, q_f) in users {
            let distance = linf_matrix_distance(&p_r, &q_f)?;
            out.push(UserTruth {
                user,
                p_r,
                q_f,
                distance,
            });
        }
        Ok(ScenarioTruth {
            users: out,
            eps1,
            eps2,
        })
    }

    /// Sum of the per-user distances.
    pub fn total_distance(&self) -> f64 {
        self.users.iter().map(|u| u.distance).sum()
    }

    /// Mean per-user distance, in `[0, 2]`.
    pub fn total_filter_variability(&self) -> f64 {
        self.total_distance() / self.users.len() as f64
    }

    /// Which side of the tolerances the truth sits on, by exact comparison
    /// against `U * eps1` and `U * eps2` (boundaries belong to the decided
    /// sides).
    pub fn regime(&self) -> Regime {
        let total = self.total_distance();
        let u = self.users.len() as f64;
        if total <= u * self.eps1 {
            Regime::Null
        } else if total >= u * self.eps2 {
            Regime::Alternative
        } else {
            Regime::Between
        }
    }
}

/// Which tester a Monte Carlo probability estimate drives.
#[derive(Debug, Clone)]
pub enum TesterKind {
    /// The i.i.d. pair tester, fed samples from one designated row of every
    /// user's chains.
    Iid {
        /// Tester configuration; `u` must match the truth's user count.
        config: IIDTestConfig,
        /// The 1-based row both chains are sampled from.
        row: u32,
    },
    /// The trajectory procedure, fed freshly simulated batches with
    /// stationary starts.
    Regulatory {
        /// Procedure configuration; `u` must match the truth's user count.
        config: RegulatoryConfig,
    },
    /// The two-block counterfactual composition over simulated batches.
    Counterfactual {
        /// Composition configuration.
        config: CounterfactualConfig,
        /// Which users are paired.
        pairing: CounterfactualPairing,
    },
}

/// A Monte Carlo estimate of `P(YES)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictProbability {
    /// Fraction of trials that answered YES.
    pub yes_rate: f64,
    /// Binomial standard error of the rate.
    pub se: f64,
    /// Trials that answered YES.
    pub yes_count: u32,
    /// Total trials.
    pub trials: u32,
}

struct WorldSampler {
    chain: MarkovChain,
    start: WeightedIndex<f64>,
}

impl WorldSampler {
    fn build(rows: &[Vec<f64>]) -> Result<Self, OracleError> {
        let chain = validate_chain(rows.to_vec())?;
        let pi = stationary_distribution(&chain, 1e-10).map_err(|e| {
            OracleError::Scenario(crate::error::ScenarioError::Stationary(e))
        })?;
        let start = WeightedIndex::new(pi).expect("stationary sums to 1");
        Ok(WorldSampler { chain, start })
    }

    fn batch(&self, user: u32, world: World, m: u32, horizon: u32, seed: Seed) -> FeedBatch {
        let mut start_rng = seed.child("start").rng();
        let trajectories = (0..m)
            .map(|j| {
                let start = self.start.sample(&mut start_rng) as u32 + 1;
                let mut rng = seed.child("traj").index(u64::from(j)).rng();
                let mut states = Vec::with_capacity(horizon as usize);
                states.push(start);
                let mut cur = start;
                for _ in 1..horizon {
                    cur = self.chain.step(cur, &mut rng);
                    states.push(cur);
                }
                Trajectory { states }
            })
            .collect();
        FeedBatch {
            user,
            world,
            n: self.chain.n(),
            trajectories,
        }
    }
}

fn draw_halves(
    sampler: &WeightedIndex<f64>,
    pool_len: usize,
    seed: Seed,
) -> HalvedSamples {
    let mut rng = seed.rng();
    let mut half = || {
        (0..pool_len)
            .map(|_| sampler.sample(&mut rng) as u32 + 1)
            .collect::<Vec<u32>>()
    };
    HalvedSamples {
        half1: half(),
        half2: half(),
    }
}

/// Estimates the probability that `tester` answers YES on fresh data drawn
/// from `truth`, over `trials` independent trials.
///
/// Each trial simulates new samples or batches from the truth's chains
/// (stationary starts for trajectories) and runs the tester. Chains are
/// validated once up front. Output is a pure function of the arguments.
///
/// # Panics
///
/// If `trials == 0`, the truth is empty, a tester's `u` disagrees with the
/// truth's user count, or an i.i.d. row index is out of range.
pub fn verdict_probability(
    truth: &ScenarioTruth,
    tester: &TesterKind,
    trials: u32,
    seed: Seed,
) -> Result<VerdictProbability, OracleError> {
    assert!(trials >= 1, "need at least one trial");
    assert!(!truth.users.is_empty(), "truth must cover at least one user");
    let mut yes_count = 0u32;
    match tester {
        TesterKind::Iid { config, row } => {
            assert_eq!(
                config.u as usize,
                truth.users.len(),
                "config.u must match the truth"
            );
            let r = *row as usize;
            let samplers: Vec<(WeightedIndex<f64>, WeightedIndex<f64>)> = truth
                .users
                .iter()
                .map(|u| {
                    assert!(
                        *row >= 1 && r <= u.p_r.len() && r <= u.q_f.len(),
                        "row {row} out of range"
                    );
                    (
                        WeightedIndex::new(u.p_r[r - 1].iter().copied())
                            .expect("row sums to 1"),
                        WeightedIndex::new(u.q_f[r - 1].iter().copied())
                            .expect("row sums to 1"),
                    )
                })
                .collect();
            let pool_len = if config.poissonize {
                let mf = config.m as f64;
                config.m as usize + libm::ceil(6.0 * libm::sqrt(mf)) as usize + 16
            } else {
                config.m as usize
            };
            for trial in 0..trials {
                let trial_seed = seed.child("trial").index(u64::from(trial));
                let mut p_sets = Vec::with_capacity(samplers.len());
                let mut q_sets = Vec::with_capacity(samplers.len());
                for (u, (sp, sq)) in samplers.iter().enumerate() {
                    let pair_seed = trial_seed.child("pair").index(u as u64);
                    p_sets.push(draw_halves(sp, pool_len, pair_seed.child("P")));
                    q_sets.push(draw_halves(sq, pool_len, pair_seed.child("Q")));
                }
                let verdict = iid_tester(&p_sets, &q_sets, config, trial_seed.child("test"))?;
                if verdict.decision == Decision::Yes {
                    yes_count += 1;
                }
            }
        }
        TesterKind::Regulatory { config } => {
            assert_eq!(
                config.u as usize,
                truth.users.len(),
                "config.u must match the truth"
            );
            let samplers: Vec<(u32, WorldSampler, WorldSampler)> = truth
                .users
                .iter()
                .map(|u| {
                    Ok((
                        u.user,
                        WorldSampler::build(&u.p_r)?,
                        WorldSampler::build(&u.q_f)?,
                    ))
                })
                .collect::<Result<_, OracleError>>()?;
            for trial in 0..trials {
                let trial_seed = seed.child("trial").index(u64::from(trial));
                let mut filtered = Vec::with_capacity(samplers.len());
                let mut reference = Vec::with_capacity(samplers.len());
                for (idx, (user, p_sampler, q_sampler)) in samplers.iter().enumerate() {
                    let user_seed = trial_seed.child("user").index(idx as u64);
                    reference.push(p_sampler.batch(
                        *user,
                        World::Reference,
                        config.m_trajectories,
                        config.horizon,
                        user_seed.child("R"),
                    ));
                    filtered.push(q_sampler.batch(
                        *user,
                        World::Filtered,
                        config.m_trajectories,
                        config.horizon,
                        user_seed.child("F"),
                    ));
                }
                let verdict =
                    regulatory_tester(&filtered, &reference, config, trial_seed.child("test"))?;
                if verdict.decision == Decision::Yes {
                    yes_count += 1;
                }
            }
        }
        TesterKind::Counterfactual { config, pairing } => {
            let find = |user: u32| -> Result<&UserTruth, OracleError> {
                truth
                    .users
                    .iter()
                    .find(|u| u.user == user)
                    .ok_or(OracleError::MissingUser { user })
            };
            let filtered_samplers: Vec<(u32, WorldSampler)> = pairing
                .filtered_users()
                .into_iter()
                .map(|u| Ok((u, WorldSampler::build(&find(u)?.q_f)?)))
                .collect::<Result<_, OracleError>>()?;
            let reference_samplers: Vec<(u32, WorldSampler)> = pairing
                .reference_users()
                .into_iter()
                .map(|u| Ok((u, WorldSampler::build(&find(u)?.p_r)?)))
                .collect::<Result<_, OracleError>>()?;
            let m = config.regulatory.m_trajectories;
            let horizon = config.regulatory.horizon;
            for trial in 0..trials {
                let trial_seed = seed.child("trial").index(u64::from(trial));
                let filtered: Vec<FeedBatch> = filtered_samplers
                    .iter()
                    .map(|(user, s)| {
                        s.batch(
                            *user,
                            World::Filtered,
                            m,
                            horizon,
                            trial_seed.child("user").index(u64::from(*user)).child("F"),
                        )
                    })
                    .collect();
                let reference: Vec<FeedBatch> = reference_samplers
                    .iter()
                    .map(|(user, s)| {
                        s.batch(
                            *user,
                            World::Reference,
                            m,
                            horizon,
                            trial_seed.child("user").index(u64::from(*user)).child("R"),
                        )
                    })
                    .collect();
                let verdict = counterfactual_tester(
                    pairing,
                    &filtered,
                    &reference,
                    config,
                    trial_seed.child("test"),
                )?;
                if verdict.decision == Decision::Yes {
                    yes_count += 1;
                }
            }
        }
    }
    let t = f64::from(trials);
    let yes_rate = f64::from(yes_count) / t;
    Ok(VerdictProbability {
        yes_rate,
        se: libm::sqrt(yes_rate * (1.0 - yes_rate) / t),
        yes_count,
        trials,
    })
}

/// Empirical moments of the per-symbol statistic under Poissonized counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GMoment {
    /// Mean of `(V - Y)^2 - V - Y` over the trials.
    pub mean: f64,
    /// Sample variance.
    pub variance: f64,
    /// Standard error of the mean.
    pub se_mean: f64,
}

/// Samples `V ~ Poisson(m p_i)`, `Y ~ Poisson(m q_i)` per symbol and trial
/// and summarizes `(V - Y)^2 - V - Y`, whose mean identifies
/// `m^2 (p_i - q_i)^2`.
///
/// `p` and `q` are per-symbol rates; they need not sum to 1.
///
/// # Panics
///
/// If the slices differ in length or are empty, a rate is negative or not
/// finite, or `trials < 2`.
pub fn empirical_g_moments(
    p: &[f64],
    q: &[f64],
    m: u64,
    trials: u32,
    seed: Seed,
) -> Vec<GMoment> {
    assert_eq!(p.len(), q.len(), "rate vectors must align");
    assert!(!p.is_empty(), "need at least one symbol");
    assert!(trials >= 2, "variance needs at least two trials");
    for &x in p.iter().chain(q) {
        assert!(x >= 0.0 && x.is_finite(), "rates must be nonnegative");
    }
    let mf = m as f64;
    let mut out = Vec::with_capacity(p.len());
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        let dist_v = (mf * pi > 0.0).then(|| Poisson::new(mf * pi).expect("positive mean"));
        let dist_y = (mf * qi > 0.0).then(|| Poisson::new(mf * qi).expect("positive mean"));
        let mut rng = seed.child("symbol").index(i as u64).rng();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..trials {
            let v = dist_v.as_ref().map_or(0.0, |d| {
                let x: f64 = d.sample(&mut rng);
                x
            });
            let y = dist_y.as_ref().map_or(0.0, |d| {
                let x: f64 = d.sample(&mut rng);
                x
            });
            let diff = v - y;
            let g = diff * diff - v - y;
            sum += g;
            sum_sq += g * g;
        }
        let t = f64::from(trials);
        let mean = sum / t;
        let variance = (sum_sq - sum * sum / t) / (t - 1.0);
        out.push(GMoment {
            mean,
            variance,
            se_mean: libm::sqrt(variance.max(0.0) / t),
        });
    }
    out
}

/// A transition matrix estimated by normalizing observed successor counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PluginEstimate {
    /// Estimated rows; an unvisited state's row is all zeros.
    pub rows: Vec<Vec<f64>>,
    /// States with no observed successor-bearing visit, ascending.
    pub uncovered: Vec<u32>,
    /// Total transitions counted.
    pub transitions: u64,
}

/// Estimates a chain's rows from the transition counts pooled over a
/// batch's trajectories.
///
/// # Panics
///
/// If a state label falls outside `1..=batch.n`.
pub fn plugin_chain_estimate(batch: &FeedBatch) -> PluginEstimate {
    let n = batch.n as usize;
    let mut counts = vec![vec![0u64; n]; n];
    let mut transitions = 0u64;
    for traj in &batch.trajectories {
        for w in traj.states.windows(2) {
            let (a, b) = (w[0], w[1]);
            assert!(a >= 1 && a as usize <= n, "state {a} out of range");
            assert!(b >= 1 && b as usize <= n, "state {b} out of range");
            counts[(a - 1) as usize][(b - 1) as usize] += 1;
            transitions += 1;
        }
    }
    let mut rows = vec![vec![0.0f64; n]; n];
    let mut uncovered = Vec::new();
    for i in 0..n {
        let total: u64 = counts[i].iter().sum();
        if total == 0 {
            uncovered.push((i + 1) as u32);
            continue;
        }
        for j in 0..n {
            rows[i][j] = counts[i][j] as f64 / total as f64;
        }
    }
    PluginEstimate {
        rows,
        uncovered,
        transitions,
    }
}

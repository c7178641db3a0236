//! Validated Markov chains, trajectory simulation, and chain diagnostics.
//!
//! States are labeled `1..=n` throughout; internal storage is 0-based. A
//! [`MarkovChain`] can only be built through [`validate_chain`], so holding
//! one certifies a square, entrywise finite and nonnegative, row-stochastic,
//! irreducible matrix. Row sums are exact to `1e-12` after validation (inputs
//! within `1e-9` of 1 are renormalized, anything further off is rejected).

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{CapExceeded, ChainError, CoverError, NoConvergence};
use crate::seed::Seed;

/// Row-sum slack accepted on input; such rows are renormalized.
const ROW_SUM_INPUT_TOL: f64 = 1e-9;
/// Iteration budget for the stationary power iteration.
const STATIONARY_MAX_ITERS: u64 = 1_000_000;
/// Step cap for the mixing-time search.
const MIXING_CAP: u32 = 100_000;

/// A validated transition matrix over states `1..=n`.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    n: u32,
    rows: Vec<Vec<f64>>,
    samplers: Vec<WeightedIndex<f64>>,
}

/// Validates `rows` and builds a chain.
///
/// Checks run in order: shape, finiteness, nonnegativity, row sums within
/// `1e-9` of 1 (then renormalized), irreducibility of the positive-entry
/// graph.
pub fn validate_chain(rows: Vec<Vec<f64>>) -> Result<MarkovChain, ChainError> {
    let n = rows.len();
    if n == 0 {
        return Err(ChainError::Empty);
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(ChainError::NotSquare {
                row: (i + 1) as u32,
                len: row.len(),
                n,
            });
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(ChainError::NonFinite {
                    row: (i + 1) as u32,
                    col: (j + 1) as u32,
                });
            }
            if v < 0.0 {
                return Err(ChainError::NegativeEntry {
                    row: (i + 1) as u32,
                    col: (j + 1) as u32,
                    value: v,
                });
            }
        }
    }
    let mut rows = rows;
    for (i, row) in rows.iter_mut().enumerate() {
        let sum: f64 = row.iter().sum();
        if libm::fabs(sum - 1.0) > ROW_SUM_INPUT_TOL {
            return Err(ChainError::NotStochastic {
                row: (i + 1) as u32,
                sum,
            });
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    if !strongly_connected(&rows) {
        return Err(ChainError::NotIrreducible);
    }
    let samplers = rows
        .iter()
        .map(|row| WeightedIndex::new(row.iter().copied()).expect("validated row has positive sum"))
        .collect();
    Ok(MarkovChain {
        n: n as u32,
        rows,
        samplers,
    })
}

/// Both-directions reachability from state 0 over positive entries.
fn strongly_connected(rows: &[Vec<f64>]) -> bool {
    let n = rows.len();
    let reach = |transpose: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if transpose { rows[j][i] } else { rows[i][j] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == n
    };
    reach(false) && reach(true)
}

impl MarkovChain {
    /// Number of states.
    pub fn n(&self) -> u32 {
        self.n
    }

    /// The normalized transition rows.
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Transition row of 1-based `state`.
    ///
    /// # Panics
    ///
    /// If `state` is not in `1..=n`.
    pub fn row(&self, state: u32) -> &[f64] {
        assert!(state >= 1 && state <= self.n, "state {state} out of range");
        &self.rows[(state - 1) as usize]
    }

    /// Draws the successor of 1-based `state`.
    ///
    /// # Panics
    ///
    /// If `state` is not in `1..=n`.
    pub fn step<R: Rng + ?Sized>(&self, state: u32, rng: &mut R) -> u32 {
        assert!(state >= 1 && state <= self.n, "state {state} out of range");
        self.samplers[(state - 1) as usize].sample(rng) as u32 + 1
    }
}

/// A realized state sequence; `states[0]` is the start, labels are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    /// The visited states in order.
    pub states: Vec<u32>,
}

impl Trajectory {
    /// Number of recorded states (the horizon).
    pub fn len(&self) -> usize {
        self.states.len()
    }

    /// True when no states are recorded.
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Simulates `length` states of `chain` starting at `start`.
///
/// The start is recorded at index 0, so `length - 1` transitions are drawn.
/// Output is a pure function of `(chain, start, length, seed)`.
///
/// # Panics
///
/// If `start` is not in `1..=n` or `length == 0`.
pub fn simulate_trajectory(chain: &MarkovChain, start: u32, length: u32, seed: Seed) -> Trajectory {
    assert!(length >= 1, "length must be at least 1");
    assert!(
        start >= 1 && start <= chain.n(),
        "start {start} out of range"
    );
    let mut rng = seed.rng();
    let mut states = Vec::with_capacity(length as usize);
    states.push(start);
    let mut cur = start;
    for _ in 1..length {
        cur = chain.step(cur, &mut rng);
        states.push(cur);
    }
    Trajectory { states }
}

/// State visit counts over a trajectory prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountingMeasure {
    counts: Vec<u64>,
    total: u64,
}

impl CountingMeasure {
    /// Counts visits within the first `t` recorded states of `traj`.
    ///
    /// The start position counts, so at `t = 1` the start state has one visit.
    ///
    /// # Panics
    ///
    /// If `t` is 0 or exceeds the trajectory length, or a state label falls
    /// outside `1..=n`.
    pub fn from_prefix(traj: &Trajectory, t: usize, n: u32) -> Self {
        assert!(t >= 1 && t <= traj.len(), "prefix length {t} out of range");
        let mut counts = vec![0u64; n as usize];
        for &s in &traj.states[..t] {
            assert!(s >= 1 && s <= n, "state {s} out of range");
            counts[(s - 1) as usize] += 1;
        }
        CountingMeasure {
            counts,
            total: t as u64,
        }
    }

    /// Visits to 1-based `state`.
    ///
    /// # Panics
    ///
    /// If `state` is not in `1..=n`.
    pub fn count(&self, state: u32) -> u64 {
        assert!(
            state >= 1 && (state as usize) <= self.counts.len(),
            "state {state} out of range"
        );
        self.counts[(state - 1) as usize]
    }

    /// Total counted positions (the prefix length).
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Counts for all states in label order.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

fn l1_diff(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += libm::fabs(x - y);
    }
    s
}

/// `x * M` for a row vector `x`.
fn vec_mat(x: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        let row = &rows[i];
        for j in 0..n {
            y[j] += xi * row[j];
        }
    }
    y
}

fn normalize(mut x: Vec<f64>) -> Vec<f64> {
    let sum: f64 = x.iter().sum();
    for v in x.iter_mut() {
        *v /= sum;
    }
    x
}

/// Stationary distribution by power iteration from the uniform vector.
///
/// Returns a distribution with residual `||pi M - pi||_1 <= tol`. Period-2
/// chains are handled by averaging two consecutive iterates; the iterate pair
/// `(x, xM)` then converges even though neither sequence does alone. Gives up
/// after `1e6` iterations.
///
/// # Panics
///
/// If `tol` is not positive and finite.
pub fn stationary_distribution(chain: &MarkovChain, tol: f64) -> Result<Vec<f64>, NoConvergence> {
    assert!(tol > 0.0 && tol.is_finite(), "tol must be positive");
    let n = chain.n() as usize;
    let mut prev = vec![1.0 / n as f64; n];
    let mut cur = vec_mat(&prev, &chain.rows);
    for _ in 0..STATIONARY_MAX_ITERS {
        let next = vec_mat(&cur, &chain.rows);
        // ||next M - next||_1 <= ||next - cur||_1 since M contracts l1.
        if l1_diff(&next, &cur) <= tol {
            return Ok(normalize(next));
        }
        // For avg = (cur + next)/2 the residual is bounded by
        // ||next - prev||_1 / 2, which vanishes on period-2 oscillation.
        if 0.5 * l1_diff(&next, &prev) <= tol {
            let avg: Vec<f64> = cur.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
            return Ok(normalize(avg));
        }
        prev = cur;
        cur = next;
    }
    Err(NoConvergence {
        max_iters: STATIONARY_MAX_ITERS,
        tol,
    })
}

/// Smallest `t >= 1` with `max_i TV(delta_i M^t, pi) <= 1/4`, by exact matrix
/// powering, capped at `1e5` steps.
///
/// Periodic chains never satisfy the bound and report [`CapExceeded`], as do
/// chains whose stationary distribution cannot be pinned down within the
/// power-iteration budget (such chains do not certify mixing either way).
pub fn mixing_time_estimate(chain: &MarkovChain) -> Result<u32, CapExceeded> {
    let pi = match stationary_distribution(chain, 1e-10) {
        Ok(pi) => pi,
        Err(_) => return Err(CapExceeded { cap: MIXING_CAP }),
    };
    let n = chain.n() as usize;
    let mut power = chain.rows.clone();
    for t in 1..=MIXING_CAP {
        let worst = power
            .iter()
            .map(|row| 0.5 * l1_diff(row, &pi))
            .fold(0.0f64, f64::max);
        if worst <= 0.25 {
            return Ok(t);
        }
        let mut next = vec![vec![0.0; n]; n];
        for (pr, nr) in power.iter().zip(next.iter_mut()) {
            *nr = vec_mat(pr, &chain.rows);
        }
        power = next;
    }
    Err(CapExceeded { cap: MIXING_CAP })
}

/// Summary quantities used to size observation horizons for a chain.
#[derive(Debug, Clone)]
pub struct ChainDiagnostics {
    /// Stationary distribution, residual at most `1e-10`.
    pub stationary: Vec<f64>,
    /// Smallest stationary mass.
    pub pi_star: f64,
    /// Mixing-time estimate; `None` when the search capped out.
    pub t_mix: Option<u32>,
    /// Cover-time estimate for the requested walk count and coverage level.
    pub t_cov: crate::cover::CoverTimeEstimate,
}

impl ChainDiagnostics {
    /// Computes diagnostics for `chain` with `m` parallel walks required to
    /// cover every state `k` times, averaging `trials` runs per start profile.
    ///
    /// See [`crate::cover::estimate_cover_time`] for the cover parameters.
    pub fn compute(
        chain: &MarkovChain,
        m: u32,
        k: u64,
        trials: u32,
        cap: u32,
        seed: Seed,
    ) -> Result<Self, CoverError> {
        let stationary = stationary_distribution(chain, 1e-10)?;
        let pi_star = stationary.iter().copied().fold(f64::INFINITY, f64::min);
        let t_mix = mixing_time_estimate(chain).ok();
        let t_cov = crate::cover::estimate_cover_time(chain, m, k, trials, cap, seed)?;
        Ok(ChainDiagnostics {
            stationary,
            pi_star,
            t_mix,
            t_cov,
        })
    }
}

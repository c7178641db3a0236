//! Joint cover times: when do `m` parallel walks visit every state `k` times?
//!
//! The joint `k`-cover stop of walks `Z_1, ..., Z_m` is the first time `t`
//! such that every state has at least `k` visits pooled across all walks'
//! first `t` positions (starts count as visits at time 1). The Monte Carlo
//! estimator runs the stop from each deterministic start profile and from
//! stationary starts, and reports the worst mean; observation horizons are
//! sized from that pessimistic value.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_chacha::ChaCha12Rng;

use crate::error::CoverError;
use crate::markov::{stationary_distribution, MarkovChain};
use crate::seed::Seed;

/// An endless random walk on a chain, yielding the start state first.
#[derive(Debug)]
pub struct ChainWalk<'a> {
    chain: &'a MarkovChain,
    rng: ChaCha12Rng,
    state: u32,
}

impl<'a> ChainWalk<'a> {
    /// Starts a walk at 1-based `start`.
    ///
    /// # Panics
    ///
    /// If `start` is not in `1..=n`.
    pub fn new(chain: &'a MarkovChain, start: u32, seed: Seed) -> Self {
        assert!(
            start >= 1 && start <= chain.n(),
            "start {start} out of range"
        );
        ChainWalk {
            chain,
            rng: seed.rng(),
            state: start,
        }
    }
}

impl Iterator for ChainWalk<'_> {
    type Item = u32;

    fn next(&mut self) -> Option<u32> {
        let cur = self.state;
        self.state = self.chain.step(cur, &mut self.rng);
        Some(cur)
    }
}

/// First time `t` at which the pooled visit count of every state in
/// `1..=n` reaches `k`, advancing all walks in lockstep.
///
/// The `j`-th drawn element of each walk is its position at time `j`, so a
/// walk's start counts at `t = 1`. Fails with `BudgetExceeded` if coverage is
/// not reached within `budget` joint steps, or earlier if some walk runs out
/// of states (then `consumed` is the last fully observed time).
///
/// # Panics
///
/// If `walks` is empty, `n == 0`, `k == 0`, or a walk yields a state outside
/// `1..=n`.
pub fn joint_k_cover_stop<I>(walks: &mut [I], n: u32, k: u64, budget: u32) -> Result<u32, CoverError>
where
    I: Iterator<Item = u32>,
{
    assert!(!walks.is_empty(), "need at least one walk");
    assert!(n >= 1, "need at least one state");
    assert!(k >= 1, "coverage level must be at least 1");
    let mut counts = vec![0u64; n as usize];
    let mut below_k = n;
    for t in 1..=budget {
        for walk in walks.iter_mut() {
            let Some(s) = walk.next() else {
                return Err(CoverError::BudgetExceeded {
                    consumed: t - 1,
                    budget,
                });
            };
            assert!(s >= 1 && s <= n, "state {s} out of range");
            let c = &mut counts[(s - 1) as usize];
            *c += 1;
            if *c == k {
                below_k -= 1;
            }
        }
        if below_k == 0 {
            return Ok(t);
        }
    }
    Err(CoverError::BudgetExceeded {
        consumed: budget,
        budget,
    })
}

/// Where the `m` walks of a cover-time trial begin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartProfile {
    /// Every walk starts at this 1-based state.
    AllAt(u32),
    /// Each walk starts at an independent stationary draw.
    Stationary,
}

/// Monte Carlo summary of the cover stop from one start profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEstimate {
    /// The start profile.
    pub profile: StartProfile,
    /// Mean stopping time over the trials.
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
}

/// Cover-time estimates across all start profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverTimeEstimate {
    /// Number of parallel walks per trial.
    pub m: u32,
    /// Required pooled visits per state.
    pub k: u64,
    /// Trials per profile.
    pub trials: u32,
    /// One estimate per profile: all states in label order, then stationary.
    pub per_profile: Vec<ProfileEstimate>,
}

impl CoverTimeEstimate {
    /// The pessimistic estimate: the largest per-profile mean.
    pub fn t_hat(&self) -> f64 {
        self.per_profile
            .iter()
            .map(|p| p.mean)
            .fold(0.0f64, f64::max)
    }
}

/// Estimates mean joint `k`-cover times of `m` walks on `chain` by running
/// `trials` independent stops from every start profile (each state, then
/// stationary starts).
///
/// Fails if any trial exceeds `budget` joint steps, or if stationary starts
/// cannot be computed. Output is a pure function of the arguments.
///
/// # Panics
///
/// If `m == 0`, `k == 0`, or `trials < 100` (too few for a usable mean).
pub fn estimate_cover_time(
    chain: &MarkovChain,
    m: u32,
    k: u64,
    trials: u32,
    budget: u32,
    seed: Seed,
) -> Result<CoverTimeEstimate, CoverError> {
    assert!(m >= 1, "need at least one walk");
    assert!(k >= 1, "coverage level must be at least 1");
    assert!(trials >= 100, "need at least 100 trials per profile");
    let n = chain.n();
    let pi = stationary_distribution(chain, 1e-10)?;
    let pi_sampler = WeightedIndex::new(pi.iter().copied()).expect("stationary sums to 1");

    let mut per_profile = Vec::with_capacity(n as usize + 1);
    let mut profiles: Vec<StartProfile> = (1..=n).map(StartProfile::AllAt).collect();
    profiles.push(StartProfile::Stationary);

    for (p_idx, profile) in profiles.into_iter().enumerate() {
        let profile_seed = seed.child("profile").index(p_idx as u64);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for trial in 0..trials {
            let trial_seed = profile_seed.child("trial").index(u64::from(trial));
            let mut start_rng = trial_seed.child("starts").rng();
            let mut walks: Vec<ChainWalk<'_>> = (0..m)
                .map(|j| {
                    let start = match profile {
                        StartProfile::AllAt(v) => v,
                        StartProfile::Stationary => {
                            pi_sampler.sample(&mut start_rng) as u32 + 1
                        }
                    };
                    ChainWalk::new(chain, start, trial_seed.child("walk").index(u64::from(j)))
                })
                .collect();
            let stop = joint_k_cover_stop(&mut walks, n, k, budget)?;
            let x = f64::from(stop);
            sum += x;
            sum_sq += x * x;
        }
        let t = f64::from(trials);
        let mean = sum / t;
        let var = (sum_sq - sum * sum / t) / (t - 1.0);
        let se = libm::sqrt(var.max(0.0) / t);
        per_profile.push(ProfileEstimate { profile, mean, se });
    }
    Ok(CoverTimeEstimate {
        m,
        k,
        trials,
        per_profile,
    })
}

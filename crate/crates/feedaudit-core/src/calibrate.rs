//! Empirical calibration of the tester's free constants.
//!
//! The threshold constant `c` and the sample-size multiplier `C` are not
//! pinned down by the analysis; they are fixed here by simulation. For each
//! candidate `C` from an ascending ladder, every grid point is run at its
//! own sample budget `required_m(...)` (halved for points that mimic the
//! per-state budget split of the trajectory tester). Null points yield lower
//! bounds on `c` (their statistic's upper `1 - delta` quantile divided by
//! the unit threshold), alternative points yield upper bounds (lower `delta`
//! quantile likewise). The smallest `C` whose window `[c_low, c_high]` is
//! wide enough wins, and `c` is the geometric mean of the window, leaving
//! symmetric slack on both sides.
//!
//! The shipped [`CalibrationConstants::shipped`] values come from running
//! [`calibrate_constant`] on [`shipped_grid`] with the seed and trial count
//! recorded in the repository's calibration artifact.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::error::{CalibrationError, ConfigViolation};
use crate::iid::{iid_tester, required_m, threshold, HalvedSamples, IIDTestConfig};
use crate::seed::{fnv1a64, Seed};
use crate::Regime;

/// Candidate sample-size multipliers, ascending; the first feasible wins.
const BIG_C_LADDER: [f64; 9] = [2.0, 4.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0];
/// Required ratio between the window's upper and lower bound on `c`.
const WINDOW_RATIO: f64 = 1.15;

/// The calibrated constants the testers run with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConstants {
    /// Threshold constant in `tau`.
    pub c: f64,
    /// Multiplier on the sample-size formula.
    pub big_c: f64,
    /// Largest certified `eps1 / eps2` ratio.
    pub regime_constant: f64,
}

impl CalibrationConstants {
    /// Constants from this repository's calibration run: [`shipped_grid`],
    /// 20000 trials per point, seed 20260817. The `calibration/` directory
    /// at the repository root holds the artifact and the full report.
    pub const fn shipped() -> Self {
        CalibrationConstants {
            c: 0.637980922751205,
            big_c: 8.0,
            regime_constant: 0.25,
        }
    }
}

impl Default for CalibrationConstants {
    fn default() -> Self {
        Self::shipped()
    }
}

/// One calibration instance: aligned distribution pairs with known regime.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    /// Alphabet size.
    pub n: u32,
    /// Number of pairs.
    pub u: u32,
    /// Lower tolerance.
    pub eps1: f64,
    /// Upper tolerance.
    pub eps2: f64,
    /// Risk for this point; `None` falls back to the call's target risk.
    pub delta: Option<f64>,
    /// The `(P_u, Q_u)` distributions, entries per symbol `1..=n`.
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    /// Declared side; checked against the realized distances.
    pub regime: Regime,
    /// Run at `floor(required_m / 2)` per half, the budget available to each
    /// half after a trajectory tester splits its per-state sample.
    pub half_budget: bool,
    /// Poissonize the counts for this point.
    pub poissonize: bool,
}

impl GridPoint {
    fn validate(&self, target_delta: f64) -> Result<(), ConfigViolation> {
        if self.u == 0 || self.pairs.len() != self.u as usize {
            return Err(ConfigViolation {
                field: "pairs",
                requirement: "exactly u pairs",
            });
        }
        if !(self.eps1 >= 0.0 && self.eps1 < self.eps2 && self.eps2 <= 1.0) {
            return Err(ConfigViolation {
                field: "eps1/eps2",
                requirement: "0 <= eps1 < eps2 <= 1",
            });
        }
        let delta = self.delta.unwrap_or(target_delta);
        if !(delta > 0.0 && delta < 1.0) {
            return Err(ConfigViolation {
                field: "delta",
                requirement: "in (0, 1)",
            });
        }
        let mut sum_l1 = 0.0;
        for (p, q) in &self.pairs {
            for dist in [p, q] {
                if dist.len() != self.n as usize {
                    return Err(ConfigViolation {
                        field: "pairs",
                        requirement: "each distribution has n entries",
                    });
                }
                let mut total = 0.0;
                for &x in dist.iter() {
                    if !(x >= 0.0 && x.is_finite()) {
                        return Err(ConfigViolation {
                            field: "pairs",
                            requirement: "entries nonnegative and finite",
                        });
                    }
                    total += x;
                }
                if libm::fabs(total - 1.0) > 1e-9 {
                    return Err(ConfigViolation {
                        field: "pairs",
                        requirement: "each distribution sums to 1",
                    });
                }
            }
            let mut l1 = 0.0;
            for (a, b) in p.iter().zip(q) {
                l1 += libm::fabs(a - b);
            }
            sum_l1 += l1;
        }
        let uf = f64::from(self.u);
        let consistent = match self.regime {
            Regime::Null => sum_l1 <= uf * self.eps1 + 1e-9,
            Regime::Alternative => sum_l1 >= uf * self.eps2 - 1e-9,
            Regime::Between => false,
        };
        if !consistent {
            return Err(ConfigViolation {
                field: "regime",
                requirement: "distances must land on the declared side",
            });
        }
        Ok(())
    }
}

/// A finished calibration: the constants plus the evidence behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// Calibrated threshold constant (geometric mean of the window).
    pub c: f64,
    /// Smallest feasible sample-size multiplier.
    pub big_c: f64,
    /// Largest `eps1 / eps2` ratio exercised by the grid (0.25 baseline when
    /// the grid only exercises exact nulls).
    pub regime_constant: f64,
    /// Largest lower bound on `c` over null points.
    pub c_low: f64,
    /// Smallest upper bound on `c` over alternative points.
    pub c_high: f64,
    /// Worst empirical error across grid points at the final `(c, C)`.
    pub achieved_error: f64,
    /// Binomial standard error of `achieved_error` at this trial count.
    pub achieved_error_se: f64,
    /// Per-point empirical error at the final `(c, C)`, grid order.
    pub point_errors: Vec<f64>,
    /// Trials per grid point.
    pub trials: u32,
    /// FNV-1a hash of the grid's canonical encoding.
    pub grid_hash: u64,
}

impl Calibration {
    /// The constants to hand to the testers.
    pub fn constants(&self) -> CalibrationConstants {
        CalibrationConstants {
            c: self.c,
            big_c: self.big_c,
            regime_constant: self.regime_constant,
        }
    }
}

/// Nearest-rank upper quantile: smallest value with at least `q * len`
/// observations at or below it.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let len = sorted.len();
    let rank = libm::ceil(q * len as f64) as usize;
    sorted[rank.clamp(1, len) - 1]
}

struct PointRun {
    g_totals: Vec<f64>,
    tau_unit: f64,
    delta: f64,
    regime: Regime,
}

fn run_point(
    point: &GridPoint,
    big_c: f64,
    target_delta: f64,
    trials: u32,
    seed: Seed,
) -> Result<PointRun, CalibrationError> {
    let delta = point.delta.unwrap_or(target_delta);
    // The regime gate is disabled while calibrating; the returned constant
    // reports what the grid actually exercised.
    let probe = CalibrationConstants {
        c: 1.0,
        big_c,
        regime_constant: 1.0,
    };
    let m_full = required_m(point.n, point.u, point.eps1, point.eps2, delta, &probe)?;
    let m = if point.half_budget {
        (m_full / 2).max(1)
    } else {
        m_full
    };
    let config = IIDTestConfig {
        u: point.u,
        n: point.n,
        m,
        eps1: point.eps1,
        eps2: point.eps2,
        delta,
        c: 1.0,
        poissonize: point.poissonize,
    };
    let tau_unit = threshold(&config);
    let pool_len = if point.poissonize {
        let mf = m as f64;
        m as usize + libm::ceil(6.0 * libm::sqrt(mf)) as usize + 16
    } else {
        m as usize
    };
    let samplers: Vec<(WeightedIndex<f64>, WeightedIndex<f64>)> = point
        .pairs
        .iter()
        .map(|(p, q)| {
            (
                WeightedIndex::new(p.iter().copied()).expect("validated distribution"),
                WeightedIndex::new(q.iter().copied()).expect("validated distribution"),
            )
        })
        .collect();
    let mut g_totals = Vec::with_capacity(trials as usize);
    for trial in 0..trials {
        let trial_seed = seed.child("trial").index(u64::from(trial));
        let mut p_sets = Vec::with_capacity(point.u as usize);
        let mut q_sets = Vec::with_capacity(point.u as usize);
        for (u, (sp, sq)) in samplers.iter().enumerate() {
            let pair_seed = trial_seed.child("pair").index(u as u64);
            let draw = |sampler: &WeightedIndex<f64>, label: &str| {
                let mut rng = pair_seed.child(label).rng();
                let half = |rng: &mut rand_chacha::ChaCha12Rng| {
                    (0..pool_len)
                        .map(|_| sampler.sample(rng) as u32 + 1)
                        .collect::<Vec<u32>>()
                };
                HalvedSamples {
                    half1: half(&mut rng),
                    half2: half(&mut rng),
                }
            };
            p_sets.push(draw(sp, "P"));
            q_sets.push(draw(sq, "Q"));
        }
        let verdict = iid_tester(&p_sets, &q_sets, &config, trial_seed.child("test"))
            .expect("pools sized for the draw");
        g_totals.push(verdict.statistic.total);
    }
    g_totals.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite statistic"));
    Ok(PointRun {
        g_totals,
        tau_unit,
        delta,
        regime: point.regime,
    })
}

/// Calibrates `(c, C)` on `grid`, running `trials` simulations per point.
///
/// Points without their own risk use `target_delta`. The grid must contain at
/// least one null and one alternative point. Output is a pure function of the
/// arguments; grid points are independent seed subtrees.
///
/// # Panics
///
/// If `trials < 100` (quantiles would be meaningless).
pub fn calibrate_constant(
    grid: &[GridPoint],
    trials: u32,
    target_delta: f64,
    seed: Seed,
) -> Result<Calibration, CalibrationError> {
    assert!(trials >= 100, "need at least 100 trials per point");
    for (index, point) in grid.iter().enumerate() {
        point
            .validate(target_delta)
            .map_err(|violation| CalibrationError::BadGridPoint { index, violation })?;
    }
    let nulls = grid.iter().filter(|p| p.regime == Regime::Null).count();
    if nulls == 0 || nulls == grid.len() {
        return Err(CalibrationError::EmptyGrid);
    }

    let mut best: Option<(f64, f64, f64)> = None; // (big_c, c_low, c_high)
    for &big_c in BIG_C_LADDER.iter() {
        let runs: Vec<PointRun> = grid
            .iter()
            .enumerate()
            .map(|(i, p)| run_point(p, big_c, target_delta, trials, seed.child("point").index(i as u64)))
            .collect::<Result<_, _>>()?;
        let mut c_low = 0.0f64;
        let mut c_high = f64::INFINITY;
        for run in &runs {
            match run.regime {
                Regime::Null => {
                    let q = quantile(&run.g_totals, 1.0 - run.delta);
                    c_low = c_low.max(q / run.tau_unit);
                }
                Regime::Alternative => {
                    let q = quantile(&run.g_totals, run.delta);
                    c_high = c_high.min(q / run.tau_unit);
                }
                Regime::Between => unreachable!("rejected by validation"),
            }
        }
        c_low = c_low.max(1e-12);
        let feasible = c_high.is_finite() && c_high > 0.0 && c_high >= WINDOW_RATIO * c_low;
        let improves = match best {
            None => true,
            Some((_, bl, bh)) => c_high / c_low > bh / bl,
        };
        if improves {
            best = Some((big_c, c_low, c_high));
        }
        if !feasible {
            continue;
        }

        let c = libm::sqrt(c_low * c_high);
        let mut point_errors = Vec::with_capacity(runs.len());
        let mut achieved_error = 0.0f64;
        let mut within_budget = true;
        for run in &runs {
            let cut = c * run.tau_unit;
            let wrong = match run.regime {
                Regime::Null => run.g_totals.iter().filter(|&&g| g >= cut).count(),
                Regime::Alternative => run.g_totals.iter().filter(|&&g| g < cut).count(),
                Regime::Between => unreachable!("rejected by validation"),
            };
            let err = wrong as f64 / run.g_totals.len() as f64;
            within_budget &= err <= run.delta;
            achieved_error = achieved_error.max(err);
            point_errors.push(err);
        }
        if !within_budget {
            continue;
        }
        let regime_ratio = grid
            .iter()
            .map(|p| p.eps1 / p.eps2)
            .fold(0.0f64, f64::max);
        let tf = f64::from(trials);
        return Ok(Calibration {
            c,
            big_c,
            regime_constant: if regime_ratio > 0.0 { regime_ratio } else { 0.25 },
            c_low,
            c_high,
            achieved_error,
            achieved_error_se: libm::sqrt(achieved_error * (1.0 - achieved_error) / tf),
            point_errors,
            trials,
            grid_hash: grid_hash(grid),
        });
    }
    let (best_big_c, best_c_low, best_c_high) = best.expect("ladder is nonempty");
    Err(CalibrationError::CalibrationFailed {
        best_big_c,
        best_c_low,
        best_c_high,
        required_ratio: WINDOW_RATIO,
    })
}

/// FNV-1a hash of the grid's canonical byte encoding (shape fields, then
/// every distribution entry's exact bit pattern).
pub fn grid_hash(grid: &[GridPoint]) -> u64 {
    let mut bytes = Vec::new();
    for p in grid {
        bytes.extend_from_slice(&p.n.to_le_bytes());
        bytes.extend_from_slice(&p.u.to_le_bytes());
        bytes.extend_from_slice(&p.eps1.to_bits().to_le_bytes());
        bytes.extend_from_slice(&p.eps2.to_bits().to_le_bytes());
        let delta_bits = p.delta.map(f64::to_bits).unwrap_or(u64::MAX);
        bytes.extend_from_slice(&delta_bits.to_le_bytes());
        bytes.push(match p.regime {
            Regime::Null => 0,
            Regime::Alternative => 1,
            Regime::Between => 2,
        });
        bytes.push(u8::from(p.half_budget));
        bytes.push(u8::from(p.poissonize));
        for (a, b) in &p.pairs {
            for dist in [a, b] {
                for &x in dist.iter() {
                    bytes.extend_from_slice(&x.to_bits().to_le_bytes());
                }
            }
        }
    }
    fnv1a64(&bytes)
}

fn uniform(n: u32) -> Vec<f64> {
    vec![1.0 / f64::from(n); n as usize]
}

/// The grid behind the shipped constants.
///
/// Null points: exact nulls at `n = 10` for one and four pairs, a
/// regime-boundary null at `eps1 = eps2 / 4`, and an exact null at `n = 2`
/// with three pairs under the per-state budget split (the trajectory
/// tester's worst risk, `delta / (2n)` at `n = 2`). Alternative points: a
/// distance-`eps2` instance at `n = 10` for one, two, and four pairs, and
/// `n = 2` instances at per-pair distance 1 and at the summed boundary.
pub fn shipped_grid() -> Vec<GridPoint> {
    let u10 = uniform(10);
    // l1 distance 0.125 = eps2 / 4 from uniform.
    let mut shifted10 = uniform(10);
    shifted10[0] += 0.0625;
    shifted10[1] -= 0.0625;
    // l1 distance exactly 0.5 from uniform.
    let alt10 = vec![0.35, 0.0, 0.0, 0.05, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
    let u2 = uniform(2);
    let alt2 = vec![0.75, 0.25];
    let flipped2 = vec![0.25, 0.75];

    let direct = |u: u32, pairs: Vec<(Vec<f64>, Vec<f64>)>, eps1: f64, regime: Regime| GridPoint {
        n: 10,
        u,
        eps1,
        eps2: 0.5,
        delta: Some(0.1),
        pairs,
        regime,
        half_budget: false,
        poissonize: true,
    };
    let split = |pairs: Vec<(Vec<f64>, Vec<f64>)>, regime: Regime| GridPoint {
        n: 2,
        u: 3,
        eps1: 0.0,
        eps2: 0.5,
        delta: Some(0.025),
        pairs,
        regime,
        half_budget: true,
        poissonize: false,
    };

    vec![
        direct(1, vec![(u10.clone(), u10.clone())], 0.0, Regime::Null),
        direct(4, vec![(u10.clone(), u10.clone()); 4], 0.0, Regime::Null),
        direct(
            1,
            vec![(u10.clone(), shifted10)],
            0.125,
            Regime::Null,
        ),
        direct(1, vec![(u10.clone(), alt10.clone())], 0.0, Regime::Alternative),
        direct(2, vec![(u10.clone(), alt10.clone()); 2], 0.0, Regime::Alternative),
        direct(4, vec![(u10, alt10); 4], 0.0, Regime::Alternative),
        split(vec![(u2.clone(), u2.clone()); 3], Regime::Null),
        split(
            vec![(alt2.clone(), flipped2.clone()); 3],
            Regime::Alternative,
        ),
        split(vec![(u2, alt2); 3], Regime::Alternative),
    ]
}

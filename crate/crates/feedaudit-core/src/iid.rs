//! Tolerant closeness testing for sums of i.i.d. distribution pairs.
//!
//! Given `U` pairs of distributions over `1..=n`, each observed through two
//! disjoint halves of samples, the tester decides between
//! `sum_u ||P_u - Q_u||_1 <= U * eps1` (YES) and `>= U * eps2` (NO) with risk
//! `delta`. Per pair and symbol it forms
//!
//! ```text
//! G_{u,i} = (V_{u,i} - Y_{u,i})^2 - V_{u,i} - Y_{u,i}
//! ```
//!
//! from first-half counts `V` (P side) and `Y` (Q side); `G_{u,i}` is an
//! unbiased estimator of `m^2 (P_{u,i} - Q_{u,i})^2`. Each term is weighted
//! by `1 / f_hat_{u,i}`, where `f_hat` is built from the second-half counts
//! and trims the variance contributed by heavy symbols. The weighted sum `G`
//! is compared to a threshold `tau` that scales as
//! `c * min(m^{3/2} eps2 / sqrt(n), U m^2 eps2^2 / n)`; `G < tau` means YES
//! and ties go to NO.
//!
//! Sampling the per-half sizes as Poisson(m) instead of fixing them makes
//! every count vector independent across symbols, which is what the variance
//! analysis behind the threshold assumes. Both modes are supported; the
//! calibration grid covers both.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::calibrate::CalibrationConstants;
use crate::error::{ConfigViolation, IidError, InsufficientSamples, RegimeViolation};
use crate::seed::Seed;
use crate::Decision;

/// Configuration of one tester invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct IIDTestConfig {
    /// Number of distribution pairs.
    pub u: u32,
    /// Alphabet size; symbols are `1..=n`.
    pub n: u32,
    /// Nominal per-half sample size for each distribution.
    pub m: u64,
    /// Lower tolerance on the mean pair distance, in `[0, 1]`.
    pub eps1: f64,
    /// Upper tolerance on the mean pair distance, in `(0, 1]`.
    pub eps2: f64,
    /// Two-sided risk, in `(0, 1)`.
    pub delta: f64,
    /// Threshold constant.
    pub c: f64,
    /// Draw per-half sizes as Poisson(m) instead of using exactly `m`.
    pub poissonize: bool,
}

impl IIDTestConfig {
    /// Checks every field against its documented range.
    pub fn validate(&self) -> Result<(), ConfigViolation> {
        if self.u == 0 {
            return Err(ConfigViolation {
                field: "u",
                requirement: "at least one pair",
            });
        }
        if self.n == 0 {
            return Err(ConfigViolation {
                field: "n",
                requirement: "at least one symbol",
            });
        }
        if !(self.eps1 >= 0.0 && self.eps1 <= 1.0) {
            return Err(ConfigViolation {
                field: "eps1",
                requirement: "in [0, 1]",
            });
        }
        if !(self.eps2 > 0.0 && self.eps2 <= 1.0) {
            return Err(ConfigViolation {
                field: "eps2",
                requirement: "in (0, 1]",
            });
        }
        if !(self.eps1 < self.eps2) {
            return Err(ConfigViolation {
                field: "eps1",
                requirement: "strictly below eps2",
            });
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ConfigViolation {
                field: "delta",
                requirement: "in (0, 1)",
            });
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(ConfigViolation {
                field: "c",
                requirement: "positive and finite",
            });
        }
        Ok(())
    }
}

/// Two disjoint halves of samples from one distribution, symbols `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HalvedSamples {
    /// First half; feeds the statistic counts.
    pub half1: Vec<u32>,
    /// Second half; feeds the weight counts.
    pub half2: Vec<u32>,
}

/// Tabulated counts for one distribution of a pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistributionCounts {
    /// First-half counts per symbol (the `V` or `Y` vector).
    pub primary: Vec<u64>,
    /// Second-half counts per symbol (the `V~` or `Y~` vector).
    pub auxiliary: Vec<u64>,
    /// Realized Poisson draws for (half 1, half 2); `None` in fixed mode.
    pub poisson_draws: Option<(u64, u64)>,
    /// A Poisson draw exceeded the available samples and was truncated.
    pub truncated: bool,
}

/// Counts for one pair: `p` holds `V`/`V~`, `q` holds `Y`/`Y~`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleCounts {
    /// Nominal per-half sample size `m`.
    pub nominal_m: u64,
    /// Counts from the P-side samples.
    pub p: DistributionCounts,
    /// Counts from the Q-side samples.
    pub q: DistributionCounts,
}

/// Tabulates one distribution's halves into per-symbol counts.
///
/// With `poissonize` off, exactly `m` symbols are consumed from the front of
/// each half and fewer than `m` is an error. With it on, a Poisson(m) size is
/// drawn per half from `rng` (half 1 first), truncated at the available
/// length, and the truncation is flagged; the realized draws are recorded.
///
/// # Panics
///
/// If a consumed symbol falls outside `1..=n`.
pub fn build_counts<R: Rng + ?Sized>(
    half1: &[u32],
    half2: &[u32],
    n: u32,
    m: u64,
    poissonize: bool,
    rng: &mut R,
) -> Result<DistributionCounts, InsufficientSamples> {
    let mut draws = (0u64, 0u64);
    let mut truncated = false;
    let mut tabulate = |half: &[u32], which: u8| -> Result<Vec<u64>, InsufficientSamples> {
        let take = if poissonize {
            let k = poisson_draw(m, rng);
            if which == 1 {
                draws.0 = k;
            } else {
                draws.1 = k;
            }
            if k as usize > half.len() {
                truncated = true;
                half.len()
            } else {
                k as usize
            }
        } else {
            if (half.len() as u64) < m {
                return Err(InsufficientSamples {
                    half: which,
                    available: half.len(),
                    required: m,
                });
            }
            m as usize
        };
        let mut counts = vec![0u64; n as usize];
        for &s in &half[..take] {
            assert!(s >= 1 && s <= n, "symbol {s} out of range");
            counts[(s - 1) as usize] += 1;
        }
        Ok(counts)
    };
    let primary = tabulate(half1, 1)?;
    let auxiliary = tabulate(half2, 2)?;
    Ok(DistributionCounts {
        primary,
        auxiliary,
        poisson_draws: poissonize.then_some(draws),
        truncated,
    })
}

fn poisson_draw<R: Rng + ?Sized>(m: u64, rng: &mut R) -> u64 {
    if m == 0 {
        return 0;
    }
    let dist = Poisson::new(m as f64).expect("positive mean");
    let x: f64 = dist.sample(rng);
    x as u64
}

/// Per-symbol weights from the second-half counts.
///
/// For `m > n` the weight is
/// `max(|V~ - Y~| / sqrt(m/n), (V~ + Y~) / (m/n), 1)`; otherwise it is
/// `max(V~ + Y~, 1)`. Weights are always at least 1.
pub fn f_hat(counts: &SampleCounts, config: &IIDTestConfig) -> Vec<f64> {
    assert_eq!(
        counts.nominal_m, config.m,
        "counts were built for a different m"
    );
    let m = config.m;
    let n = config.n;
    let mut out = Vec::with_capacity(n as usize);
    for i in 0..n as usize {
        let tv = counts.p.auxiliary[i] as f64;
        let ty = counts.q.auxiliary[i] as f64;
        let w = if m > u64::from(n) {
            let ratio = m as f64 / f64::from(n);
            let a = libm::fabs(tv - ty) / libm::sqrt(ratio);
            let b = (tv + ty) / ratio;
            a.max(b).max(1.0)
        } else {
            (tv + ty).max(1.0)
        };
        out.push(w);
    }
    out
}

/// The weighted collision statistic and its threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct GStatistic {
    /// `G_{u,i} / f_hat_{u,i}` per pair (outer) and symbol (inner).
    pub per_pair_terms: Vec<Vec<f64>>,
    /// The weights used, same shape.
    pub f_hat: Vec<Vec<f64>>,
    /// Sum of all terms, pairs in order then symbols in order.
    pub total: f64,
    /// The decision threshold `tau`.
    pub threshold: f64,
}

/// Decision threshold `c * min(m^{3/2} eps2 / sqrt(n), U m^2 eps2^2 / n)`.
pub fn threshold(config: &IIDTestConfig) -> f64 {
    let m = config.m as f64;
    let n = f64::from(config.n);
    let u = f64::from(config.u);
    let a = m * libm::sqrt(m) * config.eps2 / libm::sqrt(n);
    let b = u * m * m * config.eps2 * config.eps2 / n;
    config.c * a.min(b)
}

/// Assembles the statistic from per-pair counts and weights.
///
/// Terms accumulate pair by pair, symbols in label order, so the total is
/// reproducible bit for bit.
///
/// # Panics
///
/// If `counts` and `weights` do not both hold `config.u` entries of width
/// `config.n`.
pub fn g_statistic(
    counts: &[SampleCounts],
    weights: &[Vec<f64>],
    config: &IIDTestConfig,
) -> GStatistic {
    assert_eq!(counts.len(), config.u as usize, "one SampleCounts per pair");
    assert_eq!(weights.len(), config.u as usize, "one weight row per pair");
    let n = config.n as usize;
    let mut per_pair_terms = Vec::with_capacity(counts.len());
    let mut total = 0.0;
    for (sc, w) in counts.iter().zip(weights) {
        assert_eq!(w.len(), n, "weight row width must be n");
        let mut terms = Vec::with_capacity(n);
        for i in 0..n {
            let v = sc.p.primary[i] as f64;
            let y = sc.q.primary[i] as f64;
            let d = v - y;
            let g = d * d - v - y;
            let term = g / w[i];
            total += term;
            terms.push(term);
        }
        per_pair_terms.push(terms);
    }
    GStatistic {
        per_pair_terms,
        f_hat: weights.to_vec(),
        total,
        threshold: threshold(config),
    }
}

/// Outcome of one tester invocation with its full diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct IidVerdict {
    /// YES iff `G < tau`; `G = tau` decides NO.
    pub decision: Decision,
    /// The statistic, weights, and threshold.
    pub statistic: GStatistic,
    /// Per-pair counts in input order.
    pub counts: Vec<SampleCounts>,
    /// Some Poisson draw was truncated by the available samples.
    pub truncated: bool,
}

/// Runs the tolerant closeness test on `U` aligned sample pairs.
///
/// `p[u]` and `q[u]` are the two sides of pair `u`. Counting order, Poisson
/// draws, and the verdict are pure functions of the inputs and `seed`.
///
/// # Panics
///
/// If `p` and `q` do not both hold `config.u` entries.
pub fn iid_tester(
    p: &[HalvedSamples],
    q: &[HalvedSamples],
    config: &IIDTestConfig,
    seed: Seed,
) -> Result<IidVerdict, IidError> {
    config.validate()?;
    assert_eq!(p.len(), config.u as usize, "one P sample set per pair");
    assert_eq!(q.len(), config.u as usize, "one Q sample set per pair");
    let mut counts = Vec::with_capacity(p.len());
    let mut truncated = false;
    for (u, (sp, sq)) in p.iter().zip(q).enumerate() {
        let pair_seed = seed.child("pair").index(u as u64);
        let mut rng_p = pair_seed.child("P").rng();
        let mut rng_q = pair_seed.child("Q").rng();
        let cp = build_counts(&sp.half1, &sp.half2, config.n, config.m, config.poissonize, &mut rng_p)
            .map_err(|source| IidError::Samples {
                pair: u,
                world: "P",
                source,
            })?;
        let cq = build_counts(&sq.half1, &sq.half2, config.n, config.m, config.poissonize, &mut rng_q)
            .map_err(|source| IidError::Samples {
                pair: u,
                world: "Q",
                source,
            })?;
        truncated |= cp.truncated || cq.truncated;
        counts.push(SampleCounts {
            nominal_m: config.m,
            p: cp,
            q: cq,
        });
    }
    let weights: Vec<Vec<f64>> = counts.iter().map(|sc| f_hat(sc, config)).collect();
    let statistic = g_statistic(&counts, &weights, config);
    let decision = if statistic.total < statistic.threshold {
        Decision::Yes
    } else {
        Decision::No
    };
    Ok(IidVerdict {
        decision,
        statistic,
        counts,
        truncated,
    })
}

/// Per-half sample size sufficient for the `(eps1, eps2, delta)` guarantee:
///
/// ```text
/// ceil(C * (sqrt(n / (eps2^4 delta U)) + n eps1^2 / eps2^4
///           + n eps1 / eps2^2 + n^{2/3} / (U eps2^{4/3})))
/// ```
///
/// Fails when `eps1 > regime_constant * eps2`, the regime the calibrated
/// constants certify.
///
/// # Panics
///
/// If `n == 0`, `u == 0`, `eps1 < 0`, `eps2` is not in `(0, 1]`, or `delta`
/// is not in `(0, 1)`.
pub fn required_m(
    n: u32,
    u: u32,
    eps1: f64,
    eps2: f64,
    delta: f64,
    constants: &CalibrationConstants,
) -> Result<u64, RegimeViolation> {
    assert!(n >= 1, "need at least one symbol");
    assert!(u >= 1, "need at least one pair");
    assert!(eps1 >= 0.0, "eps1 must be nonnegative");
    assert!(eps2 > 0.0 && eps2 <= 1.0, "eps2 must be in (0, 1]");
    assert!(delta > 0.0 && delta < 1.0, "delta must be in (0, 1)");
    let limit = constants.regime_constant * eps2;
    if eps1 > limit {
        return Err(RegimeViolation {
            eps1,
            eps2,
            regime_constant: constants.regime_constant,
            limit,
        });
    }
    let nf = f64::from(n);
    let uf = f64::from(u);
    let e2sq = eps2 * eps2;
    let e2q = e2sq * e2sq;
    let t1 = libm::sqrt(nf / (e2q * delta * uf));
    let t2 = nf * eps1 * eps1 / e2q;
    let t3 = nf * eps1 / e2sq;
    let t4 = libm::cbrt(nf) * libm::cbrt(nf) / (uf * eps2 * libm::cbrt(eps2));
    let m = libm::ceil(constants.big_c * (t1 + t2 + t3 + t4));
    Ok((m as u64).max(1))
}

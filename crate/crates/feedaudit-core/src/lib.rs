//! Core library for regulation testing of algorithmic content filtering.
//!
//! A platform's filtering of each user's feed is modeled as a Markov chain over
//! `n` content states. The regulator watches, for every user, trajectories from
//! the platform's *filtered* chain and from a *reference* chain, and must decide
//! with confidence `1 - delta` between
//!
//! * total variability `(1/U) * sum_u ||P_u - Q_u||_inf <= eps1` (answer YES), and
//! * total variability `>= eps2` (answer NO),
//!
//! where `||.||_inf` is the maximum absolute row sum of the matrix difference.
//!
//! The crate provides the full stack needed to run and validate that test:
//!
//! * [`markov`]: validated transition matrices, trajectory simulation, counting
//!   measures, stationary distributions, and mixing-time estimation;
//! * [`cover`]: joint cover-time stopping rules and Monte Carlo estimates that
//!   size the observation horizon;
//! * [`successors`]: extraction of i.i.d. successor samples from trajectories;
//! * [`iid`]: the weighted chi-square style tolerant closeness tester for sums
//!   of distribution pairs, with Poissonized counting;
//! * [`regulatory`]: the per-state regulation procedure over feed batches;
//! * [`counterfactual`]: the two-block counterfactual composition;
//! * [`oracle`]: exact metrics and Monte Carlo meta-testing used to validate
//!   everything else;
//! * [`scenario`]: synthetic scenario generation with controllable gaps;
//! * [`calibrate`]: empirical calibration of the tester's threshold constant
//!   `c` and sample-size multiplier `C`.
//!
//! # Determinism
//!
//! Every random quantity derives from a single root [`seed::Seed`] through a
//! labeled derivation tree (root, then module, user, trajectory, trial). Two
//! runs with the same root seed produce bit-identical results regardless of
//! scheduling; see [`seed`] for the contract.
//!
//! # `no_std`
//!
//! The crate is `no_std`-compatible (requires `alloc`). The default `std`
//! feature only forwards to the random-number dependencies; no API differs.
//!
//! # Example
//!
//! ```
//! use feedaudit_core::iid::{iid_tester, HalvedSamples, IIDTestConfig};
//! use feedaudit_core::seed::Seed;
//! use feedaudit_core::Decision;
//!
//! // One user pair, samples over a 2-symbol alphabet, identical sources.
//! let p = HalvedSamples { half1: vec![1, 2, 1, 2], half2: vec![2, 1, 2, 1] };
//! let q = HalvedSamples { half1: vec![2, 1, 1, 2], half2: vec![1, 2, 2, 1] };
//! let config = IIDTestConfig {
//!     u: 1,
//!     n: 2,
//!     m: 4,
//!     eps1: 0.0,
//!     eps2: 0.5,
//!     delta: 0.1,
//!     c: 1.0,
//!     poissonize: false,
//! };
//! let verdict = iid_tester(&[p], &[q], &config, Seed::new(7)).unwrap();
//! assert_eq!(verdict.decision, Decision::Yes);
//! ```

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_docs)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod calibrate;
pub mod counterfactual;
pub mod cover;
pub mod error;
pub mod iid;
pub mod markov;
pub mod oracle;
pub mod regulatory;
pub mod scenario;
pub mod seed;
pub mod successors;

/// Binary outcome of a tolerant closeness test.
///
/// `Yes` means the tested sum of distances is accepted as within the lower
/// tolerance; `No` means it is rejected as at or beyond the upper tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    /// Accept: the sum of pair distances is within the lower tolerance.
    Yes,
    /// Reject: the sum of pair distances is at or beyond the upper tolerance.
    No,
}

impl core::fmt::Display for Decision {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Decision::Yes => f.write_str("YES"),
            Decision::No => f.write_str("NO"),
        }
    }
}

/// Where a scenario's summed pair distance sits relative to the tolerances.
///
/// For `U` pairs with lower tolerance `eps1` and upper tolerance `eps2`:
/// at most `U * eps1` is `Null`, at least `U * eps2` is `Alternative`, and
/// anything strictly between carries no testing guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Summed distance at most `U * eps1`; the tester should say YES.
    Null,
    /// Summed distance at least `U * eps2`; the tester should say NO.
    Alternative,
    /// Summed distance strictly between the tolerances; no guarantee.
    Between,
}

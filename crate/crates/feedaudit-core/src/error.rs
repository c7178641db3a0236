//! Typed errors shared across the crate.
//!
//! Runtime conditions that a caller can hit with well-formed code get typed
//! errors here. Contract violations (out-of-range state labels, zero lengths,
//! mismatched slice lengths passed to low-level helpers) are documented panics
//! at their call sites instead.

use alloc::string::String;
use thiserror::Error;

/// Rejection reasons for a candidate transition matrix.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    /// The matrix has no rows.
    #[error("transition matrix has no rows")]
    Empty,
    /// A row's length differs from the number of rows.
    #[error("row {row} has {len} entries, expected {n}")]
    NotSquare {
        /// 1-based row index.
        row: u32,
        /// Observed row length.
        len: usize,
        /// Expected length (the number of rows).
        n: usize,
    },
    /// An entry is NaN or infinite.
    #[error("entry ({row},{col}) is not finite")]
    NonFinite {
        /// 1-based row index.
        row: u32,
        /// 1-based column index.
        col: u32,
    },
    /// An entry is negative.
    #[error("entry ({row},{col}) = {value} is negative")]
    NegativeEntry {
        /// 1-based row index.
        row: u32,
        /// 1-based column index.
        col: u32,
        /// The offending value.
        value: f64,
    },
    /// A row sum is further than `1e-9` from 1.
    #[error("row {row} sums to {sum}, not within 1e-9 of 1")]
    NotStochastic {
        /// 1-based row index.
        row: u32,
        /// The row sum.
        sum: f64,
    },
    /// The directed graph of positive entries is not strongly connected.
    #[error("positive-entry graph is not strongly connected")]
    NotIrreducible,
}

/// Power iteration failed to reach the requested residual within its budget.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("power iteration did not reach residual {tol} within {max_iters} iterations")]
pub struct NoConvergence {
    /// Iteration budget that was exhausted.
    pub max_iters: u64,
    /// Residual that was requested.
    pub tol: f64,
}

/// The mixing-time search hit its step cap without the chain mixing.
///
/// Periodic chains never mix in total variation and always land here.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("total-variation distance did not drop to 1/4 within {cap} steps")]
pub struct CapExceeded {
    /// Step cap that was exhausted.
    pub cap: u32,
}

/// Failures of the joint cover stopping rule and its Monte Carlo wrapper.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoverError {
    /// The cover condition was not met within the step budget. `consumed` is
    /// the number of joint steps actually taken, which is below the budget
    /// only when a finite walk ran out of states first.
    #[error("joint cover condition not met within {consumed} steps (budget {budget})")]
    BudgetExceeded {
        /// Joint time steps consumed before giving up.
        consumed: u32,
        /// The configured step budget.
        budget: u32,
    },
    /// A stationary start profile was requested but the stationary
    /// distribution could not be computed.
    #[error("stationary start profile unavailable: {0}")]
    Stationary(#[from] NoConvergence),
}

/// A trajectory set did not contain enough usable visits to a state.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error(
    "state {state} has {available} successor-bearing visits, {required} required"
)]
pub struct InsufficientCoverage {
    /// The state whose visits were counted.
    pub state: u32,
    /// Successor-bearing visits available across the trajectory set.
    pub available: u64,
    /// Visits that were required.
    pub required: u64,
}

/// A fixed-size count build was asked for more samples than were supplied.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("sample half {half} holds {available} symbols, {required} required")]
pub struct InsufficientSamples {
    /// Which half ran short (1 or 2).
    pub half: u8,
    /// Symbols available in that half.
    pub available: usize,
    /// Symbols required.
    pub required: u64,
}

/// The tolerances sit outside the regime the tester is calibrated for.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("eps1 = {eps1} exceeds {regime_constant} * eps2 = {limit}")]
pub struct RegimeViolation {
    /// Lower tolerance that was requested.
    pub eps1: f64,
    /// Upper tolerance that was requested.
    pub eps2: f64,
    /// The calibrated ratio bound.
    pub regime_constant: f64,
    /// `regime_constant * eps2`.
    pub limit: f64,
}

/// A configuration field violates its documented range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("config field `{field}` invalid: {requirement}")]
pub struct ConfigViolation {
    /// Name of the offending field.
    pub field: &'static str,
    /// The range or relation that was violated.
    pub requirement: &'static str,
}

/// Failures of the i.i.d. pair tester.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IidError {
    /// A configuration field is out of range.
    #[error(transparent)]
    Config(#[from] ConfigViolation),
    /// A fixed-size count build ran out of samples.
    #[error("pair {pair}, {world} side: {source}")]
    Samples {
        /// 0-based pair index.
        pair: usize,
        /// Which side ran short (`"P"` or `"Q"`).
        world: &'static str,
        /// The underlying shortage.
        source: InsufficientSamples,
    },
}

/// Failures of the per-state regulation procedure.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegulatoryError {
    /// A configuration field is out of range.
    #[error(transparent)]
    Config(#[from] ConfigViolation),
    /// Batches disagree with the configuration or with each other on
    /// dimensions, user sets, trajectory counts, or horizons.
    #[error("batch mismatch: {0}")]
    ConfigMismatch(String),
    /// The tolerances are outside the calibrated regime.
    #[error(transparent)]
    Regime(#[from] RegimeViolation),
    /// The inner pair tester failed.
    #[error(transparent)]
    Iid(#[from] IidError),
}

/// Failures of horizon sizing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HorizonError {
    /// A configuration field is out of range.
    #[error(transparent)]
    Config(#[from] ConfigViolation),
    /// The tolerances are outside the calibrated regime.
    #[error(transparent)]
    Regime(#[from] RegimeViolation),
    /// Cover-time estimation failed.
    #[error(transparent)]
    Cover(#[from] CoverError),
}

/// Failures of the counterfactual composition.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CounterfactualError {
    /// A pair names a user with no supplied batch or chain.
    #[error("pairing names user {user}, who has no supplied data")]
    PairingMismatch {
        /// The missing user id.
        user: u32,
    },
    /// A pair names the same user twice.
    #[error("pair ({user},{user}) pairs a user with itself")]
    SelfPair {
        /// The repeated user id.
        user: u32,
    },
    /// The same ordered pair appears twice.
    #[error("pair ({i},{j}) is listed twice")]
    DuplicatePair {
        /// First user of the repeated pair.
        i: u32,
        /// Second user of the repeated pair.
        j: u32,
    },
    /// The pairing is empty.
    #[error("pairing lists no pairs")]
    EmptyPairing,
    /// A regulation block failed.
    #[error(transparent)]
    Regulatory(#[from] RegulatoryError),
    /// Horizon sizing for the composition failed.
    #[error(transparent)]
    Horizon(#[from] HorizonError),
    /// Paired transition matrices have different shapes.
    #[error(transparent)]
    Dimension(#[from] DimensionMismatch),
}

/// Two matrices passed to a metric have different shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("matrix shapes differ: {rows_a}x{cols_a} vs {rows_b}x{cols_b}")]
pub struct DimensionMismatch {
    /// Rows of the first operand.
    pub rows_a: usize,
    /// Columns of the first operand (first differing row if ragged).
    pub cols_a: usize,
    /// Rows of the second operand.
    pub rows_b: usize,
    /// Columns of the second operand.
    pub cols_b: usize,
}

/// A requested row gap exceeds what the mass-moving rule can realize.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("user {user}: requested gap {requested} exceeds maximum feasible {max_feasible}")]
pub struct InfeasibleGap {
    /// 1-based user index within the scenario.
    pub user: u32,
    /// The gap that was requested.
    pub requested: f64,
    /// The largest gap the designated row can realize.
    pub max_feasible: f64,
}

/// Failures of scenario construction and feed generation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    /// A configuration field is out of range.
    #[error(transparent)]
    Config(#[from] ConfigViolation),
    /// A supplied or constructed matrix is not a valid chain.
    #[error(transparent)]
    Chain(#[from] ChainError),
    /// A requested gap cannot be realized.
    #[error(transparent)]
    Gap(#[from] InfeasibleGap),
    /// Stationary starts could not be computed.
    #[error(transparent)]
    Stationary(#[from] NoConvergence),
}

/// Calibration could not produce constants meeting the error targets.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    /// The grid is empty or one-sided.
    #[error("calibration grid must contain at least one null and one alternative point")]
    EmptyGrid,
    /// A grid point is malformed.
    #[error("grid point {index}: {violation}")]
    BadGridPoint {
        /// 0-based index of the offending point.
        index: usize,
        /// The field violation.
        violation: ConfigViolation,
    },
    /// No multiplier in the ladder produced a workable threshold window.
    #[error(
        "no feasible threshold constant: at multiplier {best_big_c} the window was \
         [{best_c_low}, {best_c_high}] (need high >= {required_ratio} * low)"
    )]
    CalibrationFailed {
        /// Ladder multiplier with the widest relative window.
        best_big_c: f64,
        /// Largest lower bound on `c` over null points at that multiplier.
        best_c_low: f64,
        /// Smallest upper bound on `c` over alternative points at that multiplier.
        best_c_high: f64,
        /// Required ratio between the bounds.
        required_ratio: f64,
    },
    /// A grid point's sample budget could not be computed.
    #[error(transparent)]
    Regime(#[from] RegimeViolation),
}

/// Failures of oracle pipelines that simulate and test whole scenarios.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    /// Matrix shapes disagree.
    #[error(transparent)]
    Dimension(#[from] DimensionMismatch),
    /// A truth table's matrix is not a valid chain.
    #[error(transparent)]
    Chain(#[from] ChainError),
    /// The i.i.d. tester failed.
    #[error(transparent)]
    Iid(#[from] IidError),
    /// The regulation procedure failed.
    #[error(transparent)]
    Regulatory(#[from] RegulatoryError),
    /// The counterfactual composition failed.
    #[error(transparent)]
    Counterfactual(#[from] CounterfactualError),
    /// Scenario simulation failed.
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    /// A pairing references a user without supplied data.
    #[error("pairing names user {user}, who has no supplied data")]
    MissingUser {
        /// The missing user id.
        user: u32,
    },
}

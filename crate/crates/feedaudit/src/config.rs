//! The experiment config file: one JSON document selecting a command and
//! carrying every parameter for it, seed included.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use feedaudit_core::calibrate::{CalibrationConstants, GridPoint};
use feedaudit_core::iid::IIDTestConfig;
use feedaudit_core::regulatory::RegulatoryConfig;
use feedaudit_core::scenario::ScenarioSpec;
use feedaudit_core::Regime;
use serde::{Deserialize, Serialize};

use crate::formats::{load_json, CalibrationJson};
use crate::hash::InputHashes;

/// A parsed config file. The `command` field picks the variant; every
/// variant carries a mandatory root `seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    /// Build a scenario and write feeds plus ground truth.
    Simulate(SimulateConfig),
    /// Run the pair tester on a samples file.
    TestIid(TestIidConfig),
    /// Run the trajectory procedure on feed files.
    TestRegulatory(TestRegulatoryConfig),
    /// Run the two-block composition on feed files.
    TestCounterfactual(TestCounterfactualConfig),
    /// Fit `(c, C)` on a grid and write the artifact.
    Calibrate(CalibrateConfig),
    /// Estimate joint cover times of one chain.
    CoverTime(CoverTimeConfig),
    /// Evaluate verdict probabilities across a grid, emitting CSV.
    Sweep(SweepConfig),
}

impl ExperimentConfig {
    /// The command tag, as written in config files.
    pub fn command(&self) -> &'static str {
        match self {
            ExperimentConfig::Simulate(_) => "simulate",
            ExperimentConfig::TestIid(_) => "test-iid",
            ExperimentConfig::TestRegulatory(_) => "test-regulatory",
            ExperimentConfig::TestCounterfactual(_) => "test-counterfactual",
            ExperimentConfig::Calibrate(_) => "calibrate",
            ExperimentConfig::CoverTime(_) => "cover-time",
            ExperimentConfig::Sweep(_) => "sweep",
        }
    }

    /// The root seed declared in the file.
    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::Simulate(c) => c.seed,
            ExperimentConfig::TestIid(c) => c.seed,
            ExperimentConfig::TestRegulatory(c) => c.seed,
            ExperimentConfig::TestCounterfactual(c) => c.seed,
            ExperimentConfig::Calibrate(c) => c.seed,
            ExperimentConfig::CoverTime(c) => c.seed,
            ExperimentConfig::Sweep(c) => c.seed,
        }
    }

    /// Replaces the root seed (the `--seed-override` flag).
    pub fn override_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::Simulate(c) => c.seed = seed,
            ExperimentConfig::TestIid(c) => c.seed = seed,
            ExperimentConfig::TestRegulatory(c) => c.seed = seed,
            ExperimentConfig::TestCounterfactual(c) => c.seed = seed,
            ExperimentConfig::Calibrate(c) => c.seed = seed,
            ExperimentConfig::CoverTime(c) => c.seed = seed,
            ExperimentConfig::Sweep(c) => c.seed = seed,
        }
    }
}

/// Parses and hashes a config file.
pub fn load_config(path: &Path, hashes: &mut InputHashes) -> Result<ExperimentConfig> {
    load_json(path, hashes)
}

/// Threshold and budget constants as they appear inline in configs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConstantsJson {
    /// Threshold constant.
    pub c: f64,
    /// Sample-budget multiplier.
    #[serde(rename = "C")]
    pub big_c: f64,
    /// Largest certified `eps1 / eps2` ratio.
    #[serde(default = "default_regime_constant")]
    pub regime_constant: f64,
}

fn default_regime_constant() -> f64 {
    CalibrationConstants::shipped().regime_constant
}

impl From<ConstantsJson> for CalibrationConstants {
    fn from(j: ConstantsJson) -> Self {
        CalibrationConstants {
            c: j.c,
            big_c: j.big_c,
            regime_constant: j.regime_constant,
        }
    }
}

/// Resolves constants from an inline block or a calibration artifact.
/// Exactly one source may be given; with neither, the shipped constants
/// apply. Artifact files carry no regime constant, so the shipped one is
/// kept there.
pub fn resolve_constants(
    inline: Option<ConstantsJson>,
    calibration_file: Option<&Path>,
    hashes: &mut InputHashes,
) -> Result<CalibrationConstants> {
    match (inline, calibration_file) {
        (Some(_), Some(_)) => {
            bail!("constants and calibration_file are mutually exclusive; give one")
        }
        (Some(c), None) => Ok(c.into()),
        (None, Some(path)) => {
            let artifact: CalibrationJson = load_json(path, hashes)?;
            Ok(CalibrationConstants {
                c: artifact.c,
                big_c: artifact.big_c,
                regime_constant: CalibrationConstants::shipped().regime_constant,
            })
        }
        (None, None) => Ok(CalibrationConstants::shipped()),
    }
}

fn default_true() -> bool {
    true
}

fn default_cover_trials() -> u32 {
    200
}

fn default_cover_budget() -> u32 {
    1_000_000
}

fn default_row() -> u32 {
    1
}

/// Pair-tester parameters. `poissonize` defaults on here; the trajectory
/// procedure turns it off because the gate already fixes the sample count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IidJson {
    /// Number of pairs.
    pub u: u32,
    /// Alphabet size.
    pub n: u32,
    /// Nominal per-half sample size.
    pub m: u64,
    /// Lower tolerance.
    pub eps1: f64,
    /// Upper tolerance.
    pub eps2: f64,
    /// Risk.
    pub delta: f64,
    /// Draw per-half sizes as Poisson(m).
    #[serde(default = "default_true")]
    pub poissonize: bool,
    /// Inline constants (exclusive with `calibration_file`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsJson>,
    /// Calibration artifact to take constants from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_file: Option<PathBuf>,
}

impl IidJson {
    /// Builds the tester config, resolving constants.
    pub fn to_config(&self, hashes: &mut InputHashes) -> Result<IIDTestConfig> {
        let constants =
            resolve_constants(self.constants, self.calibration_file.as_deref(), hashes)?;
        Ok(IIDTestConfig {
            u: self.u,
            n: self.n,
            m: self.m,
            eps1: self.eps1,
            eps2: self.eps2,
            delta: self.delta,
            c: constants.c,
            poissonize: self.poissonize,
        })
    }
}

/// Trajectory-procedure parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegulatoryJson {
    /// State space size.
    pub n: u32,
    /// Number of users.
    pub u: u32,
    /// Trajectories per user per world.
    pub m_trajectories: u32,
    /// Length of every trajectory.
    pub horizon: u32,
    /// Lower tolerance.
    pub eps1: f64,
    /// Upper tolerance.
    pub eps2: f64,
    /// Overall risk.
    pub delta: f64,
    /// Per-state successor budget override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_bar: Option<u64>,
    /// Poissonize the inner tester.
    #[serde(default)]
    pub poissonize: bool,
    /// Inline constants (exclusive with `calibration_file`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsJson>,
    /// Calibration artifact to take constants from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_file: Option<PathBuf>,
    /// Trials per start profile for cover-time estimation.
    #[serde(default = "default_cover_trials")]
    pub cover_trials: u32,
    /// Step budget per cover-time trial.
    #[serde(default = "default_cover_budget")]
    pub cover_budget: u32,
}

impl RegulatoryJson {
    /// Builds the procedure config, resolving constants.
    pub fn to_config(&self, hashes: &mut InputHashes) -> Result<RegulatoryConfig> {
        let constants =
            resolve_constants(self.constants, self.calibration_file.as_deref(), hashes)?;
        Ok(RegulatoryConfig {
            n: self.n,
            u: self.u,
            m_trajectories: self.m_trajectories,
            horizon: self.horizon,
            eps1: self.eps1,
            eps2: self.eps2,
            delta: self.delta,
            m_bar: self.m_bar,
            poissonize: self.poissonize,
            constants,
            cover_trials: self.cover_trials,
            cover_budget: self.cover_budget,
        })
    }
}

/// Two-block composition parameters. The embedded block config's `u` and
/// `delta` are overridden per block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterfactualJson {
    /// Shared block parameters.
    pub regulatory: RegulatoryJson,
    /// Risk of the first block.
    pub delta_b1: f64,
    /// Risk of the second block.
    pub delta_b2: f64,
}

/// Scenario parameters, mirroring the generator's spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpecJson {
    /// State space size.
    pub n: u32,
    /// Honest user count.
    pub users: u32,
    /// Per-user target gaps.
    pub gap: Vec<f64>,
    /// Self-loop mass in the default reference.
    #[serde(default)]
    pub mixing_hint: f64,
    /// Re-filtering intervals.
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    /// Adversarial users appended at maximal gap.
    #[serde(default)]
    pub adversarial: u32,
    /// Lower tolerance for regime labels.
    pub eps1: f64,
    /// Upper tolerance for regime labels.
    pub eps2: f64,
    /// Explicit reference rows; omitted builds the blended default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<Vec<f64>>>,
}

fn default_epochs() -> u32 {
    1
}

impl ScenarioSpecJson {
    /// Converts to the core spec.
    pub fn to_spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            n: self.n,
            users: self.users,
            gap: self.gap.clone(),
            mixing_hint: self.mixing_hint,
            epochs: self.epochs,
            adversarial: self.adversarial,
            eps1: self.eps1,
            eps2: self.eps2,
            reference: self.reference.clone(),
        }
    }
}

/// `simulate`: build a scenario, write feeds and truth per epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateConfig {
    /// Root seed.
    pub seed: u64,
    /// What to generate.
    pub spec: ScenarioSpecJson,
    /// Trajectories per user per world.
    pub m_trajectories: u32,
    /// Length of every trajectory.
    pub horizon: u32,
    /// Output directory; one subdirectory per epoch.
    pub out_dir: PathBuf,
}

/// `test-iid`: run the pair tester on a JSONL samples file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestIidConfig {
    /// Root seed.
    pub seed: u64,
    /// JSONL file of sample records.
    pub samples: PathBuf,
    /// Tester parameters.
    pub test: IidJson,
}

/// `test-regulatory`: run the trajectory procedure on two JSONL feed files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestRegulatoryConfig {
    /// Root seed.
    pub seed: u64,
    /// JSONL file of filtered-world trajectories (world tag `F`).
    pub filtered: PathBuf,
    /// JSONL file of reference-world trajectories (world tag `R`).
    pub reference: PathBuf,
    /// Procedure parameters.
    pub test: RegulatoryJson,
}

/// `test-counterfactual`: run the two-block composition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestCounterfactualConfig {
    /// Root seed.
    pub seed: u64,
    /// JSONL file of filtered-world trajectories.
    pub filtered: PathBuf,
    /// JSONL file of reference-world trajectories.
    pub reference: PathBuf,
    /// Pairing file (`{"pairs": [[i, j], ...]}`).
    pub pairing: PathBuf,
    /// Composition parameters.
    pub test: CounterfactualJson,
}

/// Which grid a calibration runs on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridChoice {
    /// Inline grid points.
    Inline(Vec<GridPointJson>),
    /// A named built-in grid; only `"shipped"` exists.
    Named(String),
}

/// One calibration instance in a config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPointJson {
    /// Alphabet size.
    pub n: u32,
    /// Number of pairs.
    pub u: u32,
    /// Lower tolerance.
    pub eps1: f64,
    /// Upper tolerance.
    pub eps2: f64,
    /// Point-specific risk; omitted uses the run's target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// The `(P_u, Q_u)` distributions.
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    /// `"null"` or `"alternative"`.
    pub regime: String,
    /// Halve the sample budget, as the trajectory tester does.
    #[serde(default)]
    pub half_budget: bool,
    /// Poissonize this point.
    #[serde(default)]
    pub poissonize: bool,
}

impl GridPointJson {
    /// Converts to a core grid point.
    pub fn to_point(&self) -> Result<GridPoint> {
        let regime = match self.regime.as_str() {
            "null" => Regime::Null,
            "alternative" => Regime::Alternative,
            other => bail!("regime must be \"null\" or \"alternative\", got {other:?}"),
        };
        Ok(GridPoint {
            n: self.n,
            u: self.u,
            eps1: self.eps1,
            eps2: self.eps2,
            delta: self.delta,
            pairs: self.pairs.clone(),
            regime,
            half_budget: self.half_budget,
            poissonize: self.poissonize,
        })
    }
}

/// `calibrate`: fit constants on a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrateConfig {
    /// Root seed.
    pub seed: u64,
    /// Trials per grid point.
    pub trials: u32,
    /// Target risk for points without their own.
    pub target_delta: f64,
    /// The grid: `"shipped"` or inline points.
    pub grid: GridChoice,
    /// Where to write the calibration artifact; omitted skips the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_out: Option<PathBuf>,
}

/// A transition matrix given inline or by file path.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainSource {
    /// Inline rows.
    Rows(Vec<Vec<f64>>),
    /// Path to a chain file (`{"n": int, "rows": [[...]]}`).
    File(PathBuf),
}

/// `cover-time`: estimate joint cover times; optionally also report the
/// horizon a procedure with the given `u` and `delta` would demand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverTimeConfig {
    /// Root seed.
    pub seed: u64,
    /// The chain to walk.
    pub chain: ChainSource,
    /// Parallel walks per trial.
    pub m: u32,
    /// Required pooled visits per state.
    pub k: u64,
    /// Trials per start profile.
    pub trials: u32,
    /// Step budget per trial.
    #[serde(default = "default_cover_budget")]
    pub budget: u32,
    /// User count for the optional horizon line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<u32>,
    /// Risk for the optional horizon line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

/// Which tester a sweep point drives.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TesterJson {
    /// Pair tester on one designated row.
    Iid {
        /// Tester parameters.
        config: IidJson,
        /// The 1-based row sampled from both chains.
        #[serde(default = "default_row")]
        row: u32,
    },
    /// Trajectory procedure on fresh batches.
    Regulatory {
        /// Procedure parameters.
        config: RegulatoryJson,
    },
    /// Two-block composition on fresh batches.
    Counterfactual {
        /// Composition parameters.
        config: CounterfactualJson,
        /// Which users are paired.
        pairing: crate::formats::PairingJson,
    },
}

impl TesterJson {
    /// The value of the CSV `tester` column.
    pub fn kind_name(&self) -> &'static str {
        match self {
            TesterJson::Iid { .. } => "iid",
            TesterJson::Regulatory { .. } => "regulatory",
            TesterJson::Counterfactual { .. } => "counterfactual",
        }
    }
}

/// One sweep point: a ground truth and the tester to aim at it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPointJson {
    /// Label written to the CSV.
    pub scenario_id: String,
    /// Ground-truth chains and tolerances.
    pub truth: crate::formats::TruthJson,
    /// The tester under test.
    pub tester: TesterJson,
}

/// `sweep`: estimate YES probabilities across points, writing CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Root seed.
    pub seed: u64,
    /// Trials per point.
    pub trials: u32,
    /// CSV output path (created or truncated).
    pub csv_out: PathBuf,
    /// The grid.
    pub points: Vec<SweepPointJson>,
}

//! On-disk formats: chain JSON, trajectory and sample JSONL, pairing,
//! truth, and calibration files, plus conversions into the core types.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use feedaudit_core::iid::HalvedSamples;
use feedaudit_core::markov::Trajectory;
use feedaudit_core::oracle::ScenarioTruth;
use feedaudit_core::regulatory::{FeedBatch, World};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::hash::InputHashes;

/// A transition matrix file: `{"n": int, "rows": [[...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainJson {
    /// State count.
    pub n: u32,
    /// Row-stochastic matrix, `n` rows of `n` entries.
    pub rows: Vec<Vec<f64>>,
}

/// One trajectory record in a JSONL feed file. States are 1-based;
/// `traj_index` runs `0..M` within one `(user, world)` batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    /// Owning user.
    pub user: u32,
    /// `"F"` for filtered, `"R"` for reference.
    pub world: String,
    /// Position of this trajectory within its batch.
    pub traj_index: u32,
    /// Visited states, 1-based.
    pub states: Vec<u32>,
}

/// One sample-set record in a JSONL file for the standalone pair tester.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    /// 1-based pair index.
    pub u: u32,
    /// `"P"` or `"Q"`.
    pub world: String,
    /// Which half the symbols belong to, 1 or 2.
    pub half: u8,
    /// Observed symbols, 1-based.
    pub symbols: Vec<u32>,
}

/// A pairing file: `{"pairs": [[i, j], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairingJson {
    /// Ordered user pairs.
    pub pairs: Vec<(u32, u32)>,
}

/// One user's true chains in a truth file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthUserJson {
    /// Reference rows.
    #[serde(rename = "P_R")]
    pub p_r: Vec<Vec<f64>>,
    /// Filtered rows.
    #[serde(rename = "Q_F")]
    pub q_f: Vec<Vec<f64>>,
}

/// Ground-truth file: users in order (ids assigned `1..`), plus tolerances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthJson {
    /// Per-user chain pairs.
    pub users: Vec<TruthUserJson>,
    /// Lower tolerance.
    pub eps1: f64,
    /// Upper tolerance.
    pub eps2: f64,
}

impl TruthJson {
    /// Converts to the oracle's truth table, assigning ids `1..`.
    pub fn to_truth(&self) -> Result<ScenarioTruth> {
        let users = self
            .users
            .iter()
            .enumerate()
            .map(|(i, u)| (i as u32 + 1, u.p_r.clone(), u.q_f.clone()))
            .collect();
        ScenarioTruth::new(users, self.eps1, self.eps2)
            .context("truth file matrices disagree in shape")
    }
}

/// A calibration artifact: `{"c": f, "C": f, "grid_hash": s, "achieved_error": f}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationJson {
    /// Threshold constant.
    pub c: f64,
    /// Sample-budget multiplier.
    #[serde(rename = "C")]
    pub big_c: f64,
    /// Hash of the grid the constants were fit on.
    pub grid_hash: String,
    /// Worst empirical error rate observed at the chosen constants.
    pub achieved_error: f64,
}

/// Parses a JSON file, recording its hash.
pub fn load_json<T: DeserializeOwned>(path: &Path, hashes: &mut InputHashes) -> Result<T> {
    let bytes = hashes.read(path)?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// Parses a JSONL file (one record per non-empty line), recording its hash.
pub fn load_jsonl<T: DeserializeOwned>(path: &Path, hashes: &mut InputHashes) -> Result<Vec<T>> {
    let bytes = hashes.read(path)?;
    let text = std::str::from_utf8(&bytes)
        .with_context(|| format!("{} is not UTF-8", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(idx, line)| {
            serde_json::from_str(line)
                .with_context(|| format!("{} line {}", path.display(), idx + 1))
        })
        .collect()
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// Writes pretty JSON to a file, creating parent directories.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, to_json_string(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

/// Writes records as JSONL, one compact line each, creating parent
/// directories.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut text = String::new();
    for record in records {
        text.push_str(&serde_json::to_string(record)?);
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Flattens a batch into JSONL records.
pub fn batch_to_records(batch: &FeedBatch) -> Vec<TrajectoryRecord> {
    let world = match batch.world {
        World::Filtered => "F",
        World::Reference => "R",
    };
    batch
        .trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| TrajectoryRecord {
            user: batch.user,
            world: world.to_string(),
            traj_index: i as u32,
            states: t.states.clone(),
        })
        .collect()
}

/// Groups trajectory records into one batch per user for the given world
/// tag. Within a batch, `traj_index` must cover `0..M` exactly.
pub fn records_to_batches(
    records: &[TrajectoryRecord],
    world_tag: &str,
    n: u32,
) -> Result<Vec<FeedBatch>> {
    let world = match world_tag {
        "F" => World::Filtered,
        "R" => World::Reference,
        other => bail!("unknown world tag {other:?}, expected \"F\" or \"R\""),
    };
    let mut by_user: BTreeMap<u32, Vec<&TrajectoryRecord>> = BTreeMap::new();
    for record in records {
        if record.world == world_tag {
            by_user.entry(record.user).or_default().push(record);
        } else if record.world != "F" && record.world != "R" {
            bail!(
                "user {} has world tag {:?}, expected \"F\" or \"R\"",
                record.user,
                record.world
            );
        }
    }
    by_user
        .into_iter()
        .map(|(user, mut records)| {
            records.sort_by_key(|r| r.traj_index);
            for (expect, record) in records.iter().enumerate() {
                if record.traj_index as usize != expect {
                    bail!(
                        "user {user} ({world_tag}): trajectory indexes must cover 0..{} \
                         exactly, found {}",
                        records.len(),
                        record.traj_index
                    );
                }
            }
            Ok(FeedBatch {
                user,
                world,
                n,
                trajectories: records
                    .into_iter()
                    .map(|r| Trajectory {
                        states: r.states.clone(),
                    })
                    .collect(),
            })
        })
        .collect()
}

/// Groups sample records into per-pair halves for both sides. Pairs are
/// ordered by their `u` field; every pair needs all four records
/// (`P`/`Q` times halves 1/2), and duplicates are rejected.
pub fn records_to_sample_sets(
    records: &[SampleRecord],
) -> Result<(Vec<HalvedSamples>, Vec<HalvedSamples>)> {
    type Slot = (Option<Vec<u32>>, Option<Vec<u32>>);
    let mut by_pair: BTreeMap<u32, (Slot, Slot)> = BTreeMap::new();
    for record in records {
        let entry = by_pair.entry(record.u).or_default();
        let side = match record.world.as_str() {
            "P" => &mut entry.0,
            "Q" => &mut entry.1,
            other => bail!(
                "pair {} has world tag {other:?}, expected \"P\" or \"Q\"",
                record.u
            ),
        };
        let slot = match record.half {
            1 => &mut side.0,
            2 => &mut side.1,
            other => bail!("pair {} has half {other}, expected 1 or 2", record.u),
        };
        if slot.replace(record.symbols.clone()).is_some() {
            bail!(
                "pair {} world {} half {} appears twice",
                record.u,
                record.world,
                record.half
            );
        }
    }
    let mut p_sets = Vec::with_capacity(by_pair.len());
    let mut q_sets = Vec::with_capacity(by_pair.len());
    for (u, (p, q)) in by_pair {
        let take = |side: Slot, world: &str| -> Result<HalvedSamples> {
            match side {
                (Some(half1), Some(half2)) => Ok(HalvedSamples { half1, half2 }),
                (h1, _) => bail!(
                    "pair {u} world {world} is missing half {}",
                    if h1.is_none() { 1 } else { 2 }
                ),
            }
        };
        p_sets.push(take(p, "P")?);
        q_sets.push(take(q, "Q")?);
    }
    if p_sets.is_empty() {
        bail!("sample file holds no records");
    }
    Ok((p_sets, q_sets))
}

//! The counterfactual composition: would user `j`'s filtered feed have
//! looked like user `i`'s, had the platform treated them the same?
//!
//! For every listed pair `(i, j)`, two regulation blocks run against the
//! same reference batches, those of the first member `i`: block 1 checks
//! `i`'s filtered feed, block 2 checks `j`'s filtered feed. The composition
//! answers YES iff both blocks answer YES, so a YES certifies that both
//! filtered chains sit close to the shared reference, and by the triangle
//! inequality close to each other.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use crate::cover::estimate_cover_time;
use crate::error::{ConfigViolation, CounterfactualError, RegulatoryError};
use crate::iid::required_m;
use crate::markov::MarkovChain;
use crate::oracle::linf_matrix_distance;
use crate::regulatory::{
    horizon_multiplier, regulatory_tester_paired, FeedBatch, RegulatoryConfig, RegulatoryVerdict,
};
use crate::seed::Seed;
use crate::Decision;

/// A validated list of ordered user pairs `(i, j)`.
///
/// `i` is the pair's reference-bearing member. A user may appear in any
/// number of pairs and in either position; only self-pairs and repeated
/// ordered pairs are rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterfactualPairing {
    pairs: Vec<(u32, u32)>,
}

impl CounterfactualPairing {
    /// Validates and wraps a pair list.
    pub fn new(pairs: Vec<(u32, u32)>) -> Result<Self, CounterfactualError> {
        if pairs.is_empty() {
            return Err(CounterfactualError::EmptyPairing);
        }
        let mut seen = BTreeSet::new();
        for &(i, j) in &pairs {
            if i == j {
                return Err(CounterfactualError::SelfPair { user: i });
            }
            if !seen.insert((i, j)) {
                return Err(CounterfactualError::DuplicatePair { i, j });
            }
        }
        Ok(CounterfactualPairing { pairs })
    }

    /// The pairs, in their given order.
    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    /// Number of pairs; this is the `U` every block runs at.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// Always false; an empty pairing cannot be constructed.
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Every user whose filtered batch is consumed, ascending and deduplicated.
    pub fn filtered_users(&self) -> Vec<u32> {
        let mut users: Vec<u32> = self.pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
        users.sort_unstable();
        users.dedup();
        users
    }

    /// Every user whose reference batch is consumed (first members only),
    /// ascending and deduplicated.
    pub fn reference_users(&self) -> Vec<u32> {
        let mut users: Vec<u32> = self.pairs.iter().map(|&(i, _)| i).collect();
        users.sort_unstable();
        users.dedup();
        users
    }
}

/// Configuration of the counterfactual composition.
///
/// The embedded regulatory configuration supplies dimensions, tolerances,
/// and constants; its `u` and `delta` fields are ignored and overwritten
/// per block with the pair count and the block's risk.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualConfig {
    /// Block-level settings; `u` and `delta` are overridden.
    pub regulatory: RegulatoryConfig,
    /// Risk spent on block 1 (first members vs their own references).
    pub delta_b1: f64,
    /// Risk spent on block 2 (second members vs the shared references).
    pub delta_b2: f64,
}

impl CounterfactualConfig {
    /// Checks the block risks and the embedded fields.
    pub fn validate(&self) -> Result<(), ConfigViolation> {
        if !(self.delta_b1 > 0.0 && self.delta_b1 < 1.0) {
            return Err(ConfigViolation {
                field: "delta_b1",
                requirement: "in (0, 1)",
            });
        }
        if !(self.delta_b2 > 0.0 && self.delta_b2 < 1.0) {
            return Err(ConfigViolation {
                field: "delta_b2",
                requirement: "in (0, 1)",
            });
        }
        self.block_config(1, self.delta_b1).validate()
    }

    fn block_config(&self, pairs: usize, delta: f64) -> RegulatoryConfig {
        RegulatoryConfig {
            u: pairs as u32,
            delta,
            ..self.regulatory.clone()
        }
    }
}

/// YES iff both blocks decided YES.
pub fn combine_block_verdicts(block1: Decision, block2: Decision) -> Decision {
    if block1 == Decision::Yes && block2 == Decision::Yes {
        Decision::Yes
    } else {
        Decision::No
    }
}

/// The composition's decision with both block verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualVerdict {
    /// [`combine_block_verdicts`] of the blocks.
    pub decision: Decision,
    /// First members vs their own references.
    pub block1: RegulatoryVerdict,
    /// Second members vs the shared references.
    pub block2: RegulatoryVerdict,
    /// Users whose reference batches were consumed, ascending.
    pub reference_users: Vec<u32>,
}

fn index_batches<'a>(
    batches: &'a [FeedBatch],
    slot: &str,
) -> Result<BTreeMap<u32, &'a FeedBatch>, CounterfactualError> {
    let mut map = BTreeMap::new();
    for batch in batches {
        if map.insert(batch.user, batch).is_some() {
            return Err(RegulatoryError::ConfigMismatch(format!(
                "user {} appears twice in the {slot} batches",
                batch.user
            ))
            .into());
        }
    }
    Ok(map)
}

/// Runs both regulation blocks over the paired users and combines them.
///
/// `filtered` must hold a batch for every user named anywhere in the
/// pairing; `reference` must hold one for every first member. Extra batches
/// are ignored. Both blocks always run, so the verdict reports full
/// evidence even when block 1 already failed.
pub fn counterfactual_tester(
    pairing: &CounterfactualPairing,
    filtered: &[FeedBatch],
    reference: &[FeedBatch],
    config: &CounterfactualConfig,
    seed: Seed,
) -> Result<CounterfactualVerdict, CounterfactualError> {
    config.validate().map_err(RegulatoryError::from)?;
    let filtered_by_user = index_batches(filtered, "filtered")?;
    let reference_by_user = index_batches(reference, "reference")?;
    let filtered_batch = |user: u32| {
        filtered_by_user
            .get(&user)
            .copied()
            .ok_or(CounterfactualError::PairingMismatch { user })
    };
    let reference_batch = |user: u32| {
        reference_by_user
            .get(&user)
            .copied()
            .ok_or(CounterfactualError::PairingMismatch { user })
    };

    let mut block1_pairs = Vec::with_capacity(pairing.len());
    let mut block2_pairs = Vec::with_capacity(pairing.len());
    for &(i, j) in pairing.pairs() {
        let shared_reference = reference_batch(i)?;
        block1_pairs.push((filtered_batch(i)?, shared_reference));
        block2_pairs.push((filtered_batch(j)?, shared_reference));
    }

    let block1 = regulatory_tester_paired(
        &block1_pairs,
        &config.block_config(pairing.len(), config.delta_b1),
        seed.child("block").index(1),
    )?;
    let block2 = regulatory_tester_paired(
        &block2_pairs,
        &config.block_config(pairing.len(), config.delta_b2),
        seed.child("block").index(2),
    )?;
    Ok(CounterfactualVerdict {
        decision: combine_block_verdicts(block1.decision, block2.decision),
        block1,
        block2,
        reference_users: pairing.reference_users(),
    })
}

/// Mean over the pairs of `||Q_i - Q_j||_inf` between the members' filtered
/// transition matrices: how differently the platform treats paired users.
///
/// `filtered_rows` maps each user to their filtered rows; users named by
/// the pairing must be present.
pub fn counterfactual_variability(
    pairing: &CounterfactualPairing,
    filtered_rows: &[(u32, Vec<Vec<f64>>)],
) -> Result<f64, CounterfactualError> {
    let rows_of = |user: u32| {
        filtered_rows
            .iter()
            .find(|(u, _)| *u == user)
            .map(|(_, rows)| rows)
            .ok_or(CounterfactualError::PairingMismatch { user })
    };
    let mut total = 0.0;
    for &(i, j) in pairing.pairs() {
        total += linf_matrix_distance(rows_of(i)?, rows_of(j)?)?;
    }
    Ok(total / pairing.len() as f64)
}

/// Sizes the horizon for the composition, as [`required_horizon`] does for
/// a single block, with two changes: the successor budget defaults to the
/// pair-level alphabet parameter `n(n-1)/2` (at least 1), and the risk is
/// `max(delta_b1, delta_b2)`.
///
/// `user_chains` holds `(user, reference, filtered)` triples. Cover times
/// are estimated only for the chains the blocks consume: filtered chains of
/// every paired user, reference chains of first members. Entries for other
/// users are ignored. Seeds derive from each entry's position, matching
/// [`required_horizon`]'s layout.
///
/// [`required_horizon`]: crate::regulatory::required_horizon
///
/// # Panics
///
/// If a consumed chain's state count differs from `config.regulatory.n`.
pub fn required_horizon_cf(
    pairing: &CounterfactualPairing,
    user_chains: &[(u32, MarkovChain, MarkovChain)],
    config: &CounterfactualConfig,
    seed: Seed,
) -> Result<u32, CounterfactualError> {
    config.validate().map_err(RegulatoryError::from)?;
    let mut seen = BTreeSet::new();
    for (user, _, _) in user_chains {
        if !seen.insert(*user) {
            return Err(RegulatoryError::ConfigMismatch(format!(
                "user {user} appears twice in the chain list"
            ))
            .into());
        }
    }
    let reg = &config.regulatory;
    let delta = self::max_f64(config.delta_b1, config.delta_b2);
    let pairs = pairing.len() as u32;
    let m_bar = match reg.m_bar {
        Some(m) => m,
        None => {
            let alphabet = (u64::from(reg.n) * u64::from(reg.n - 1) / 2).max(1);
            assert!(alphabet <= u64::from(u32::MAX), "alphabet parameter overflow");
            required_m(
                alphabet as u32,
                pairs,
                reg.eps1,
                reg.eps2,
                delta / (2.0 * f64::from(reg.n)),
                &reg.constants,
            )
            .map_err(RegulatoryError::from)?
        }
    };

    let filtered_users = pairing.filtered_users();
    let reference_users = pairing.reference_users();
    let mut worst = 0.0f64;
    let mut missing: BTreeSet<u32> = filtered_users.iter().copied().collect();
    for (pos, (user, reference, filtered)) in user_chains.iter().enumerate() {
        missing.remove(user);
        let user_seed = seed.child("user").index(pos as u64);
        if reference_users.binary_search(user).is_ok() {
            assert_eq!(reference.n(), reg.n, "chain size must match config");
            let est = estimate_cover_time(
                reference,
                reg.m_trajectories,
                m_bar,
                reg.cover_trials,
                reg.cover_budget,
                user_seed.child("R"),
            )
            .map_err(crate::error::HorizonError::from)?;
            worst = worst.max(est.t_hat());
        }
        if filtered_users.binary_search(user).is_ok() {
            assert_eq!(filtered.n(), reg.n, "chain size must match config");
            let est = estimate_cover_time(
                filtered,
                reg.m_trajectories,
                m_bar,
                reg.cover_trials,
                reg.cover_budget,
                user_seed.child("F"),
            )
            .map_err(crate::error::HorizonError::from)?;
            worst = worst.max(est.t_hat());
        }
    }
    if let Some(&user) = missing.iter().next() {
        return Err(CounterfactualError::PairingMismatch { user });
    }
    Ok(libm::ceil(horizon_multiplier(pairs, delta) * worst) as u32 + 1)
}

fn max_f64(a: f64, b: f64) -> f64 {
    if a >= b {
        a
    } else {
        b
    }
}

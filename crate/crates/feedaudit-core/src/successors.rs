//! Successor extraction: turning trajectories into i.i.d. draws from a row.
//!
//! Whenever a trajectory sits at state `i` with at least one step remaining,
//! the next state is an independent draw from row `i` of the generating
//! chain, regardless of how the walk got there. Collecting a fixed number of
//! such successors therefore yields a fixed-size i.i.d. sample, which is what
//! the pair tester consumes.

use alloc::vec::Vec;

use crate::error::InsufficientCoverage;
use crate::markov::Trajectory;

/// Visits to `state` that have a recorded successor, pooled over `trajs`.
///
/// A trajectory's final position has no successor and does not count.
pub fn successor_bearing_visits(trajs: &[Trajectory], state: u32) -> u64 {
    let mut total = 0u64;
    for traj in trajs {
        if traj.len() < 2 {
            continue;
        }
        for &s in &traj.states[..traj.len() - 1] {
            if s == state {
                total += 1;
            }
        }
    }
    total
}

/// The first `count` successors of visits to `state`, scanning trajectories
/// in order and each trajectory front to back.
///
/// Fails when fewer than `count` successor-bearing visits exist in total.
pub fn extract_successors(
    trajs: &[Trajectory],
    state: u32,
    count: u64,
) -> Result<Vec<u32>, InsufficientCoverage> {
    let mut out = Vec::with_capacity(count as usize);
    for traj in trajs {
        if traj.len() < 2 {
            continue;
        }
        for pos in 0..traj.len() - 1 {
            if traj.states[pos] == state {
                out.push(traj.states[pos + 1]);
                if out.len() as u64 == count {
                    return Ok(out);
                }
            }
        }
    }
    if out.len() as u64 == count {
        return Ok(out);
    }
    Err(InsufficientCoverage {
        state,
        available: out.len() as u64,
        required: count,
    })
}

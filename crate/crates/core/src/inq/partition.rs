//! Splitting a layer's re-trainable weights into a group to freeze now and
//! a group that keeps training.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::LayerMask;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionStrategy {
    /// Largest magnitudes are frozen first.
    Pruning,
    /// Uniform selection without replacement.
    Random,
}

impl fmt::Display for PartitionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionStrategy::Pruning => "pruning",
            PartitionStrategy::Random => "random",
        })
    }
}

impl FromStr for PartitionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pruning" => Ok(Self::Pruning),
            "random" => Ok(Self::Random),
            other => Err(Error::InvalidConfig(format!(
                "unknown partition strategy {other:?} (expected pruning or random)"
            ))),
        }
    }
}

/// Frozen entries for portion `sigma` of a layer of `size` weights.
pub fn target_count(sigma: f64, size: usize) -> usize {
    ((sigma * size as f64).round() as usize).min(size)
}

fn check_target(weights: &Tensor, mask: &LayerMask, target: usize) -> Result<usize> {
    if weights.len() != mask.len() {
        return Err(Error::Shape(format!(
            "mask has {} entries for {} weights",
            mask.len(),
            weights.len()
        )));
    }
    let frozen = mask.frozen_count();
    if target < frozen {
        return Err(Error::TargetBelowFrozen { target, frozen });
    }
    if target > weights.len() {
        return Err(Error::TargetAboveSize {
            target,
            size: weights.len(),
        });
    }
    Ok(target - frozen)
}

/// Freezes the `target - frozen` largest-magnitude re-trainable entries.
///
/// Equal magnitudes go to the lower flat index first.
pub fn partition_pruning(weights: &Tensor, mask: &LayerMask, target: usize) -> Result<LayerMask> {
    Ok(select_pruning(weights, mask, target)?.0)
}

/// Freezes `target - frozen` re-trainable entries chosen uniformly at random.
pub fn partition_random(
    weights: &Tensor,
    mask: &LayerMask,
    target: usize,
    seed: u64,
) -> Result<LayerMask> {
    Ok(select_random(weights, mask, target, seed)?.0)
}

/// Returns the new mask and the newly frozen indices (ascending).
pub(crate) fn select_pruning(
    weights: &Tensor,
    mask: &LayerMask,
    target: usize,
) -> Result<(LayerMask, Vec<usize>)> {
    let take = check_target(weights, mask, target)?;
    let w = weights.data();
    let mut candidates = mask.trainable_indices();
    candidates.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()).then(a.cmp(&b)));
    candidates.truncate(take);
    freeze_all(mask, candidates)
}

pub(crate) fn select_random(
    weights: &Tensor,
    mask: &LayerMask,
    target: usize,
    seed: u64,
) -> Result<(LayerMask, Vec<usize>)> {
    let take = check_target(weights, mask, target)?;
    let candidates = mask.trainable_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, candidates.len(), take)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    freeze_all(mask, chosen)
}

fn freeze_all(mask: &LayerMask, mut chosen: Vec<usize>) -> Result<(LayerMask, Vec<usize>)> {
    chosen.sort_unstable();
    let mut next = mask.clone();
    for &i in &chosen {
        next.freeze(i)?;
    }
    Ok((next, chosen))
}

//! The incremental quantization loop: partition, quantize the newly frozen
//! group, then re-train the rest with masked updates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::partition::{select_pruning, select_random, target_count, PartitionStrategy};
use super::schedule::InqSchedule;
use crate::error::{Error, Result};
use crate::io::QuantizedModel;
use crate::mask::PartitionMask;
use crate::nn::{evaluate, mean_loss, train_with, Dataset, EpochMetrics, Network, SgdConfig};
use crate::quant::{build_grid, quantize_subset, QuantGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InqConfig {
    pub bits: u32,
    pub schedule: InqSchedule,
    pub strategy: PartitionStrategy,
    pub epochs_per_step: usize,
    /// Re-training solver; its base rate and decay schedule restart every step.
    pub sgd: SgdConfig,
    pub seed: u64,
}

/// Re-training epochs per step: total stays within 8 for 5-bit runs with
/// the 4-step schedule, and grows for narrower grids.
pub fn default_epochs_per_step(bits: u32) -> usize {
    match bits {
        0..=2 => 4,
        _ => 2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub sigma: f64,
    pub frozen_fraction: f64,
    /// Mean cross-entropy over the training set after the step.
    pub train_loss: f64,
    pub eval_top1: f64,
    pub eval_top5: Option<f64>,
}

/// Per-step detail that the metric record does not carry.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub retrain: Vec<EpochMetrics>,
    /// Checksum of the frozen entries after quantization and after every
    /// re-training epoch.
    pub frozen_checksums: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InqState {
    network: Network,
    masks: PartitionMask,
    grids: Vec<QuantGrid>,
    step: usize,
    sigma: f64,
    /// Weights as of the last partition; authoritative at frozen entries.
    snapshot: Vec<Vec<f64>>,
}

impl InqState {
    /// Starts a run: grids are fixed here from the full-precision weights.
    pub fn new(network: Network, bits: u32) -> Result<Self> {
        let grids = network
            .params()
            .iter()
            .map(|p| build_grid(&p.weights, bits))
            .collect::<Result<Vec<_>>>()?;
        let masks = PartitionMask::all_trainable(network.params().iter().map(|p| p.weights.len()));
        Self::restore(network, masks, grids, 0, 0.0)
    }

    /// Rebuilds a state from checkpointed parts.
    pub fn restore(
        network: Network,
        masks: PartitionMask,
        grids: Vec<QuantGrid>,
        step: usize,
        sigma: f64,
    ) -> Result<Self> {
        let params = network.params();
        if masks.layers().len() != params.len() || grids.len() != params.len() {
            return Err(Error::Shape(format!(
                "{} learnable layers, {} masks, {} grids",
                params.len(),
                masks.layers().len(),
                grids.len()
            )));
        }
        for (l, ((p, m), g)) in params.iter().zip(masks.layers()).zip(&grids).enumerate() {
            if m.len() != p.weights.len() {
                return Err(Error::Shape(format!("learnable layer {l}: mask size mismatch")));
            }
            if let Some(index) = m
                .frozen_indices()
                .into_iter()
                .find(|&i| !g.contains(p.weights.data()[i]))
            {
                return Err(Error::NotInGrid {
                    index,
                    value: p.weights.data()[index],
                });
            }
        }
        let snapshot = params.iter().map(|p| p.weights.data().to_vec()).collect();
        Ok(Self {
            network,
            masks,
            grids,
            step,
            sigma,
            snapshot,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn into_network(self) -> Network {
        self.network
    }

    pub fn masks(&self) -> &PartitionMask {
        &self.masks
    }

    pub fn grids(&self) -> &[QuantGrid] {
        &self.grids
    }

    /// Number of completed steps.
    pub fn step(&self) -> usize {
        self.step
    }

    /// Accumulated portion reached so far (0 before the first step).
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn frozen_fraction(&self) -> f64 {
        let total = self.masks.total();
        if total == 0 {
            return 1.0;
        }
        self.masks.frozen_count() as f64 / total as f64
    }

    pub fn is_fully_quantized(&self) -> bool {
        self.masks.frozen_count() == self.masks.total()
    }

    /// CRC-32 over `(layer, index, value bits)` of every frozen entry.
    pub fn frozen_checksum(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for (l, (p, m)) in self
            .network
            .params()
            .iter()
            .zip(self.masks.layers())
            .enumerate()
        {
            for i in m.frozen_indices() {
                h.update(&(l as u32).to_be_bytes());
                h.update(&(i as u64).to_be_bytes());
                h.update(&p.weights.data()[i].to_bits().to_be_bytes());
            }
        }
        h.finalize()
    }

    /// Checks that every frozen entry still equals its quantized value bit-for-bit.
    pub fn verify_frozen(&self) -> Result<()> {
        check_frozen(&self.network, &self.masks, &self.snapshot)
    }

    pub fn to_quantized_model(&self) -> Result<QuantizedModel> {
        if !self.is_fully_quantized() {
            return Err(Error::NotQuantized(format!(
                "{} of {} weights frozen",
                self.masks.frozen_count(),
                self.masks.total()
            )));
        }
        QuantizedModel::from_network(&self.network, &self.grids)
    }
}

fn check_frozen(net: &Network, masks: &PartitionMask, snapshot: &[Vec<f64>]) -> Result<()> {
    for (layer, ((p, m), snap)) in net
        .params()
        .iter()
        .zip(masks.layers())
        .zip(snapshot)
        .enumerate()
    {
        let w = p.weights.data();
        if let Some(index) = m
            .frozen_indices()
            .into_iter()
            .find(|&i| w[i].to_bits() != snap[i].to_bits())
        {
            return Err(Error::FrozenWeightChanged { layer, index });
        }
    }
    Ok(())
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a simple combination.
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One pass of partition, group-wise quantization and masked re-training.
///
/// Re-training is skipped once no weight is left re-trainable. On a
/// training error the state keeps the partially re-trained network.
pub fn inq_step(
    state: &mut InqState,
    strategy: PartitionStrategy,
    sigma: f64,
    retrain_epochs: usize,
    data: &Dataset,
    cfg: &SgdConfig,
    seed: u64,
) -> Result<StepReport> {
    if !(sigma > state.sigma && sigma <= 1.0) {
        return Err(Error::SigmaNotIncreasing {
            sigma,
            previous: state.sigma,
        });
    }
    let step = state.step;
    let mut next_masks = Vec::with_capacity(state.grids.len());
    for (l, p) in state.network.params_mut().iter_mut().enumerate() {
        let mask = state.masks.layer(l);
        let target = target_count(sigma, p.weights.len());
        let (mask, fresh) = match strategy {
            PartitionStrategy::Pruning => select_pruning(&p.weights, mask, target)?,
            PartitionStrategy::Random => {
                select_random(&p.weights, mask, target, mix(seed, step as u64, l as u64))?
            }
        };
        p.weights = quantize_subset(&p.weights, &state.grids[l], &fresh)?;
        state.snapshot[l] = p.weights.data().to_vec();
        next_masks.push(mask);
    }
    state.masks = PartitionMask::new(next_masks);
    state.sigma = sigma;
    state.step += 1;

    let mut checksums = vec![state.frozen_checksum()];
    let mut retrain = Vec::new();
    if !state.is_fully_quantized() && retrain_epochs > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(state.step as u64);
        let masks = state.masks.clone();
        let snapshot = &state.snapshot;
        retrain = train_with(
            &mut state.network,
            data,
            cfg,
            retrain_epochs,
            &mut rng,
            Some(&masks),
            |net, _| {
                check_frozen(net, &masks, snapshot)?;
                checksums.push(frozen_checksum_of(net, &masks));
                Ok(())
            },
        )?;
    }
    Ok(StepReport {
        retrain,
        frozen_checksums: checksums,
    })
}

fn frozen_checksum_of(net: &Network, masks: &PartitionMask) -> u32 {
    let mut h = crc32fast::Hasher::new();
    for (l, (p, m)) in net.params().iter().zip(masks.layers()).enumerate() {
        for i in m.frozen_indices() {
            h.update(&(l as u32).to_be_bytes());
            h.update(&(i as u64).to_be_bytes());
            h.update(&p.weights.data()[i].to_bits().to_be_bytes());
        }
    }
    h.finalize()
}

#[derive(Debug, Clone)]
pub struct InqOutcome {
    pub model: QuantizedModel,
    pub network: Network,
    pub grids: Vec<QuantGrid>,
    pub steps: Vec<StepMetrics>,
    pub reports: Vec<StepReport>,
}

/// Runs every step of `cfg.schedule` on a full-precision network.
///
/// `eval` is used for the per-step accuracy record.
pub fn run_inq(
    network: Network,
    cfg: &InqConfig,
    data: &Dataset,
    eval: &Dataset,
) -> Result<InqOutcome> {
    let mut state = InqState::new(network, cfg.bits)?;
    let (steps, reports) = resume_inq(&mut state, cfg, data, eval, |_, _| Ok(()))?;
    Ok(InqOutcome {
        model: state.to_quantized_model()?,
        grids: state.grids.clone(),
        network: state.into_network(),
        steps,
        reports,
    })
}

/// Continues a run from `state.step()` to the end of the schedule.
///
/// `after_step` sees the state after each step, e.g. to checkpoint it.
pub fn resume_inq<F>(
    state: &mut InqState,
    cfg: &InqConfig,
    data: &Dataset,
    eval: &Dataset,
    mut after_step: F,
) -> Result<(Vec<StepMetrics>, Vec<StepReport>)>
where
    F: FnMut(&InqState, &StepMetrics) -> Result<()>,
{
    cfg.sgd.validate()?;
    if state.grids.iter().any(|g| g.bits() != cfg.bits) {
        return Err(Error::InvalidConfig(
            "state grids do not match the configured bit-width".into(),
        ));
    }
    let mut steps = Vec::new();
    let mut reports = Vec::new();
    for &sigma in &cfg.schedule.sigmas()[state.step..] {
        let report = inq_step(
            state,
            cfg.strategy,
            sigma,
            cfg.epochs_per_step,
            data,
            &cfg.sgd,
            cfg.seed,
        )?;
        let acc = evaluate(&state.network, eval)?;
        let metrics = StepMetrics {
            step: state.step,
            sigma,
            frozen_fraction: state.frozen_fraction(),
            train_loss: mean_loss(&state.network, data)?,
            eval_top1: acc.top1,
            eval_top5: acc.top5,
        };
        after_step(state, &metrics)?;
        steps.push(metrics);
        reports.push(report);
    }
    Ok((steps, reports))
}

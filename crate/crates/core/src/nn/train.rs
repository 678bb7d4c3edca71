use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::loss::softmax_cross_entropy;
use super::network::Network;
use super::sgd::{sgd_step, zero_velocity, SgdConfig};
use crate::error::{Error, Result};
use crate::mask::PartitionMask;
use crate::tensor::Tensor;

const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches (pre-update).
    pub loss: f64,
    /// Training accuracy measured on the same mini-batches.
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub top1: f64,
    /// Present when the task has at least 5 classes.
    pub top5: Option<f64>,
    pub samples: usize,
}

/// Trains `net` in place for `epochs` epochs, shuffling with `seed`.
pub fn train(
    net: &mut Network,
    data: &Dataset,
    cfg: &SgdConfig,
    epochs: usize,
    seed: u64,
) -> Result<Vec<EpochMetrics>> {
    if epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    train_with(net, data, cfg, epochs, &mut rng, None, |_, _| Ok(()))
}

/// The general training loop.
///
/// The learning rate follows `cfg.lr_schedule` counted from epoch 0 of this
/// call, and momentum starts from zero. With a mask, frozen weights are
/// never touched. `on_epoch` runs after every epoch.
pub fn train_with<F>(
    net: &mut Network,
    data: &Dataset,
    cfg: &SgdConfig,
    epochs: usize,
    rng: &mut ChaCha8Rng,
    mask: Option<&PartitionMask>,
    mut on_epoch: F,
) -> Result<Vec<EpochMetrics>>
where
    F: FnMut(&Network, &EpochMetrics) -> Result<()>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut velocity = zero_velocity(net);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(rng);
        let lr = cfg.lr_at(epoch);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (batch, labels) = data.gather(chunk);
            let (loss, grads, logits) = net.loss_gradients_logits(&batch, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            loss_sum += loss * chunk.len() as f64;
            correct += count_top_k(&logits, &labels, 1);
            sgd_step(net, &grads.params, &mut velocity, cfg, lr, mask)?;
        }
        let metrics = EpochMetrics {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        };
        if !metrics.loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: metrics.loss,
            });
        }
        on_epoch(net, &metrics)?;
        history.push(metrics);
    }
    Ok(history)
}

/// Number of rows whose label ranks within the top `k` logits.
///
/// Ties rank the lower class index first.
pub fn count_top_k(logits: &Tensor, labels: &[usize], k: usize) -> usize {
    let classes = logits.shape().get(1).copied().unwrap_or(0);
    if classes == 0 {
        return 0;
    }
    logits
        .data()
        .chunks_exact(classes)
        .zip(labels)
        .filter(|(row, &label)| {
            let target = row[label];
            let rank = row
                .iter()
                .enumerate()
                .filter(|&(c, &z)| z > target || (z == target && c < label))
                .count();
            rank < k
        })
        .count()
}

/// Mean cross-entropy of `net` over the whole dataset (no weight decay term).
pub fn mean_loss(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut sum = 0.0;
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_CHUNK).min(data.len());
        let idx: Vec<usize> = (start..end).collect();
        let (batch, labels) = data.gather(&idx);
        let logits = net.forward(&batch)?;
        let (loss, _) = softmax_cross_entropy(&logits, &labels)?;
        sum += loss * (end - start) as f64;
        start = end;
    }
    Ok(sum / data.len() as f64)
}

pub fn evaluate(net: &Network, data: &Dataset) -> Result<Accuracy> {
    evaluate_with(data, |batch| net.forward(batch))
}

/// Top-1 (and top-5) accuracy using an arbitrary forward function.
pub fn evaluate_with<F>(data: &Dataset, forward: F) -> Result<Accuracy>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let want_top5 = data.num_classes() >= 5;
    let (mut top1, mut top5) = (0usize, 0usize);
    let mut start = 0;
    while start < data.len() {
        let end = (start + EVAL_CHUNK).min(data.len());
        let idx: Vec<usize> = (start..end).collect();
        let (batch, labels) = data.gather(&idx);
        let logits = forward(&batch)?;
        top1 += count_top_k(&logits, &labels, 1);
        if want_top5 {
            top5 += count_top_k(&logits, &labels, 5);
        }
        start = end;
    }
    let n = data.len().max(1) as f64;
    Ok(Accuracy {
        top1: top1 as f64 / n,
        top5: want_top5.then(|| top5 as f64 / n),
        samples: data.len(),
    })
}

use serde::{Deserialize, Serialize};

use super::network::{Network, Params};
use crate::error::{Error, Result};
use crate::mask::PartitionMask;

/// Multiplies the base learning rate from `epoch` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrStep {
    pub epoch: usize,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub lr_schedule: Vec<LrStep>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 32,
            lr_schedule: Vec::new(),
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        for pair in self.lr_schedule.windows(2) {
            if pair[1].epoch <= pair[0].epoch {
                return bad("lr_schedule epochs must be strictly increasing".into());
            }
        }
        if let Some(s) = self
            .lr_schedule
            .iter()
            .find(|s| !(s.multiplier > 0.0 && s.multiplier.is_finite()))
        {
            return bad(format!("lr_schedule multiplier must be positive, got {}", s.multiplier));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let mult = self
            .lr_schedule
            .iter()
            .take_while(|s| s.epoch <= epoch)
            .last()
            .map_or(1.0, |s| s.multiplier);
        self.learning_rate * mult
    }
}

/// Momentum buffers, shaped like the network parameters.
pub fn zero_velocity(net: &Network) -> Vec<Params> {
    net.params().iter().map(Params::zeros_like).collect()
}

/// One momentum-SGD update with coupled L2 weight decay on the weights.
///
/// Per entry: `v <- momentum * v + (g + weight_decay * w)`, `w <- w - lr * v`.
/// Entries whose mask is 0 keep their value bit-for-bit and get `v = 0`.
/// Biases are always updated and never decayed.
pub fn sgd_step(
    net: &mut Network,
    grads: &[Params],
    velocity: &mut [Params],
    cfg: &SgdConfig,
    lr: f64,
    mask: Option<&PartitionMask>,
) -> Result<()> {
    let layers = net.params().len();
    if grads.len() != layers || velocity.len() != layers {
        return Err(Error::Shape(format!(
            "{layers} learnable layers, {} gradient sets, {} velocity sets",
            grads.len(),
            velocity.len()
        )));
    }
    if let Some(m) = mask {
        if m.layers().len() != layers {
            return Err(Error::Shape(format!(
                "{layers} learnable layers but mask has {}",
                m.layers().len()
            )));
        }
    }
    for (l, ((p, g), v)) in net
        .params_mut()
        .iter_mut()
        .zip(grads)
        .zip(velocity.iter_mut())
        .enumerate()
    {
        let n = p.weights.len();
        if g.weights.len() != n
            || v.weights.len() != n
            || g.bias.len() != p.bias.len()
            || v.bias.len() != p.bias.len()
        {
            return Err(Error::Shape(format!("learnable layer {l}: gradient shape mismatch")));
        }
        let layer_mask = match mask {
            Some(m) => {
                let lm = m.layer(l);
                if lm.len() != n {
                    return Err(Error::Shape(format!(
                        "learnable layer {l}: mask has {} entries for {n} weights",
                        lm.len()
                    )));
                }
                Some(lm.as_slice())
            }
            None => None,
        };
        let ws = p.weights.data_mut();
        let gs = g.weights.data();
        let vs = v.weights.data_mut();
        for i in 0..n {
            if layer_mask.is_some_and(|m| !m[i]) {
                vs[i] = 0.0;
                continue;
            }
            vs[i] = cfg.momentum * vs[i] + (gs[i] + cfg.weight_decay * ws[i]);
            ws[i] -= lr * vs[i];
        }
        for ((b, &gb), vb) in p
            .bias
            .data_mut()
            .iter_mut()
            .zip(g.bias.data())
            .zip(v.bias.data_mut())
        {
            *vb = cfg.momentum * *vb + gb;
            *b -= lr * *vb;
        }
    }
    Ok(())
}

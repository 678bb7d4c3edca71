//! Multiply-free inference: every weight is `0` or `±2^k`, so each product
//! is a sign flip plus an exponent adjustment of the activation.

use crate::error::{Error, Result};
use crate::io::QuantizedModel;
use crate::nn::{forward_with, LayerSpec, LayerWeights, Network, Params, WeightProduct};
use crate::quant::{exact_power_of_two, pow2};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftWeight {
    /// -1, 0 or +1.
    pub sign: i8,
    /// Meaningful only when `sign != 0`.
    pub exponent: i32,
}

impl ShiftWeight {
    pub const ZERO: ShiftWeight = ShiftWeight {
        sign: 0,
        exponent: 0,
    };

    /// `None` unless `v` is `0` or a normal `±2^k`.
    pub fn from_level(v: f64) -> Option<Self> {
        if v == 0.0 {
            return Some(Self::ZERO);
        }
        exact_power_of_two(v).map(|exponent| ShiftWeight {
            sign: if v < 0.0 { -1 } else { 1 },
            exponent,
        })
    }

    pub fn value(self) -> f64 {
        match self.sign {
            0 => 0.0,
            s if s < 0 => -pow2(self.exponent),
            _ => pow2(self.exponent),
        }
    }
}

/// `x * 2^k` by editing the exponent field.
///
/// Zeros and non-finite inputs pass through. Subnormal inputs or results
/// are rejected, since the edit would no longer be exact.
pub fn scale_pow2(x: f64, k: i32) -> Result<f64> {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    if x == 0.0 || exp == 0x7ff {
        return Ok(x);
    }
    let new = exp + k;
    if exp == 0 || new <= 0 || new >= 0x7ff {
        return Err(Error::ScaleRange { value: x, exponent: k });
    }
    Ok(f64::from_bits(
        (bits & !(0x7ffu64 << 52)) | ((new as u64) << 52),
    ))
}

impl WeightProduct for [ShiftWeight] {
    type Error = Error;

    #[inline]
    fn product(&self, input: f64, index: usize) -> Result<f64> {
        let w = self[index];
        match w.sign {
            // Matches the sign IEEE multiplication by +0 gives.
            0 => Ok(0.0f64.copysign(input)),
            s if s < 0 => scale_pow2(-input, w.exponent),
            _ => scale_pow2(input, w.exponent),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftLayer {
    pub shape: Vec<usize>,
    pub weights: Vec<ShiftWeight>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftModel {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    learnable: Vec<ShiftLayer>,
}

impl ShiftModel {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn learnable(&self) -> &[ShiftLayer] {
        &self.learnable
    }
}

impl LayerWeights for ShiftModel {
    type Weights = [ShiftWeight];

    fn weights(&self, layer: usize) -> &[ShiftWeight] {
        &self.learnable[layer].weights
    }

    fn bias(&self, layer: usize) -> &[f64] {
        &self.learnable[layer].bias
    }
}

pub fn to_shift_form(model: &QuantizedModel) -> Result<ShiftModel> {
    let learnable = model
        .quantized_layers()
        .iter()
        .map(|q| {
            let w = q.weights()?;
            let weights = w
                .data()
                .iter()
                .map(|&v| ShiftWeight::from_level(v).expect("decoded weights are grid levels"))
                .collect();
            Ok(ShiftLayer {
                shape: w.shape().to_vec(),
                weights,
                bias: q.bias.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ShiftModel {
        input_shape: model.input_shape().to_vec(),
        layers: model.layers().to_vec(),
        learnable,
    })
}

/// The float network holding exactly the levels of `model`.
pub fn reconstruct(model: &ShiftModel) -> Result<Network> {
    let params = model
        .learnable
        .iter()
        .map(|l| {
            Ok(Params {
                weights: Tensor::new(
                    l.shape.clone(),
                    l.weights.iter().map(|w| w.value()).collect(),
                )?,
                bias: Tensor::from_vec(l.bias.clone()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Network::from_parts(&model.input_shape, model.layers.clone(), params)
}

pub fn shift_forward(model: &ShiftModel, batch: &Tensor) -> Result<Tensor> {
    forward_with(&model.input_shape, &model.layers, model, batch)
}

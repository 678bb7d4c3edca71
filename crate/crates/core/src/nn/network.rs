use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{self, ConvGeometry, LayerSpec, WeightProduct};
use super::loss::softmax_cross_entropy;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weights and biases of one learnable layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Params {
    pub fn zeros_like(other: &Params) -> Self {
        Self {
            weights: Tensor::zeros(other.weights.shape()),
            bias: Tensor::zeros(other.bias.shape()),
        }
    }
}

/// Access to learnable-layer parameters during a forward pass.
///
/// `layer` is the learnable-layer index (0-based over Dense/Conv2d layers).
pub trait LayerWeights {
    type Weights: WeightProduct + ?Sized;

    fn weights(&self, layer: usize) -> &Self::Weights;
    fn bias(&self, layer: usize) -> &[f64];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    params: Vec<Params>,
}

/// Gradients of the mean batch loss.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Params>,
    pub input: Tensor,
}

impl Network {
    /// Builds a network with freshly initialized parameters.
    ///
    /// Learnable layers directly followed by a ReLU get He-uniform weights,
    /// all others Glorot-uniform. Biases start at zero.
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        check_architecture(input_shape, &layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (i, spec) in layers.iter().enumerate() {
            let (Some(shape), Some(bias_len), Some((fan_in, fan_out))) =
                (spec.weight_shape(), spec.bias_len(), spec.fans())
            else {
                continue;
            };
            let relu_next = matches!(layers.get(i + 1), Some(LayerSpec::Relu));
            let limit = if relu_next {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            let dist = Uniform::new_inclusive(-limit, limit)
                .map_err(|e| Error::InvalidLayer(e.to_string()))?;
            let len = shape.iter().product();
            let data = (0..len).map(|_| dist.sample(&mut rng)).collect();
            params.push(Params {
                weights: Tensor::new(shape, data)?,
                bias: Tensor::zeros(&[bias_len]),
            });
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
            params,
        })
    }

    pub fn from_parts(
        input_shape: &[usize],
        layers: Vec<LayerSpec>,
        params: Vec<Params>,
    ) -> Result<Self> {
        check_architecture(input_shape, &layers)?;
        let learnable: Vec<&LayerSpec> = layers.iter().filter(|l| l.is_learnable()).collect();
        if learnable.len() != params.len() {
            return Err(Error::Shape(format!(
                "{} learnable layers but {} parameter sets",
                learnable.len(),
                params.len()
            )));
        }
        for (l, (spec, p)) in learnable.iter().zip(&params).enumerate() {
            let ws = spec.weight_shape().unwrap_or_default();
            let bl = spec.bias_len().unwrap_or_default();
            if p.weights.shape() != ws.as_slice() || p.bias.shape() != [bl] {
                return Err(Error::Shape(format!(
                    "learnable layer {l}: expected weights {ws:?} and bias [{bl}], got {:?} and {:?}",
                    p.weights.shape(),
                    p.bias.shape()
                )));
            }
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
            params,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Params] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Params] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<Params> {
        self.params
    }

    /// Descriptors of the learnable layers, in order.
    pub fn learnable_specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .copied()
            .filter(LayerSpec::is_learnable)
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        output_shape(&self.input_shape, &self.layers)
            .map(|s| s.iter().product())
            .unwrap_or(0)
    }

    pub fn num_weights(&self) -> usize {
        self.params.iter().map(|p| p.weights.len()).sum()
    }

    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        forward_with(&self.input_shape, &self.layers, self, batch)
    }

    /// Mean softmax cross-entropy over the batch and its gradients.
    ///
    /// Weight decay is not part of the returned loss; the optimizer applies it.
    pub fn loss_and_gradients(&self, batch: &Tensor, labels: &[usize]) -> Result<(f64, Gradients)> {
        let (loss, grads, _) = self.loss_gradients_logits(batch, labels)?;
        Ok((loss, grads))
    }

    pub(crate) fn loss_gradients_logits(
        &self,
        batch: &Tensor,
        labels: &[usize],
    ) -> Result<(f64, Gradients, Tensor)> {
        let n = batch.shape().first().copied().unwrap_or(0);
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        let acts = propagate(&self.input_shape, &self.layers, self, batch, true)?;
        let logits = acts.last().expect("propagate returns the output");
        let (loss, mut grad) = softmax_cross_entropy(logits, labels)?;

        let mut param_grads: Vec<Params> = self.params.iter().map(Params::zeros_like).collect();
        let mut l = self.params.len();
        for (i, spec) in self.layers.iter().enumerate().rev() {
            let x = &acts[i];
            let mut grad_in = Tensor::zeros(x.shape());
            match *spec {
                LayerSpec::Dense { inputs, outputs } => {
                    l -= 1;
                    let pg = &mut param_grads[l];
                    layer::dense_backward(
                        self.params[l].weights.data(),
                        inputs,
                        outputs,
                        x.data(),
                        grad.data(),
                        pg.weights.data_mut(),
                        pg.bias.data_mut(),
                        Some(grad_in.data_mut()),
                    );
                }
                LayerSpec::Conv2d { .. } => {
                    l -= 1;
                    let geo = conv_geometry(spec, &x.shape()[1..]);
                    let pg = &mut param_grads[l];
                    layer::conv2d_backward(
                        self.params[l].weights.data(),
                        &geo,
                        x.data(),
                        grad.data(),
                        pg.weights.data_mut(),
                        pg.bias.data_mut(),
                        Some(grad_in.data_mut()),
                    );
                }
                LayerSpec::Relu => {
                    layer::relu_backward(x.data(), grad.data(), grad_in.data_mut());
                }
                LayerSpec::MaxPool2d { size } => {
                    let s = &x.shape()[1..];
                    layer::maxpool_backward(
                        s[0],
                        s[1],
                        s[2],
                        size,
                        x.data(),
                        grad.data(),
                        grad_in.data_mut(),
                    );
                }
                LayerSpec::Flatten => {
                    grad_in.data_mut().copy_from_slice(grad.data());
                }
            }
            grad = grad_in;
        }
        let logits = acts.into_iter().last().expect("non-empty");
        Ok((
            loss,
            Gradients {
                params: param_grads,
                input: grad,
            },
            logits,
        ))
    }
}

impl LayerWeights for Network {
    type Weights = [f64];

    fn weights(&self, layer: usize) -> &[f64] {
        self.params[layer].weights.data()
    }

    fn bias(&self, layer: usize) -> &[f64] {
        self.params[layer].bias.data()
    }
}

/// Validates every layer spec and that adjacent layers compose.
pub fn check_architecture(input_shape: &[usize], layers: &[LayerSpec]) -> Result<()> {
    if input_shape.is_empty() || input_shape.contains(&0) {
        return Err(Error::InvalidLayer(format!(
            "input shape must be non-empty with positive dimensions, got {input_shape:?}"
        )));
    }
    for (i, spec) in layers.iter().enumerate() {
        spec.validate()
            .map_err(|m| Error::InvalidLayer(format!("layer {i}: {m}")))?;
    }
    let out = output_shape(input_shape, layers)?;
    if out.len() != 1 {
        return Err(Error::InvalidLayer(format!(
            "network must end in a flat logit vector, got {out:?}"
        )));
    }
    Ok(())
}

fn output_shape(input_shape: &[usize], layers: &[LayerSpec]) -> Result<Vec<usize>> {
    let mut shape = input_shape.to_vec();
    for (i, spec) in layers.iter().enumerate() {
        shape = spec
            .output_shape(&shape)
            .map_err(|message| Error::LayerShape { layer: i, message })?;
    }
    Ok(shape)
}

pub(crate) fn conv_geometry(spec: &LayerSpec, input: &[usize]) -> ConvGeometry {
    let LayerSpec::Conv2d {
        in_channels,
        out_channels,
        kernel,
        stride,
        padding,
    } = *spec
    else {
        unreachable!("conv_geometry called on {spec:?}");
    };
    ConvGeometry {
        in_channels,
        out_channels,
        kernel,
        stride,
        padding,
        in_h: input[1],
        in_w: input[2],
        out_h: (input[1] + 2 * padding - kernel) / stride + 1,
        out_w: (input[2] + 2 * padding - kernel) / stride + 1,
    }
}

/// Runs a batch through `layers`, taking learnable parameters from `params`.
///
/// Returns the `(batch, classes)` logits.
pub fn forward_with<P>(
    input_shape: &[usize],
    layers: &[LayerSpec],
    params: &P,
    batch: &Tensor,
) -> Result<Tensor>
where
    P: LayerWeights + ?Sized,
    <P::Weights as WeightProduct>::Error: Into<Error>,
{
    let acts = propagate(input_shape, layers, params, batch, false)?;
    Ok(acts.into_iter().last().expect("non-empty"))
}

/// Returns `[input, out_0, out_1, ...]` if `keep`, else just the final output.
fn propagate<P>(
    input_shape: &[usize],
    layers: &[LayerSpec],
    params: &P,
    batch: &Tensor,
    keep: bool,
) -> Result<Vec<Tensor>>
where
    P: LayerWeights + ?Sized,
    <P::Weights as WeightProduct>::Error: Into<Error>,
{
    let shape = batch.shape();
    if shape.len() != input_shape.len() + 1 || &shape[1..] != input_shape {
        return Err(Error::LayerShape {
            layer: 0,
            message: format!(
                "batch shape {shape:?} does not match network input [N, {}]",
                input_shape
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        });
    }
    let n = shape[0];
    let mut acts = Vec::with_capacity(if keep { layers.len() + 1 } else { 1 });
    let mut current = batch.clone();
    let mut sample_shape = input_shape.to_vec();
    let mut l = 0;
    for (i, spec) in layers.iter().enumerate() {
        let out_sample = spec
            .output_shape(&sample_shape)
            .map_err(|message| Error::LayerShape { layer: i, message })?;
        let mut out_shape = vec![n];
        out_shape.extend_from_slice(&out_sample);
        let next = match *spec {
            LayerSpec::Dense { inputs, outputs } => {
                let mut out = Tensor::zeros(&out_shape);
                layer::dense_forward(
                    params.weights(l),
                    params.bias(l),
                    inputs,
                    outputs,
                    current.data(),
                    out.data_mut(),
                )
                .map_err(Into::into)?;
                l += 1;
                out
            }
            LayerSpec::Conv2d { .. } => {
                let geo = conv_geometry(spec, &sample_shape);
                let mut out = Tensor::zeros(&out_shape);
                layer::conv2d_forward(
                    params.weights(l),
                    params.bias(l),
                    &geo,
                    current.data(),
                    out.data_mut(),
                )
                .map_err(Into::into)?;
                l += 1;
                out
            }
            LayerSpec::Relu => {
                let data = current.data().iter().map(|&v| layer::relu(v)).collect();
                Tensor::new(out_shape, data)?
            }
            LayerSpec::MaxPool2d { size } => {
                let mut out = Tensor::zeros(&out_shape);
                layer::maxpool_forward(
                    sample_shape[0],
                    sample_shape[1],
                    sample_shape[2],
                    size,
                    current.data(),
                    out.data_mut(),
                );
                out
            }
            LayerSpec::Flatten => {
                if keep {
                    current.clone().reshape(out_shape)?
                } else {
                    std::mem::replace(&mut current, Tensor::zeros(&[0])).reshape(out_shape)?
                }
            }
        };
        if keep {
            acts.push(std::mem::replace(&mut current, next));
        } else {
            current = next;
        }
        sample_shape = out_sample;
    }
    acts.push(current);
    Ok(acts)
}

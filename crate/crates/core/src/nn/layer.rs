//! Layer descriptors and the per-kind forward/backward kernels.
//!
//! Activations are laid out row-major per sample: `[features]` for dense
//! layers and `[channels, height, width]` for spatial layers, with the batch
//! dimension outermost.
//!
//! The learnable kernels take their weights through [`WeightProduct`], so the
//! float engine and the shift-add runtime share one accumulation order: each
//! output starts at its bias and adds input-weight products in weight-index
//! order.

use std::convert::Infallible;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2d {
        size: usize,
    },
    Flatten,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return Err(format!(
                        "dense layer needs positive dimensions, got {inputs}->{outputs}"
                    ));
                }
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 {
                    return Err(format!(
                        "conv layer needs positive channels and kernel, got {in_channels}->{out_channels} k{kernel}"
                    ));
                }
                if stride == 0 {
                    return Err("conv stride must be at least 1".into());
                }
            }
            LayerSpec::MaxPool2d { size } => {
                if size == 0 {
                    return Err("pool size must be at least 1".into());
                }
            }
            LayerSpec::Relu | LayerSpec::Flatten => {}
        }
        Ok(())
    }

    pub fn is_learnable(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }

    /// Weight tensor shape: `[outputs, inputs]` or `[out_c, in_c, k, k]`.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Some(vec![outputs, inputs]),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some(vec![out_channels, in_channels, kernel, kernel]),
            _ => None,
        }
    }

    pub fn bias_len(&self) -> Option<usize> {
        match *self {
            LayerSpec::Dense { outputs, .. } => Some(outputs),
            LayerSpec::Conv2d { out_channels, .. } => Some(out_channels),
            _ => None,
        }
    }

    /// `(fan_in, fan_out)` for initialization.
    pub fn fans(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Some((inputs, outputs)),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((in_channels * kernel * kernel, out_channels * kernel * kernel)),
            _ => None,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                if input != [inputs] {
                    return Err(format!("dense layer expects [{inputs}], got {input:?}"));
                }
                Ok(vec![outputs])
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [c, h, w] = spatial(input)?;
                if c != in_channels {
                    return Err(format!(
                        "conv layer expects {in_channels} input channels, got {c}"
                    ));
                }
                if h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(format!(
                        "conv kernel {kernel} larger than padded input {h}x{w} (pad {padding})"
                    ));
                }
                Ok(vec![
                    out_channels,
                    (h + 2 * padding - kernel) / stride + 1,
                    (w + 2 * padding - kernel) / stride + 1,
                ])
            }
            LayerSpec::MaxPool2d { size } => {
                let [c, h, w] = spatial(input)?;
                if h < size || w < size {
                    return Err(format!("pool size {size} larger than input {h}x{w}"));
                }
                Ok(vec![c, h / size, w / size])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

fn spatial(shape: &[usize]) -> Result<[usize; 3], String> {
    match *shape {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(format!("expected [channels, height, width], got {shape:?}")),
    }
}

/// The multiplication primitive a learnable kernel uses for `input * w[index]`.
pub trait WeightProduct {
    type Error;

    fn product(&self, input: f64, index: usize) -> Result<f64, Self::Error>;
}

impl WeightProduct for [f64] {
    type Error = Infallible;

    #[inline(always)]
    fn product(&self, input: f64, index: usize) -> Result<f64, Infallible> {
        Ok(input * self[index])
    }
}

/// Geometry of a convolution applied to one `[c, h, w]` input.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn in_len(&self) -> usize {
        self.in_channels * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_channels * self.out_h * self.out_w
    }

    /// Input row for kernel row `ky` at output row `oy`, if inside the image.
    #[inline(always)]
    fn source(&self, out: usize, k: usize, limit: usize) -> Option<usize> {
        (out * self.stride + k)
            .checked_sub(self.padding)
            .filter(|&i| i < limit)
    }
}

pub(crate) fn dense_forward<W: WeightProduct + ?Sized>(
    weights: &W,
    bias: &[f64],
    inputs: usize,
    outputs: usize,
    x: &[f64],
    out: &mut [f64],
) -> Result<(), W::Error> {
    for (xr, or) in x.chunks_exact(inputs).zip(out.chunks_exact_mut(outputs)) {
        for (o, slot) in or.iter_mut().enumerate() {
            let base = o * inputs;
            let mut acc = bias[o];
            for (i, &xi) in xr.iter().enumerate() {
                acc += weights.product(xi, base + i)?;
            }
            *slot = acc;
        }
    }
    Ok(())
}

/// Accumulates weight and bias gradients; writes the input gradient if asked.
pub(crate) fn dense_backward(
    weights: &[f64],
    inputs: usize,
    outputs: usize,
    x: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    grad_in: Option<&mut [f64]>,
) {
    for (xr, gr) in x.chunks_exact(inputs).zip(grad_out.chunks_exact(outputs)) {
        for (o, &g) in gr.iter().enumerate() {
            grad_b[o] += g;
            if g == 0.0 {
                continue;
            }
            let row = &mut grad_w[o * inputs..(o + 1) * inputs];
            for (gw, &xi) in row.iter_mut().zip(xr) {
                *gw += g * xi;
            }
        }
    }
    if let Some(grad_in) = grad_in {
        for (gi, gr) in grad_in
            .chunks_exact_mut(inputs)
            .zip(grad_out.chunks_exact(outputs))
        {
            gi.fill(0.0);
            for (o, &g) in gr.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &weights[o * inputs..(o + 1) * inputs];
                for (d, &w) in gi.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<W: WeightProduct + ?Sized>(
    weights: &W,
    bias: &[f64],
    geo: &ConvGeometry,
    x: &[f64],
    out: &mut [f64],
) -> Result<(), W::Error> {
    let k = geo.kernel;
    let plane = geo.in_h * geo.in_w;
    for (xs, os) in x
        .chunks_exact(geo.in_len())
        .zip(out.chunks_exact_mut(geo.out_len()))
    {
        for oc in 0..geo.out_channels {
            for oy in 0..geo.out_h {
                for ox in 0..geo.out_w {
                    let mut acc = bias[oc];
                    for ic in 0..geo.in_channels {
                        let wbase = (oc * geo.in_channels + ic) * k * k;
                        let xplane = &xs[ic * plane..(ic + 1) * plane];
                        for ky in 0..k {
                            let Some(iy) = geo.source(oy, ky, geo.in_h) else {
                                continue;
                            };
                            for kx in 0..k {
                                let Some(ix) = geo.source(ox, kx, geo.in_w) else {
                                    continue;
                                };
                                acc += weights
                                    .product(xplane[iy * geo.in_w + ix], wbase + ky * k + kx)?;
                            }
                        }
                    }
                    os[(oc * geo.out_h + oy) * geo.out_w + ox] = acc;
                }
            }
        }
    }
    Ok(())
}

pub(crate) fn conv2d_backward(
    weights: &[f64],
    geo: &ConvGeometry,
    x: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    mut grad_in: Option<&mut [f64]>,
) {
    let k = geo.kernel;
    let plane = geo.in_h * geo.in_w;
    if let Some(gi) = grad_in.as_deref_mut() {
        gi.fill(0.0);
    }
    for (n, (xs, gs)) in x
        .chunks_exact(geo.in_len())
        .zip(grad_out.chunks_exact(geo.out_len()))
        .enumerate()
    {
        for oc in 0..geo.out_channels {
            for oy in 0..geo.out_h {
                for ox in 0..geo.out_w {
                    let g = gs[(oc * geo.out_h + oy) * geo.out_w + ox];
                    grad_b[oc] += g;
                    if g == 0.0 {
                        continue;
                    }
                    for ic in 0..geo.in_channels {
                        let wbase = (oc * geo.in_channels + ic) * k * k;
                        let xbase = ic * plane;
                        for ky in 0..k {
                            let Some(iy) = geo.source(oy, ky, geo.in_h) else {
                                continue;
                            };
                            for kx in 0..k {
                                let Some(ix) = geo.source(ox, kx, geo.in_w) else {
                                    continue;
                                };
                                let xi = xbase + iy * geo.in_w + ix;
                                let wi = wbase + ky * k + kx;
                                grad_w[wi] += g * xs[xi];
                                if let Some(gi) = grad_in.as_deref_mut() {
                                    gi[n * geo.in_len() + xi] += g * weights[wi];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub(crate) fn relu_backward(x: &[f64], grad_out: &[f64], grad_in: &mut [f64]) {
    for ((gi, &g), &xi) in grad_in.iter_mut().zip(grad_out).zip(x) {
        *gi = if xi > 0.0 { g } else { 0.0 };
    }
}

/// Flat input offset of the maximum in each pooling window (first wins on ties).
fn pool_argmax(
    xs: &[f64],
    c: usize,
    h: usize,
    w: usize,
    size: usize,
    oy: usize,
    ox: usize,
) -> usize {
    let base = c * h * w;
    let mut best = base + (oy * size) * w + ox * size;
    for dy in 0..size {
        for dx in 0..size {
            let idx = base + (oy * size + dy) * w + ox * size + dx;
            if xs[idx] > xs[best] {
                best = idx;
            }
        }
    }
    best
}

pub(crate) fn maxpool_forward(
    channels: usize,
    h: usize,
    w: usize,
    size: usize,
    x: &[f64],
    out: &mut [f64],
) {
    let (oh, ow) = (h / size, w / size);
    for (xs, os) in x
        .chunks_exact(channels * h * w)
        .zip(out.chunks_exact_mut(channels * oh * ow))
    {
        for c in 0..channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    os[(c * oh + oy) * ow + ox] = xs[pool_argmax(xs, c, h, w, size, oy, ox)];
                }
            }
        }
    }
}

pub(crate) fn maxpool_backward(
    channels: usize,
    h: usize,
    w: usize,
    size: usize,
    x: &[f64],
    grad_out: &[f64],
    grad_in: &mut [f64],
) {
    let (oh, ow) = (h / size, w / size);
    grad_in.fill(0.0);
    for ((xs, gs), gi) in x
        .chunks_exact(channels * h * w)
        .zip(grad_out.chunks_exact(channels * oh * ow))
        .zip(grad_in.chunks_exact_mut(channels * h * w))
    {
        for c in 0..channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    gi[pool_argmax(xs, c, h, w, size, oy, ox)] += gs[(c * oh + oy) * ow + ox];
                }
            }
        }
    }
}

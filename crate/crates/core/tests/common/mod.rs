#![allow(dead_code)]

use inq_core::nn::{LayerSpec, Network};
use inq_core::quant::{build_grid, quantize_subset, QuantGrid};
use inq_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradKind {
    Dense,
    Conv2d,
    MaxPool,
    Relu,
}

pub struct GradCase {
    pub net: Network,
    pub batch: Tensor,
    pub labels: Vec<usize>,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values in `[-1, -gap] U [gap, 1]`, away from the ReLU kink.
fn off_kink(rng: &mut ChaCha8Rng, n: usize, gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(gap..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect()
}

/// A small random network isolating one layer kind, with a random batch.
pub fn grad_case(kind: GradKind, seed: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch_n = rng.random_range(1..=3);
    let (input_shape, layers) = match kind {
        GradKind::Dense => {
            let (i, o) = (rng.random_range(1..=6), rng.random_range(2..=5));
            (vec![i], vec![LayerSpec::Dense { inputs: i, outputs: o }])
        }
        GradKind::Conv2d => {
            let c = rng.random_range(1..=3);
            let h = rng.random_range(3..=6);
            let w = rng.random_range(3..=6);
            let spec = LayerSpec::Conv2d {
                in_channels: c,
                // One channel feeding softmax directly has a zero bias gradient.
                out_channels: rng.random_range(2..=3),
                kernel: rng.random_range(1..=3),
                stride: rng.random_range(1..=2),
                padding: rng.random_range(0..=1),
            };
            (vec![c, h, w], vec![spec, LayerSpec::Flatten])
        }
        GradKind::MaxPool => {
            let c = rng.random_range(1..=2);
            let size = rng.random_range(2..=3);
            let h = rng.random_range(size..=7);
            let w = rng.random_range(size..=7);
            (vec![c, h, w], vec![LayerSpec::MaxPool2d { size }, LayerSpec::Flatten])
        }
        GradKind::Relu => (vec![rng.random_range(2..=8)], vec![LayerSpec::Relu]),
    };
    let mut net = Network::new(&input_shape, layers, seed).expect("valid case");
    for p in net.params_mut() {
        let n = p.bias.len();
        p.bias.data_mut().copy_from_slice(&uniform(&mut rng, n, -0.5, 0.5));
    }
    let sample: usize = input_shape.iter().product();
    let data = match kind {
        GradKind::Relu => off_kink(&mut rng, batch_n * sample, 0.05),
        _ => uniform(&mut rng, batch_n * sample, -1.0, 1.0),
    };
    let mut shape = vec![batch_n];
    shape.extend_from_slice(&input_shape);
    let classes = net.num_classes();
    GradCase {
        batch: Tensor::new(shape, data).expect("batch shape"),
        labels: (0..batch_n).map(|_| rng.random_range(0..classes)).collect(),
        net,
    }
}

/// `||a - b|| / max(||a||, ||b||)`, or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Largest relative error between analytic and central-difference
/// gradients over every weight, bias and input tensor of the case.
pub fn grad_check(case: &GradCase, h: f64) -> f64 {
    let GradCase { net, batch, labels } = case;
    let (_, grads) = net.loss_and_gradients(batch, labels).expect("gradients");
    let loss = |n: &Network, b: &Tensor| n.loss_and_gradients(b, labels).expect("loss").0;
    let mut worst: f64 = 0.0;

    for (l, pg) in grads.params.iter().enumerate() {
        for (which, analytic) in [(0, &pg.weights), (1, &pg.bias)] {
            let numeric: Vec<f64> = (0..analytic.len())
                .map(|i| {
                    let mut probe = net.clone();
                    central_difference(
                        |v| {
                            let p = &mut probe.params_mut()[l];
                            let t = if which == 0 { &mut p.weights } else { &mut p.bias };
                            t.data_mut()[i] = v;
                            loss(&probe, batch)
                        },
                        if which == 0 {
                            net.params()[l].weights.data()[i]
                        } else {
                            net.params()[l].bias.data()[i]
                        },
                        h,
                    )
                })
                .collect();
            worst = worst.max(relative_error(analytic.data(), &numeric));
        }
    }

    let numeric: Vec<f64> = (0..batch.len())
        .map(|i| {
            let mut probe = batch.clone();
            central_difference(
                |v| {
                    probe.data_mut()[i] = v;
                    loss(net, &probe)
                },
                batch.data()[i],
                h,
            )
        })
        .collect();
    worst.max(relative_error(grads.input.data(), &numeric))
}

/// Random conv/dense network whose weights are fully quantized to `bits`.
pub fn random_quantized_network(seed: u64, bits: u32) -> (Network, Vec<QuantGrid>, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.random_range(1..=2);
    let side = rng.random_range(4..=7);
    let oc = rng.random_range(1..=4);
    let k = rng.random_range(1..=3);
    let pad = rng.random_range(0..=1);
    let conv_side = side + 2 * pad - k + 1;
    let pool = if conv_side >= 2 { 2 } else { 1 };
    let flat = oc * (conv_side / pool) * (conv_side / pool);
    let hidden = rng.random_range(2..=8);
    let layers = vec![
        LayerSpec::Conv2d {
            in_channels: c,
            out_channels: oc,
            kernel: k,
            stride: 1,
            padding: pad,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { size: pool },
        LayerSpec::Flatten,
        LayerSpec::Dense {
            inputs: flat,
            outputs: hidden,
        },
        LayerSpec::Relu,
        LayerSpec::Dense {
            inputs: hidden,
            outputs: rng.random_range(2..=6),
        },
    ];
    let mut net = Network::new(&[c, side, side], layers, seed).expect("valid network");
    let mut grids = Vec::new();
    for p in net.params_mut() {
        let g = build_grid(&p.weights, bits).expect("grid");
        let all: Vec<usize> = (0..p.weights.len()).collect();
        p.weights = quantize_subset(&p.weights, &g, &all).expect("quantize");
        let n = p.bias.len();
        p.bias.data_mut().copy_from_slice(&uniform(&mut rng, n, -0.3, 0.3));
        grids.push(g);
    }
    let batch_n = rng.random_range(1..=4);
    let batch = Tensor::new(
        vec![batch_n, c, side, side],
        uniform(&mut rng, batch_n * c * side * side, -2.0, 2.0),
    )
    .expect("batch");
    (net, grids, batch)
}

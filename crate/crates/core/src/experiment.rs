//! The default regression experiment: a 2-conv + 2-dense network on a
//! 10-class image dataset.
//!
//! When `INQ_MNIST_DIR` names a directory holding the four standard MNIST
//! IDX files, those are used. Otherwise the dataset is 10-arm spirals
//! rendered as 16x16 images.

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::io::{gen_synthetic, load_idx, rasterize, SynthKind};
use crate::nn::{Dataset, LayerSpec, LrStep, Network, SgdConfig};

pub const CLASSES: usize = 10;
pub const IMAGE_SIDE: usize = 16;
pub const TRAIN_SIZE: usize = 6000;
pub const TEST_SIZE: usize = 2000;
/// Points in `[-EXTENT, EXTENT]^2` map onto the image.
pub const EXTENT: f64 = 1.15;
/// Width of the rendered bump, in pixels.
pub const BUMP_WIDTH: f64 = 1.0;
pub const BASELINE_EPOCHS: usize = 30;

pub const MNIST_ENV: &str = "INQ_MNIST_DIR";

const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Half-width of the square each synthetic kind is rendered from.
pub fn render_extent(kind: SynthKind) -> f64 {
    match kind {
        SynthKind::Spirals => EXTENT,
        SynthKind::Blobs => 12.0,
    }
}

/// Train and test splits of `kind`, rendered as `side x side` images.
/// The test split uses a derived seed.
pub fn synthetic_images(
    kind: SynthKind,
    classes: usize,
    train: usize,
    test: usize,
    side: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let width = BUMP_WIDTH * side as f64 / IMAGE_SIDE as f64;
    let render = |n, s| {
        let pts = gen_synthetic(kind, classes, n, s)?;
        rasterize(&pts, side, render_extent(kind), width)
    };
    Ok((render(train, seed)?, render(test, seed ^ 0x5eed_7e57)?))
}

pub fn spiral_images(seed: u64, train: usize, test: usize) -> Result<(Dataset, Dataset)> {
    synthetic_images(SynthKind::Spirals, CLASSES, train, test, IMAGE_SIDE, seed)
}

/// The MNIST directory from the environment, if it holds all four files.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = PathBuf::from(std::env::var_os(MNIST_ENV)?);
    MNIST_FILES
        .iter()
        .all(|f| dir.join(f).is_file())
        .then_some(dir)
}

pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let p = |i: usize| dir.join(MNIST_FILES[i]);
    Ok((load_idx(p(0), p(1))?, load_idx(p(2), p(3))?))
}

/// MNIST when available, spirals otherwise; the flag says which.
pub fn regression_data(seed: u64) -> Result<(Dataset, Dataset, bool)> {
    match mnist_dir() {
        Some(dir) => {
            let (train, test) = load_mnist(&dir)?;
            Ok((train, test, true))
        }
        None => {
            let (train, test) = spiral_images(seed, TRAIN_SIZE, TEST_SIZE)?;
            Ok((train, test, false))
        }
    }
}

/// conv(8) - pool - conv(16) - pool - dense(192) - dense(classes).
pub fn regression_layers(side: usize, classes: usize) -> Vec<LayerSpec> {
    let flat = 16 * (side / 4) * (side / 4);
    vec![
        LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 8,
            kernel: 3,
            stride: 1,
            padding: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { size: 2 },
        LayerSpec::Conv2d {
            in_channels: 8,
            out_channels: 16,
            kernel: 3,
            stride: 1,
            padding: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { size: 2 },
        LayerSpec::Flatten,
        LayerSpec::Dense {
            inputs: flat,
            outputs: 192,
        },
        LayerSpec::Relu,
        LayerSpec::Dense {
            inputs: 192,
            outputs: classes,
        },
    ]
}

pub fn regression_network(data: &Dataset, seed: u64) -> Result<Network> {
    let side = data.sample_shape().last().copied().unwrap_or(IMAGE_SIDE);
    Network::new(
        data.sample_shape(),
        regression_layers(side, data.num_classes()),
        seed,
    )
}

/// Baseline solver: step decay by 10x at 60% and 85% of the run.
pub fn baseline_sgd() -> SgdConfig {
    SgdConfig {
        learning_rate: 0.05,
        momentum: 0.9,
        weight_decay: 5e-4,
        batch_size: 32,
        lr_schedule: vec![
            LrStep {
                epoch: BASELINE_EPOCHS * 6 / 10,
                multiplier: 0.1,
            },
            LrStep {
                epoch: BASELINE_EPOCHS * 85 / 100,
                multiplier: 0.01,
            },
        ],
    }
}

/// Re-training solver for each INQ step.
pub fn retrain_sgd() -> SgdConfig {
    SgdConfig {
        learning_rate: 0.1,
        momentum: 0.9,
        weight_decay: 5e-4,
        batch_size: 32,
        lr_schedule: vec![LrStep {
            epoch: 1,
            multiplier: 0.2,
        }],
    }
}

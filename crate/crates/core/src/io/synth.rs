//! Deterministic synthetic classification data.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Dataset;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Gaussian clusters on a circle of radius 10.
    Blobs,
    /// Interleaved noisy spiral arms in the unit disc.
    Spirals,
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Blobs => "blobs",
            SynthKind::Spirals => "spirals",
        })
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(Self::Blobs),
            "spirals" => Ok(Self::Spirals),
            other => Err(Error::InvalidConfig(format!(
                "unknown dataset kind {other:?} (expected blobs or spirals)"
            ))),
        }
    }
}

/// Spiral arm shape.
const SPIRAL_TURNS: f64 = 0.75;
const SPIRAL_ANGLE_NOISE: f64 = 0.12;
const SPIRAL_RADIUS_NOISE: f64 = 0.02;
const BLOB_RADIUS: f64 = 10.0;
const BLOB_SPREAD: f64 = 0.5;

/// `n` labelled 2-D points; sample `i` has label `i % classes`.
pub fn gen_synthetic(kind: SynthKind, classes: usize, n: usize, seed: u64) -> Result<Dataset> {
    if classes < 2 || n < classes {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 classes and one sample per class, got {classes} classes and {n} samples"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        let phase = TAU * c as f64 / classes as f64;
        let (x, y) = match kind {
            SynthKind::Blobs => (
                BLOB_RADIUS * phase.cos() + BLOB_SPREAD * unit.sample(&mut rng),
                BLOB_RADIUS * phase.sin() + BLOB_SPREAD * unit.sample(&mut rng),
            ),
            SynthKind::Spirals => {
                let t: f64 = rng.random_range(0.05..1.0);
                let theta = phase + TAU * SPIRAL_TURNS * t + SPIRAL_ANGLE_NOISE * unit.sample(&mut rng);
                let r = t + SPIRAL_RADIUS_NOISE * unit.sample(&mut rng);
                (r * theta.cos(), r * theta.sin())
            }
        };
        data.extend_from_slice(&[x, y]);
        labels.push(c);
    }
    Dataset::new(Tensor::new(vec![n, 2], data)?, labels, classes)
}

/// Renders each 2-D point as a `side x side` single-channel image holding a
/// Gaussian bump of width `width` pixels at the point's position, where
/// `[-extent, extent]^2` spans the image. Pixels are rounded to `k / 255`
/// so the images survive an IDX round trip exactly.
pub fn rasterize(points: &Dataset, side: usize, extent: f64, width: f64) -> Result<Dataset> {
    if points.sample_shape() != [2] {
        return Err(Error::Shape(format!(
            "rasterize needs 2-D points, got samples of shape {:?}",
            points.sample_shape()
        )));
    }
    if side < 2 || !(extent > 0.0) || !(width > 0.0) {
        return Err(Error::InvalidConfig(
            "rasterize needs side >= 2 and positive extent and width".into(),
        ));
    }
    let scale = (side - 1) as f64 / (2.0 * extent);
    let inv = 1.0 / (2.0 * width * width);
    let mut data = Vec::with_capacity(points.len() * side * side);
    for p in points.inputs().data().chunks_exact(2) {
        let (cx, cy) = ((p[0] + extent) * scale, (extent - p[1]) * scale);
        for row in 0..side {
            for col in 0..side {
                let d2 = (col as f64 - cx).powi(2) + (row as f64 - cy).powi(2);
                data.push(((-d2 * inv).exp() * 255.0).round() / 255.0);
            }
        }
    }
    Dataset::new(
        Tensor::new(vec![points.len(), 1, side, side], data)?,
        points.labels().to_vec(),
        points.num_classes(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        for kind in [SynthKind::Blobs, SynthKind::Spirals] {
            let a = gen_synthetic(kind, 4, 50, 7).unwrap();
            let b = gen_synthetic(kind, 4, 50, 7).unwrap();
            assert!(a.inputs().bit_eq(b.inputs()));
            let c = gen_synthetic(kind, 4, 50, 8).unwrap();
            assert!(!a.inputs().bit_eq(c.inputs()));
        }
    }

    #[test]
    fn balanced_classes() {
        let d = gen_synthetic(SynthKind::Spirals, 7, 100, 1).unwrap();
        let mut counts = [0usize; 7];
        for &l in d.labels() {
            counts[l] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1);
    }

    #[test]
    fn invalid_requests() {
        assert!(gen_synthetic(SynthKind::Blobs, 1, 10, 0).is_err());
        assert!(gen_synthetic(SynthKind::Blobs, 5, 4, 0).is_err());
    }

    #[test]
    fn raster_pixels_are_byte_levels() {
        let d = gen_synthetic(SynthKind::Spirals, 3, 6, 2).unwrap();
        let img = rasterize(&d, 8, 1.2, 1.0).unwrap();
        assert_eq!(img.sample_shape(), &[1, 8, 8]);
        for &v in img.inputs().data() {
            let k = v * 255.0;
            assert_eq!(k.round() / 255.0, v);
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

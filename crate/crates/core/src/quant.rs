//! Power-of-two quantization grids and the ladder rounding rule.
//!
//! A grid for bit-width `b` holds zero plus `±2^k` for `n2 <= k <= n1`,
//! where `n1 = floor(log2(4s/3))` for the layer's largest magnitude `s`
//! and `n2 = n1 + 1 - 2^(b-2)`. That is `2^(b-2)` exponents and
//! `2^(b-1) + 1` levels.
//!
//! Rounding maps `|w|` to rung `2^k` when `(2^(k-1) + 2^k)/2 <= |w| < 3*2^k/2`.
//! The rung below `2^n2` is zero, so the lowest rung starts at `2^n2 / 2`;
//! magnitudes at or above `3*2^n1/2` saturate to `2^n1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest supported bit-width; wider grids run out of exponent range anyway.
pub const MAX_BITS: u32 = 12;

/// Exact `2^k` as an `f64` (0 below the subnormal range, infinity above).
pub fn pow2(k: i32) -> f64 {
    if k > 1023 {
        f64::INFINITY
    } else if k >= -1022 {
        f64::from_bits(((k + 1023) as u64) << 52)
    } else if k >= -1074 {
        f64::from_bits(1u64 << (k + 1074))
    } else {
        0.0
    }
}

/// The exponent `k` if `v` is exactly `±2^k` with `2^k` a normal float.
pub fn exact_power_of_two(v: f64) -> Option<i32> {
    let bits = v.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let mantissa = bits & ((1u64 << 52) - 1);
    (mantissa == 0 && exp != 0 && exp != 0x7ff).then_some(exp - 1023)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct GridParams {
    bits: u32,
    n1: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridParams", into = "GridParams")]
pub struct QuantGrid {
    bits: u32,
    n1: i32,
    n2: i32,
    levels: Vec<f64>,
}

impl TryFrom<GridParams> for QuantGrid {
    type Error = Error;

    fn try_from(p: GridParams) -> Result<Self> {
        QuantGrid::new(p.bits, p.n1)
    }
}

impl From<QuantGrid> for GridParams {
    fn from(g: QuantGrid) -> Self {
        GridParams {
            bits: g.bits,
            n1: g.n1,
        }
    }
}

impl QuantGrid {
    pub fn new(bits: u32, n1: i32) -> Result<Self> {
        if !(2..=MAX_BITS).contains(&bits) {
            return Err(Error::InvalidBitWidth(bits));
        }
        let n2 = n1 + 1 - (1i32 << (bits - 2));
        if n2 < -1022 || n1 > 1023 {
            return Err(Error::GridOutOfRange { n1, n2 });
        }
        let positive: Vec<f64> = (n2..=n1).map(pow2).collect();
        let mut levels: Vec<f64> = positive.iter().rev().map(|v| -v).collect();
        levels.push(0.0);
        levels.extend_from_slice(&positive);
        Ok(Self {
            bits,
            n1,
            n2,
            levels,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn n1(&self) -> i32 {
        self.n1
    }

    pub fn n2(&self) -> i32 {
        self.n2
    }

    /// All admissible values, ascending.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn num_exponents(&self) -> usize {
        (self.n1 - self.n2 + 1) as usize
    }

    /// Exact (bitwise) membership; `-0.0` is not a level.
    pub fn contains(&self, v: f64) -> bool {
        v.to_bits() == 0 || exact_power_of_two(v).is_some_and(|k| (self.n2..=self.n1).contains(&k))
    }

    /// Lower bound of the rung `2^k`, inclusive.
    fn rung_floor(&self, k: i32) -> f64 {
        if k == self.n2 {
            pow2(k - 1)
        } else {
            3.0 * pow2(k - 2)
        }
    }
}

/// `max |w|` over the tensor.
pub fn max_abs(weights: &Tensor) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::EmptyTensor);
    }
    Ok(weights.data().iter().fold(0.0, |m: f64, w| m.max(w.abs())))
}

/// `floor(log2(4s/3))`, computed exactly: the largest `n` with `3 * 2^(n-2) <= s`.
pub fn compute_n1(s: f64) -> Result<i32> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::NonPositiveScale(s));
    }
    let fits = |n: i32| 3.0 * pow2(n - 2) <= s;
    let mut n = (s.log2() + (4.0f64 / 3.0).log2()).floor().clamp(-1080.0, 1030.0) as i32;
    while !fits(n) {
        n -= 1;
    }
    while fits(n + 1) {
        n += 1;
    }
    Ok(n)
}

/// The grid for `weights` at bit-width `bits`.
pub fn build_grid(weights: &Tensor, bits: u32) -> Result<QuantGrid> {
    if bits < 2 {
        return Err(Error::InvalidBitWidth(bits));
    }
    let s = max_abs(weights)?;
    if s == 0.0 {
        return Err(Error::AllZeroWeights);
    }
    QuantGrid::new(bits, compute_n1(s)?)
}

/// Rounds one value onto the grid.
pub fn quantize_value(w: f64, grid: &QuantGrid) -> Result<f64> {
    if w.is_nan() {
        return Err(Error::NanWeight);
    }
    let mag = w.abs();
    for k in (grid.n2..=grid.n1).rev() {
        if mag >= grid.rung_floor(k) {
            let level = pow2(k);
            return Ok(if w < 0.0 { -level } else { level });
        }
    }
    Ok(0.0)
}

/// Quantizes the entries at `selector`; every other entry is copied unchanged.
pub fn quantize_subset(weights: &Tensor, grid: &QuantGrid, selector: &[usize]) -> Result<Tensor> {
    let mut out = weights.clone();
    let len = out.len();
    let data = out.data_mut();
    for &index in selector {
        let slot = data
            .get_mut(index)
            .ok_or(Error::IndexOutOfRange { index, len })?;
        *slot = quantize_value(*slot, grid)?;
    }
    Ok(out)
}

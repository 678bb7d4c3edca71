//! Variable-length power-of-two weight codec.
//!
//! A zero weight is the single bit `1`. A nonzero weight `±2^e` is `b` bits:
//! a `0` flag, a sign bit (`0` positive), then `b - 2` bits holding
//! `n1 - e` (index 0 is the largest magnitude). Codewords are packed
//! MSB-first in flat index order and the stream is zero-padded to a byte
//! boundary.

use crate::error::{Error, Result};
use crate::quant::{exact_power_of_two, pow2, QuantGrid};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Codeword {
    Zero,
    Power { negative: bool, index: u32 },
}

impl Codeword {
    pub fn for_value(value: f64, grid: &QuantGrid) -> Option<Self> {
        if value.to_bits() == 0 {
            return Some(Codeword::Zero);
        }
        let e = exact_power_of_two(value)?;
        (grid.n2()..=grid.n1()).contains(&e).then(|| Codeword::Power {
            negative: value < 0.0,
            index: (grid.n1() - e) as u32,
        })
    }

    pub fn len(&self, bits: u32) -> usize {
        match self {
            Codeword::Zero => 1,
            Codeword::Power { .. } => bits as usize,
        }
    }

    pub fn value(&self, grid: &QuantGrid) -> f64 {
        match *self {
            Codeword::Zero => 0.0,
            Codeword::Power { negative, index } => {
                let v = pow2(grid.n1() - index as i32);
                if negative {
                    -v
                } else {
                    v
                }
            }
        }
    }
}

/// MSB-first bit packer.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bit: bool) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().expect("byte pushed above") |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u32, width: u32) {
        for i in (0..width).rev() {
            self.push((value >> i) & 1 == 1);
        }
    }

    pub fn bit_len(&self) -> usize {
        self.len
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

#[derive(Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn read(&mut self) -> Result<bool> {
        self.read_bits(1).map(|v| v == 1)
    }

    pub fn read_bits(&mut self, width: u32) -> Result<u32> {
        let available = self.bytes.len() * 8;
        let needed = self.pos + width as usize;
        if needed > available {
            return Err(Error::TruncatedStream { needed, available });
        }
        let mut v = 0u32;
        for _ in 0..width {
            let bit = (self.bytes[self.pos / 8] >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | u32::from(bit);
            self.pos += 1;
        }
        Ok(v)
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}

/// A packed layer: the padded bytes and the number of meaningful bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub bytes: Vec<u8>,
    pub bit_len: usize,
}

pub fn encode_layer(weights: &Tensor, grid: &QuantGrid) -> Result<Bitstream> {
    let mut w = BitWriter::new();
    for (index, &value) in weights.data().iter().enumerate() {
        match Codeword::for_value(value, grid) {
            Some(Codeword::Zero) => w.push(true),
            Some(Codeword::Power { negative, index }) => {
                w.push(false);
                w.push(negative);
                w.push_bits(index, grid.bits() - 2);
            }
            None => return Err(Error::NotInGrid { index, value }),
        }
    }
    Ok(Bitstream {
        bit_len: w.bit_len(),
        bytes: w.into_bytes(),
    })
}

/// Decodes `count` weights from the front of `stream`.
pub fn decode_layer(stream: &[u8], grid: &QuantGrid, count: usize) -> Result<Tensor> {
    let mut r = BitReader::new(stream);
    let index_bits = grid.bits() - 2;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let cw = if r.read()? {
            Codeword::Zero
        } else {
            let negative = r.read()?;
            let index = r.read_bits(index_bits)?;
            if index as usize >= grid.num_exponents() {
                return Err(Error::ExponentIndexOutOfRange {
                    index,
                    bits: grid.bits(),
                });
            }
            Codeword::Power { negative, index }
        };
        out.push(cw.value(grid));
    }
    Ok(Tensor::from_vec(out))
}

/// Encoded size in bits before padding: one per zero, `b` per nonzero.
pub fn encoded_bits(zeros: usize, count: usize, bits: u32) -> usize {
    zeros + (count - zeros) * bits as usize
}

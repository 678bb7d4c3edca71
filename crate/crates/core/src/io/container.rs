//! The `INQM` model container.
//!
//! ```text
//! "INQM" | version: u16 | section*
//! section = length: u64 | payload | crc32(payload): u32
//! ```
//!
//! Section 0 is the header (model kind, provenance string, input shape,
//! layer table). One section per learnable layer follows, in layer order.
//! Quantized layers store `b: u8, n1: i32, count: u64, bit_len: u64`, the
//! padded bitstream and the biases; float layers store `count: u64`, the
//! weights and the biases. All integers and floats are big-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::codec::Bitstream;
use crate::io::model::{QuantizedLayer, QuantizedModel};
use crate::nn::{LayerSpec, Network, Params};
use crate::quant::QuantGrid;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"INQM";
pub const VERSION: u16 = 1;

const KIND_FLOAT: u8 = 0;
const KIND_QUANTIZED: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Float(Network),
    Quantized(QuantizedModel),
}

impl StoredModel {
    /// The float network computing the same function.
    pub fn to_network(&self) -> Result<Network> {
        match self {
            StoredModel::Float(net) => Ok(net.clone()),
            StoredModel::Quantized(q) => q.decode(),
        }
    }

    pub fn input_shape(&self) -> &[usize] {
        match self {
            StoredModel::Float(net) => net.input_shape(),
            StoredModel::Quantized(q) => q.input_shape(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub provenance: String,
    pub model: StoredModel,
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u64).to_be_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_bits().to_be_bytes());
        }
    }
    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Malformed(format!("unexpected end of data at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.array()?))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_be_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<usize> {
        usize::try_from(u64::from_be_bytes(self.array()?))
            .map_err(|_| Error::Malformed("length exceeds address space".into()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Malformed("count overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_be_bytes(c.try_into().expect("chunk of 8"))))
            .collect())
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn push_section(out: &mut Vec<u8>, payload: &[u8]) {
    out.extend_from_slice(&(payload.len() as u64).to_be_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&crc32fast::hash(payload).to_be_bytes());
}

fn read_section<'a>(r: &mut Reader<'a>, section: usize) -> Result<&'a [u8]> {
    let len = r.u64()?;
    let payload = r.take(len)?;
    if r.u32()? != crc32fast::hash(payload) {
        return Err(Error::ChecksumMismatch { section });
    }
    Ok(payload)
}

fn write_layer(w: &mut Writer, spec: &LayerSpec) {
    match *spec {
        LayerSpec::Dense { inputs, outputs } => {
            w.u8(0);
            w.u64(inputs);
            w.u64(outputs);
        }
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            w.u8(1);
            for v in [in_channels, out_channels, kernel, stride, padding] {
                w.u64(v);
            }
        }
        LayerSpec::Relu => w.u8(2),
        LayerSpec::MaxPool2d { size } => {
            w.u8(3);
            w.u64(size);
        }
        LayerSpec::Flatten => w.u8(4),
    }
}

fn read_layer(r: &mut Reader) -> Result<LayerSpec> {
    Ok(match r.u8()? {
        0 => LayerSpec::Dense {
            inputs: r.u64()?,
            outputs: r.u64()?,
        },
        1 => LayerSpec::Conv2d {
            in_channels: r.u64()?,
            out_channels: r.u64()?,
            kernel: r.u64()?,
            stride: r.u64()?,
            padding: r.u64()?,
        },
        2 => LayerSpec::Relu,
        3 => LayerSpec::MaxPool2d { size: r.u64()? },
        4 => LayerSpec::Flatten,
        tag => return Err(Error::Malformed(format!("unknown layer tag {tag}"))),
    })
}

fn header(kind: u8, provenance: &str, input_shape: &[usize], layers: &[LayerSpec]) -> Vec<u8> {
    let mut w = Writer::default();
    w.u8(kind);
    w.u64(provenance.len());
    w.bytes(provenance.as_bytes());
    w.u64(input_shape.len());
    for &d in input_shape {
        w.u64(d);
    }
    w.u64(layers.len());
    for spec in layers {
        write_layer(&mut w, spec);
    }
    w.buf
}

fn preamble() -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&VERSION.to_be_bytes());
    out
}

pub fn encode_network(net: &Network, provenance: &str) -> Vec<u8> {
    let mut out = preamble();
    push_section(
        &mut out,
        &header(KIND_FLOAT, provenance, net.input_shape(), net.layers()),
    );
    for p in net.params() {
        let mut w = Writer::default();
        w.u64(p.weights.len());
        w.f64s(p.weights.data());
        w.f64s(p.bias.data());
        push_section(&mut out, &w.buf);
    }
    out
}

pub fn encode_quantized(model: &QuantizedModel, provenance: &str) -> Vec<u8> {
    let mut out = preamble();
    push_section(
        &mut out,
        &header(KIND_QUANTIZED, provenance, model.input_shape(), model.layers()),
    );
    for q in model.quantized_layers() {
        let mut w = Writer::default();
        w.u8(q.grid.bits() as u8);
        w.i32(q.grid.n1());
        w.u64(q.count);
        w.u64(q.stream.bit_len);
        w.bytes(&q.stream.bytes);
        w.f64s(&q.bias);
        push_section(&mut out, &w.buf);
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<LoadedModel> {
    let mut r = Reader::new(bytes);
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    r.take(4)?;
    let found = r.u16()?;
    if found != VERSION {
        return Err(Error::VersionMismatch {
            found,
            expected: VERSION,
        });
    }

    let mut h = Reader::new(read_section(&mut r, 0)?);
    let kind = h.u8()?;
    let prov_len = h.u64()?;
    let provenance = String::from_utf8(h.take(prov_len)?.to_vec())
        .map_err(|_| Error::Malformed("provenance is not UTF-8".into()))?;
    let ndim = h.u64()?;
    let input_shape = (0..ndim).map(|_| h.u64()).collect::<Result<Vec<_>>>()?;
    let nlayers = h.u64()?;
    let layers = (0..nlayers.min(1 << 16))
        .map(|_| read_layer(&mut h))
        .collect::<Result<Vec<_>>>()?;
    if layers.len() != nlayers || !h.done() {
        return Err(Error::Malformed("header length mismatch".into()));
    }
    crate::nn::check_architecture(&input_shape, &layers)?;
    let specs: Vec<LayerSpec> = layers.iter().copied().filter(LayerSpec::is_learnable).collect();

    let mut sections = Vec::with_capacity(specs.len());
    for i in 0..specs.len() {
        sections.push(read_section(&mut r, i + 1)?);
    }
    if !r.done() {
        return Err(Error::Malformed("trailing bytes after last section".into()));
    }

    let model = match kind {
        KIND_FLOAT => {
            let params = specs
                .iter()
                .zip(&sections)
                .map(|(spec, payload)| {
                    let mut s = Reader::new(payload);
                    let count = s.u64()?;
                    let shape = spec.weight_shape().unwrap_or_default();
                    let bias_len = spec.bias_len().unwrap_or_default();
                    if count != shape.iter().product::<usize>() {
                        return Err(Error::Malformed(format!(
                            "{count} weights for layer {spec:?}"
                        )));
                    }
                    let weights = Tensor::new(shape, s.f64s(count)?)?;
                    let bias = Tensor::from_vec(s.f64s(bias_len)?);
                    if !s.done() {
                        return Err(Error::Malformed("layer section length mismatch".into()));
                    }
                    Ok(Params { weights, bias })
                })
                .collect::<Result<Vec<_>>>()?;
            StoredModel::Float(Network::from_parts(&input_shape, layers, params)?)
        }
        KIND_QUANTIZED => {
            let quantized = specs
                .iter()
                .zip(&sections)
                .map(|(spec, payload)| {
                    let mut s = Reader::new(payload);
                    let grid = QuantGrid::new(u32::from(s.u8()?), s.i32()?)?;
                    let count = s.u64()?;
                    let bit_len = s.u64()?;
                    let b = grid.bits() as usize;
                    // Each codeword is 1 or b bits, so the length pins the zero count.
                    let valid = bit_len >= count
                        && bit_len <= count.saturating_mul(b)
                        && (count * b - bit_len) % (b - 1) == 0;
                    if !valid {
                        return Err(Error::Malformed(format!(
                            "{bit_len} bits cannot encode {count} weights at {b} bits"
                        )));
                    }
                    let bytes = s.take(bit_len.div_ceil(8))?.to_vec();
                    let bias = s.f64s(spec.bias_len().unwrap_or_default())?;
                    if !s.done() {
                        return Err(Error::Malformed("layer section length mismatch".into()));
                    }
                    let layer = QuantizedLayer {
                        spec: *spec,
                        grid,
                        count,
                        stream: Bitstream { bytes, bit_len },
                        bias,
                    };
                    // Reject streams whose codewords disagree with the stored length.
                    let decoded = layer.weights()?;
                    let zeros = decoded.data().iter().filter(|&&v| v == 0.0).count();
                    if layer.zero_count() != zeros {
                        return Err(Error::Malformed("bit length disagrees with stream".into()));
                    }
                    Ok(layer)
                })
                .collect::<Result<Vec<_>>>()?;
            StoredModel::Quantized(QuantizedModel::from_parts(input_shape, layers, quantized)?)
        }
        other => return Err(Error::Malformed(format!("unknown model kind {other}"))),
    };
    Ok(LoadedModel { provenance, model })
}

pub fn save_network(path: impl AsRef<Path>, net: &Network, provenance: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_network(net, provenance)).map_err(|e| Error::io(path, e))
}

pub fn save_quantized(
    path: impl AsRef<Path>,
    model: &QuantizedModel,
    provenance: &str,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_quantized(model, provenance)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LoadedModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

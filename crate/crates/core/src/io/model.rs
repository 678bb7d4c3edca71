use crate::error::{Error, Result};
use crate::io::codec::{decode_layer, encode_layer, encoded_bits, Bitstream};
use crate::nn::{LayerSpec, Network, Params};
use crate::quant::QuantGrid;
use crate::tensor::Tensor;

/// One learnable layer with packed weights and full-precision biases.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    pub spec: LayerSpec,
    pub grid: QuantGrid,
    pub count: usize,
    pub stream: Bitstream,
    pub bias: Vec<f64>,
}

impl QuantizedLayer {
    pub fn weights(&self) -> Result<Tensor> {
        let shape = self.spec.weight_shape().unwrap_or_else(|| vec![self.count]);
        decode_layer(&self.stream.bytes, &self.grid, self.count)?.reshape(shape)
    }

    pub fn zero_count(&self) -> usize {
        // Every nonzero codeword is `b` bits and every zero is 1 bit.
        let b = self.grid.bits() as usize;
        (self.count * b - self.stream.bit_len) / (b - 1)
    }

    pub fn encoded_bits(&self) -> usize {
        encoded_bits(self.zero_count(), self.count, self.grid.bits())
    }
}

/// A network whose learnable weights are all grid levels, stored packed.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    quantized: Vec<QuantizedLayer>,
}

impl QuantizedModel {
    /// Packs `net`, whose weights must already lie on `grids` (one per
    /// learnable layer).
    pub fn from_network(net: &Network, grids: &[QuantGrid]) -> Result<Self> {
        let specs = net.learnable_specs();
        if grids.len() != specs.len() {
            return Err(Error::Shape(format!(
                "{} grids for {} learnable layers",
                grids.len(),
                specs.len()
            )));
        }
        let quantized = specs
            .into_iter()
            .zip(net.params())
            .zip(grids)
            .map(|((spec, p), grid)| {
                Ok(QuantizedLayer {
                    spec,
                    grid: grid.clone(),
                    count: p.weights.len(),
                    stream: encode_layer(&p.weights, grid)?,
                    bias: p.bias.data().to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            input_shape: net.input_shape().to_vec(),
            layers: net.layers().to_vec(),
            quantized,
        })
    }

    pub(crate) fn from_parts(
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec>,
        quantized: Vec<QuantizedLayer>,
    ) -> Result<Self> {
        crate::nn::check_architecture(&input_shape, &layers)?;
        let specs: Vec<LayerSpec> = layers.iter().copied().filter(LayerSpec::is_learnable).collect();
        if specs.len() != quantized.len()
            || specs.iter().zip(&quantized).any(|(s, q)| *s != q.spec)
        {
            return Err(Error::Malformed(
                "quantized layers do not match the architecture".into(),
            ));
        }
        for q in &quantized {
            let expected: usize = q.spec.weight_shape().unwrap_or_default().iter().product();
            if q.count != expected || Some(q.bias.len()) != q.spec.bias_len() {
                return Err(Error::Malformed(format!(
                    "layer {:?}: {} weights and {} biases",
                    q.spec,
                    q.count,
                    q.bias.len()
                )));
            }
        }
        Ok(Self {
            input_shape,
            layers,
            quantized,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn quantized_layers(&self) -> &[QuantizedLayer] {
        &self.quantized
    }

    pub fn grids(&self) -> Vec<QuantGrid> {
        self.quantized.iter().map(|q| q.grid.clone()).collect()
    }

    /// Unpacks into a float network with exactly the grid-valued weights.
    pub fn decode(&self) -> Result<Network> {
        let params = self
            .quantized
            .iter()
            .map(|q| {
                Ok(Params {
                    weights: q.weights()?,
                    bias: Tensor::from_vec(q.bias.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Network::from_parts(&self.input_shape, self.layers.clone(), params)
    }
}

//! Binary partition masks: `1` marks a re-trainable weight, `0` a
//! quantized weight frozen for the rest of the run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMask {
    trainable: Vec<bool>,
}

impl LayerMask {
    pub fn all_trainable(len: usize) -> Self {
        Self {
            trainable: vec![true; len],
        }
    }

    pub fn from_trainable(trainable: Vec<bool>) -> Self {
        Self { trainable }
    }

    pub fn len(&self) -> usize {
        self.trainable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trainable.is_empty()
    }

    pub fn is_trainable(&self, index: usize) -> bool {
        self.trainable[index]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.trainable
    }

    pub fn frozen_count(&self) -> usize {
        self.trainable.iter().filter(|t| !**t).count()
    }

    pub fn trainable_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.trainable[i]).collect()
    }

    pub fn frozen_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.trainable[i]).collect()
    }

    /// Moves `index` into the frozen group. Freezing is one-way.
    pub fn freeze(&mut self, index: usize) -> Result<()> {
        let len = self.len();
        let slot = self
            .trainable
            .get_mut(index)
            .ok_or(Error::IndexOutOfRange { index, len })?;
        *slot = false;
        Ok(())
    }

    /// The mask as a 0/1 tensor.
    pub fn to_tensor(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(
            shape.to_vec(),
            self.trainable
                .iter()
                .map(|&t| if t { 1.0 } else { 0.0 })
                .collect(),
        )
    }
}

/// One [`LayerMask`] per learnable layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionMask {
    layers: Vec<LayerMask>,
}

impl PartitionMask {
    pub fn new(layers: Vec<LayerMask>) -> Self {
        Self { layers }
    }

    pub fn all_trainable(sizes: impl IntoIterator<Item = usize>) -> Self {
        Self {
            layers: sizes.into_iter().map(LayerMask::all_trainable).collect(),
        }
    }

    pub fn layers(&self) -> &[LayerMask] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerMask] {
        &mut self.layers
    }

    pub fn layer(&self, l: usize) -> &LayerMask {
        &self.layers[l]
    }

    pub fn frozen_count(&self) -> usize {
        self.layers.iter().map(LayerMask::frozen_count).sum()
    }

    pub fn total(&self) -> usize {
        self.layers.iter().map(LayerMask::len).sum()
    }
}

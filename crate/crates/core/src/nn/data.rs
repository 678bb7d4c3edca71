use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Labelled samples: `inputs` is `(N, sample shape...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let rows = inputs.shape().first().copied().unwrap_or(0);
        if inputs.shape().is_empty() || rows != labels.len() {
            return Err(Error::Shape(format!(
                "{} labels for inputs of shape {:?}",
                labels.len(),
                inputs.shape()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: num_classes,
            });
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    /// Copies the given rows into a batch tensor.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let width = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * width);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.inputs.data()[i * width..(i + 1) * width]);
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        (
            Tensor::new(shape, data).expect("gathered rows match shape"),
            labels,
        )
    }

    /// Contiguous rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let idx: Vec<usize> = (start..end.min(self.len())).collect();
        let (inputs, labels) = self.gather(&idx);
        Self {
            inputs,
            labels,
            num_classes: self.num_classes,
        }
    }
}

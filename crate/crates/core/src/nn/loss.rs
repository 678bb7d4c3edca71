use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean softmax cross-entropy of `(batch, classes)` logits and its gradient.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let [n, classes] = *logits.shape() else {
        return Err(Error::Shape(format!(
            "logits must be (batch, classes), got {:?}",
            logits.shape()
        )));
    };
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {n}",
            labels.len()
        )));
    }
    let scale = 1.0 / n as f64;
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = 0.0;
    for ((row, g), &label) in logits
        .data()
        .chunks_exact(classes)
        .zip(grad.data_mut().chunks_exact_mut(classes))
        .zip(labels)
    {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (gi, &z) in g.iter_mut().zip(row) {
            *gi = (z - max).exp();
            sum += *gi;
        }
        total += max + sum.ln() - row[label];
        for gi in g.iter_mut() {
            *gi *= scale / sum;
        }
        g[label] -= scale;
    }
    Ok((total * scale, grad))
}

//! Softmax linear head, cross-entropy loss and its analytic gradient.

use super::{FeatureSet, Result, TrainError};
use crate::metrics::ScoreMatrix;

/// Probability floor applied before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// `softmax(W h + b)` with `W` stored row-major (`classes x dim`) followed
/// by `b` in one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    classes: usize,
    dim: usize,
    params: Vec<f64>,
}

impl LinearHead {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            params: vec![0.0; classes * dim + classes],
        }
    }

    pub fn from_parts(classes: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != classes * dim || bias.len() != classes {
            return Err(TrainError::DimensionMismatch {
                expected: classes * dim + classes,
                actual: weights.len() + bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteParameter);
        }
        let mut params = weights;
        params.extend(bias);
        Ok(Self { classes, dim, params })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..self.classes * self.dim]
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.classes * self.dim..]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn logits(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.dim {
            return Err(TrainError::DimensionMismatch {
                expected: self.dim,
                actual: h.len(),
            });
        }
        let (w, b) = (self.weights(), self.bias());
        Ok((0..self.classes)
            .map(|c| {
                let row = &w[c * self.dim..(c + 1) * self.dim];
                row.iter().zip(h).map(|(a, x)| a * x).sum::<f64>() + b[c]
            })
            .collect())
    }

    pub fn probabilities(&self, h: &[f64]) -> Result<Vec<f64>> {
        softmax(&self.logits(h)?)
    }
}

/// Max-subtracted exponential normalization.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(TrainError::NonFiniteLogit);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Mean of `-ln(max(p_true, 1e-12))` over the batch.
pub fn cross_entropy(batch: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if batch.len() != labels.len() {
        return Err(TrainError::LengthMismatch {
            left: batch.len(),
            right: labels.len(),
        });
    }
    if batch.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (row, &y) in batch.iter().zip(labels) {
        let p = *row.get(y).ok_or(TrainError::LabelOutOfRange {
            label: y,
            classes: row.len(),
        })?;
        total -= p.max(PROB_FLOOR).ln();
    }
    Ok(total / batch.len() as f64)
}

/// Gradient of the mean cross-entropy with respect to the flat parameters
/// (`dW` row-major, then `db`).
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub classes: usize,
    pub dim: usize,
    pub flat: Vec<f64>,
}

impl HeadGradient {
    pub fn weights(&self) -> &[f64] {
        &self.flat[..self.classes * self.dim]
    }

    pub fn bias(&self) -> &[f64] {
        &self.flat[self.classes * self.dim..]
    }
}

/// Accumulates `(p_i - onehot(y_i)) h_i^T` into `grad` and returns the
/// summed loss. Callers divide by the batch size.
pub(crate) fn accumulate(head: &LinearHead, h: &[f64], y: usize, grad: &mut [f64]) -> Result<f64> {
    if y >= head.classes {
        return Err(TrainError::LabelOutOfRange {
            label: y,
            classes: head.classes,
        });
    }
    let p = head.probabilities(h)?;
    let d = head.dim;
    let bias_off = head.classes * d;
    for (c, &pc) in p.iter().enumerate() {
        let delta = pc - if c == y { 1.0 } else { 0.0 };
        if delta != 0.0 {
            for (g, x) in grad[c * d..(c + 1) * d].iter_mut().zip(h) {
                *g += delta * x;
            }
        }
        grad[bias_off + c] += delta;
    }
    Ok(-p[y].max(PROB_FLOOR).ln())
}

/// `dL/dW = (1/B) sum_i (p_i - onehot(y_i)) h_i^T`, `dL/db = (1/B) sum_i (p_i - onehot(y_i))`.
pub fn head_gradient(head: &LinearHead, features: &[Vec<f64>], labels: &[usize]) -> Result<HeadGradient> {
    if features.len() != labels.len() {
        return Err(TrainError::LengthMismatch {
            left: features.len(),
            right: labels.len(),
        });
    }
    let mut flat = vec![0.0; head.params.len()];
    for (h, &y) in features.iter().zip(labels) {
        accumulate(head, h, y, &mut flat)?;
    }
    if !features.is_empty() {
        let inv = 1.0 / features.len() as f64;
        flat.iter_mut().for_each(|g| *g *= inv);
    }
    Ok(HeadGradient {
        classes: head.classes,
        dim: head.dim,
        flat,
    })
}

/// `softmax(W h_i + b)` for every row of `features`, paired with its labels.
pub fn predict_scores(head: &LinearHead, features: &FeatureSet) -> Result<ScoreMatrix> {
    if features.dim() != head.dim {
        return Err(TrainError::DimensionMismatch {
            expected: head.dim,
            actual: features.dim(),
        });
    }
    let mut probs = Vec::with_capacity(features.len() * head.classes);
    for i in 0..features.len() {
        probs.extend(head.probabilities(features.row(i))?);
    }
    Ok(ScoreMatrix::from_flat(head.classes, probs, features.labels().to_vec())?)
}

//! Mini-batch training of a softmax head with Adam and early stopping on
//! validation macro F1.

mod adam;
mod checkpoint;
mod extractor;
mod head;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta, HEADER_LEN, MAGIC, VERSION,
};
pub use extractor::{extract_all, FeatureExtractor, ReferenceExtractor};
pub use head::{cross_entropy, head_gradient, predict_scores, softmax, HeadGradient, LinearHead, PROB_FLOOR};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, MetricsError};
use crate::rng::{derive_seed, CounterRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite logit")]
    NonFiniteLogit,
    #[error("non-finite parameter")]
    NonFiniteParameter,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("shape mismatch: {params} parameters vs {grads} gradients")]
    ShapeMismatch { params: usize, grads: usize },
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("validation set must be non-empty and contain at least two classes")]
    DegenerateValidation,
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            max_epochs: 500,
            patience: 50,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        Ok(())
    }
}

/// Row-major `N x dim` feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl FeatureSet {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != dim * labels.len() {
            return Err(TrainError::DimensionMismatch {
                expected: dim * labels.len(),
                actual: features.len(),
            });
        }
        Ok(Self { dim, features, labels })
    }

    pub fn from_rows(dim: usize, rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(TrainError::DimensionMismatch {
                expected: dim,
                actual: r.len(),
            });
        }
        Self::new(dim, rows.concat(), labels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
    pub is_best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    /// Parameters snapshotted at the best validation epoch.
    pub best_head: LinearHead,
    pub best_epoch: usize,
    pub logs: Vec<EpochLog>,
}

/// Macro F1 of `head` on `validation` under argmax prediction.
pub fn validation_macro_f1(head: &LinearHead, validation: &FeatureSet) -> Result<f64> {
    let scores = predict_scores(head, validation)?;
    let cm = metrics::confusion_matrix(&scores.predictions(), scores.labels(), head.classes())?;
    Ok(metrics::f1_scores(&cm).macro_f1)
}

/// Trains `head` on `train`, scoring each epoch with macro F1 on `validation`.
pub fn fit(train: &FeatureSet, validation: &FeatureSet, head: LinearHead, cfg: &TrainConfig) -> Result<FitOutcome> {
    let classes: BTreeSet<usize> = validation.labels().iter().copied().collect();
    if classes.len() < 2 {
        return Err(TrainError::DegenerateValidation);
    }
    if validation.dim() != head.dim() {
        return Err(TrainError::DimensionMismatch {
            expected: head.dim(),
            actual: validation.dim(),
        });
    }
    fit_with_validator(train, head, cfg, |h, _| validation_macro_f1(h, validation))
}

/// The training loop with a caller-supplied epoch score.
///
/// `validate(head, epoch)` runs after every epoch. Only a strictly higher
/// score than the best so far counts as improvement; training stops after
/// `patience` consecutive epochs without one, or at `max_epochs`.
pub fn fit_with_validator(
    train: &FeatureSet,
    mut head: LinearHead,
    cfg: &TrainConfig,
    mut validate: impl FnMut(&LinearHead, usize) -> Result<f64>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    if train.dim() != head.dim() {
        return Err(TrainError::DimensionMismatch {
            expected: head.dim(),
            actual: train.dim(),
        });
    }
    if let Some(&label) = train.labels().iter().find(|&&l| l >= head.classes()) {
        return Err(TrainError::LabelOutOfRange {
            label,
            classes: head.classes(),
        });
    }

    let mut state = AdamState::new(head.params().len());
    let mut grad = vec![0.0; head.params().len()];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, usize, LinearHead)> = None;
    let mut stale = 0;
    let mut logs = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        order.sort_unstable();
        CounterRng::new(derive_seed(cfg.seed, "epoch", epoch as u64), 0).shuffle(&mut order);

        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                loss_sum += head::accumulate(&head, train.row(i), train.labels()[i], &mut grad)?;
            }
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            adam_step(head.params_mut(), &grad, &mut state, cfg)?;
        }
        if head.params().iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteParameter);
        }

        let score = validate(&head, epoch)?;
        let improved = best.as_ref().is_none_or(|(b, _, _)| score > *b);
        if improved {
            best = Some((score, epoch, head.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        logs.push(EpochLog {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_macro_f1: score,
            is_best: improved,
        });
        if stale >= cfg.patience {
            break;
        }
    }

    let (_, best_epoch, best_head) = best.expect("at least one epoch runs");
    Ok(FitOutcome {
        best_head,
        best_epoch,
        logs,
    })
}

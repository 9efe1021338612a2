//! Multiclass evaluation: confusion matrix, accuracy, precision, recall,
//! macro/weighted F1 and one-vs-rest ROC AUC.
//!
//! Conventions:
//! - any `0 / 0` ratio in precision, recall or F1 is 0;
//! - macro averages run over classes with nonzero true support;
//! - predictions are the row-wise argmax, ties going to the lowest index;
//! - AUC is the Mann-Whitney statistic with half credit for ties, which is
//!   exactly the trapezoidal area under the ROC curve.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {predictions} predictions vs {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("class index {index} out of range for {classes} classes")]
    IndexOutOfRange { index: usize, classes: usize },
    #[error("at least two classes are required, got {0}")]
    TooFewClasses(usize),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no class has both positive and negative examples")]
    DegenerateLabels,
    #[error("row {row}: {reason}")]
    InvalidScores { row: usize, reason: String },
    #[error("score file: {0}")]
    ScoreFile(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// `C x C` counts; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(MetricsError::TooFewClasses(classes));
        }
        Ok(Self {
            classes,
            counts: vec![0; classes * classes],
        })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let mut cm = Self::zeros(rows.len())?;
        for (t, row) in rows.iter().enumerate() {
            if row.len() != cm.classes {
                return Err(MetricsError::LengthMismatch {
                    predictions: row.len(),
                    labels: cm.classes,
                });
            }
            cm.counts[t * cm.classes..(t + 1) * cm.classes].copy_from_slice(row);
        }
        Ok(cm)
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.get(c, c)
    }

    /// Row sum.
    pub fn support(&self, c: usize) -> u64 {
        (0..self.classes).map(|p| self.get(c, p)).sum()
    }

    /// Column sum.
    pub fn predicted(&self, c: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, c)).sum()
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        self.predicted(c) - self.get(c, c)
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        self.support(c) - self.get(c, c)
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes).map(<[u64]>::to_vec).collect()
    }
}

pub fn confusion_matrix(predictions: &[usize], labels: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(classes)?;
    for (&p, &t) in predictions.iter().zip(labels) {
        for index in [p, t] {
            if index >= classes {
                return Err(MetricsError::IndexOutOfRange { index, classes });
            }
        }
        cm.counts[t * classes + p] += 1;
    }
    Ok(cm)
}

#[inline]
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let trace: u64 = (0..cm.classes).map(|c| cm.get(c, c)).sum();
    Ok(trace as f64 / total as f64)
}

/// Per-class `(precision, recall)`.
pub fn precision_recall(cm: &ConfusionMatrix) -> (Vec<f64>, Vec<f64>) {
    (0..cm.classes)
        .map(|c| {
            let tp = cm.true_positives(c);
            (
                ratio(tp, tp + cm.false_positives(c)),
                ratio(tp, tp + cm.false_negatives(c)),
            )
        })
        .unzip()
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Scores {
    pub per_class: Vec<f64>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

#[inline]
fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Mean of `values` over classes with nonzero support.
fn supported_mean(cm: &ConfusionMatrix, values: &[f64]) -> f64 {
    let (sum, n) = (0..cm.classes)
        .filter(|&c| cm.support(c) > 0)
        .fold((0.0, 0usize), |(s, n), c| (s + values[c], n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn f1_scores(cm: &ConfusionMatrix) -> F1Scores {
    let (precision, recall) = precision_recall(cm);
    let per_class: Vec<f64> = precision.iter().zip(&recall).map(|(&p, &r)| harmonic(p, r)).collect();
    let total = cm.total();
    let weighted_f1 = if total == 0 {
        0.0
    } else {
        (0..cm.classes)
            .map(|c| cm.support(c) as f64 * per_class[c])
            .sum::<f64>()
            / total as f64
    };
    F1Scores {
        macro_f1: supported_mean(cm, &per_class),
        per_class,
        weighted_f1,
    }
}

/// `N` probability rows of length `C` with their true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    classes: usize,
    probs: Vec<f64>,
    labels: Vec<usize>,
}

const ROW_SUM_TOLERANCE: f64 = 1e-6;

impl ScoreMatrix {
    /// Validates that each row is a probability vector and each label a
    /// valid class index.
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let classes = rows.first().map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(rows.len() * classes);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != classes {
                return Err(MetricsError::InvalidScores {
                    row: i,
                    reason: format!("expected {classes} columns, found {}", row.len()),
                });
            }
            probs.extend_from_slice(row);
        }
        Self::from_flat(classes, probs, labels)
    }

    pub fn from_flat(classes: usize, probs: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if classes < 2 {
            return Err(MetricsError::TooFewClasses(classes));
        }
        if probs.len() != labels.len() * classes {
            return Err(MetricsError::LengthMismatch {
                predictions: probs.len() / classes,
                labels: labels.len(),
            });
        }
        for (i, row) in probs.chunks(classes).enumerate() {
            if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(MetricsError::InvalidScores {
                    row: i,
                    reason: format!("probability {p} outside [0, 1]"),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(MetricsError::InvalidScores {
                    row: i,
                    reason: format!("row sums to {sum}"),
                });
            }
        }
        if let Some(&index) = labels.iter().find(|&&l| l >= classes) {
            return Err(MetricsError::IndexOutOfRange { index, classes });
        }
        Ok(Self { classes, probs, labels })
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.classes..(i + 1) * self.classes]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Row-wise argmax, lowest index on ties.
    pub fn predictions(&self) -> Vec<usize> {
        self.probs
            .chunks(self.classes)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold(0, |best, (c, &p)| if p > row[best] { c } else { best })
            })
            .collect()
    }
}

/// AUC of `scores` for the binary split given by `positive`, or `None`
/// when either side is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based midranks of the positives, doubled to stay integral.
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u64;
        let pos_in_run = order[i..=j].iter().filter(|&&k| positive[k]).count() as u64;
        twice_rank_sum += twice_mid * pos_in_run;
        i = j + 1;
    }
    let (np, nn) = (n_pos as u64, n_neg as u64);
    // 2U = 2R - n_pos (n_pos + 1)
    let twice_u = twice_rank_sum - np * (np + 1);
    Some(twice_u as f64 / (2 * np * nn) as f64)
}

/// Per-class one-vs-rest AUC and their mean over defined classes.
pub fn ovr_auc(scores: &ScoreMatrix) -> Result<(Vec<Option<f64>>, f64)> {
    let per_class: Vec<Option<f64>> = (0..scores.classes)
        .map(|c| {
            let column: Vec<f64> = (0..scores.len()).map(|i| scores.row(i)[c]).collect();
            let positive: Vec<bool> = scores.labels.iter().map(|&l| l == c).collect();
            binary_auc(&column, &positive)
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(MetricsError::DegenerateLabels);
    }
    let macro_auc = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok((per_class, macro_auc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision_per_class: Vec<f64>,
    pub recall_per_class: Vec<f64>,
    pub f1_per_class: Vec<f64>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    /// `None` where a class lacks positives or negatives.
    pub auc_per_class: Vec<Option<f64>>,
    /// `None` when no class has both positives and negatives.
    pub macro_auc: Option<f64>,
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

impl MetricsReport {
    /// Copy with every real rounded to 6 decimal places.
    pub fn rounded(&self) -> MetricsReport {
        let v = |xs: &[f64]| xs.iter().map(|&x| round6(x)).collect();
        MetricsReport {
            accuracy: round6(self.accuracy),
            precision_per_class: v(&self.precision_per_class),
            recall_per_class: v(&self.recall_per_class),
            f1_per_class: v(&self.f1_per_class),
            macro_precision: round6(self.macro_precision),
            macro_recall: round6(self.macro_recall),
            macro_f1: round6(self.macro_f1),
            weighted_f1: round6(self.weighted_f1),
            auc_per_class: self.auc_per_class.iter().map(|a| a.map(round6)).collect(),
            macro_auc: self.macro_auc.map(round6),
        }
    }

    /// Sorted-key JSON with 6-decimal reals.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.rounded()).expect("report serializes")
    }
}

pub fn evaluate(scores: &ScoreMatrix) -> Result<MetricsReport> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyMatrix);
    }
    let cm = confusion_matrix(&scores.predictions(), &scores.labels, scores.classes)?;
    let (precision, recall) = precision_recall(&cm);
    let f1 = f1_scores(&cm);
    let (auc_per_class, macro_auc) = match ovr_auc(scores) {
        Ok((per, m)) => (per, Some(m)),
        Err(MetricsError::DegenerateLabels) => (vec![None; scores.classes], None),
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        accuracy: accuracy(&cm)?,
        macro_precision: supported_mean(&cm, &precision),
        macro_recall: supported_mean(&cm, &recall),
        precision_per_class: precision,
        recall_per_class: recall,
        f1_per_class: f1.per_class,
        macro_f1: f1.macro_f1,
        weighted_f1: f1.weighted_f1,
        auc_per_class,
        macro_auc,
    })
}

/// Reads an `id,label,p0,...,p{C-1}` CSV.
pub fn read_score_csv(reader: impl Read) -> Result<(Vec<String>, ScoreMatrix)> {
    let err = |m: String| MetricsError::ScoreFile(m);
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    let classes = headers.len().saturating_sub(2);
    let expected: Vec<String> = ["id".to_string(), "label".to_string()]
        .into_iter()
        .chain((0..classes).map(|c| format!("p{c}")))
        .collect();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(err(format!(
            "header must be `id,label,p0,...`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let (mut ids, mut labels, mut probs) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| err(format!("row {}: {e}", i + 2)))?;
        ids.push(rec[0].to_string());
        labels.push(
            rec[1]
                .parse()
                .map_err(|_| err(format!("row {}: bad label {:?}", i + 2, &rec[1])))?,
        );
        for c in 0..classes {
            probs.push(
                rec[c + 2]
                    .parse::<f64>()
                    .map_err(|_| err(format!("row {}: bad probability {:?}", i + 2, &rec[c + 2])))?,
            );
        }
    }
    Ok((ids, ScoreMatrix::from_flat(classes, probs, labels)?))
}

pub fn load_score_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, ScoreMatrix)> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| MetricsError::ScoreFile(format!("{}: {e}", path.display())))?;
    read_score_csv(f)
}

/// Writes scores at full round-trip precision.
pub fn write_score_csv(path: impl AsRef<Path>, ids: &[String], scores: &ScoreMatrix) -> Result<()> {
    let path = path.as_ref();
    let err = |e: csv::Error| MetricsError::ScoreFile(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..scores.classes).map(|c| format!("p{c}")));
    w.write_record(&header).map_err(err)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone(), scores.labels[i].to_string()];
        rec.extend(scores.row(i).iter().map(|p| p.to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| MetricsError::ScoreFile(e.to_string()))
}

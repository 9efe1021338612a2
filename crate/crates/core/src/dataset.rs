//! Manifest ingestion, label remapping, stratified splitting, balance
//! planning and pixel normalization.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageops::ImageRgb;
use crate::rng::{derive_seed, CounterRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("manifest is missing the `id_code,diagnosis` header")]
    MissingHeader,
    #[error("row {row}: bad grade {value:?}")]
    BadGrade { row: usize, value: String },
    #[error("row {row}: duplicate id {id:?}")]
    DuplicateId { row: usize, id: String },
    #[error("row {row}: empty image id")]
    EmptyId { row: usize },
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("validation subset already carved")]
    AlreadyCarved,
    #[error("target {target} is smaller than class {class} size {count}")]
    TargetTooSmall { class: usize, count: usize, target: usize },
    #[error("fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("normalization std must be positive, got {0:?}")]
    InvalidStats([f64; 3]),
    #[error("row {row}: unknown subset {value:?}")]
    BadSubset { row: usize, value: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Severity grade 0 (no DR) through 4 (proliferative).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct GradeLabel(u8);

impl GradeLabel {
    pub fn new(grade: u8) -> Option<Self> {
        (grade <= 4).then_some(Self(grade))
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for GradeLabel {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        GradeLabel::new(v).ok_or_else(|| format!("grade {v} outside 0..=4"))
    }
}

impl From<GradeLabel> for u8 {
    fn from(g: GradeLabel) -> u8 {
        g.0
    }
}

/// 0 = normal, 1 = DR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BinaryLabel(u8);

impl BinaryLabel {
    pub fn value(self) -> u8 {
        self.0
    }
}

/// Grade 0 maps to 0; grades 1 through 4 map to 1.
pub fn binarize_label(grade: GradeLabel) -> BinaryLabel {
    BinaryLabel(u8::from(grade.0 > 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Multiclass,
}

impl Task {
    pub fn class_count(self) -> usize {
        match self {
            Task::Binary => 2,
            Task::Multiclass => 5,
        }
    }

    pub fn label(self, grade: GradeLabel) -> usize {
        match self {
            Task::Binary => binarize_label(grade).value() as usize,
            Task::Multiclass => grade.value() as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub grade: GradeLabel,
}

/// An image id with its task-specific class index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabeledEntry {
    pub image_id: String,
    pub label: usize,
}

pub fn label_entries(entries: &[ManifestEntry], task: Task) -> Vec<LabeledEntry> {
    entries
        .iter()
        .map(|e| LabeledEntry {
            image_id: e.image_id.clone(),
            label: task.label(e.grade),
        })
        .collect()
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    parse_manifest(file)
}

/// Parses an `id_code,diagnosis` CSV. Row numbers in errors count the
/// header as row 1.
pub fn parse_manifest(reader: impl Read) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|_| DatasetError::MissingHeader)?.clone();
    let id_col = headers.iter().position(|h| h.trim() == "id_code");
    let grade_col = headers.iter().position(|h| h.trim() == "diagnosis");
    let (Some(id_col), Some(grade_col)) = (id_col, grade_col) else {
        return Err(DatasetError::MissingHeader);
    };

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| DatasetError::Csv(format!("row {row}: {e}")))?;
        let id = rec.get(id_col).unwrap_or("").trim();
        if id.is_empty() {
            return Err(DatasetError::EmptyId { row });
        }
        let raw = rec.get(grade_col).unwrap_or("").trim();
        let grade = raw
            .parse::<u8>()
            .ok()
            .and_then(GradeLabel::new)
            .ok_or_else(|| DatasetError::BadGrade {
                row,
                value: raw.to_string(),
            })?;
        if !seen.insert(id.to_string()) {
            return Err(DatasetError::DuplicateId {
                row,
                id: id.to_string(),
            });
        }
        out.push(ManifestEntry {
            image_id: id.to_string(),
            grade,
        });
    }
    Ok(out)
}

/// `round_half_even(frac * n)`.
pub fn stratum_count(frac: f64, n: usize) -> usize {
    (frac * n as f64).round_ties_even() as usize
}

pub fn class_counts(entries: &[LabeledEntry]) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for e in entries {
        *counts.entry(e.label).or_insert(0) += 1;
    }
    counts
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(DatasetError::InvalidFraction(f))
    }
}

/// Shuffles each class with a generator keyed by `(seed, tag, class)` and
/// moves the first `round_half_even(frac * n_c)` entries to the first list.
fn stratify(entries: &[LabeledEntry], frac: f64, seed: u64, tag: &str) -> (Vec<LabeledEntry>, Vec<LabeledEntry>) {
    let mut by_class: BTreeMap<usize, Vec<LabeledEntry>> = BTreeMap::new();
    for e in entries {
        by_class.entry(e.label).or_default().push(e.clone());
    }
    let (mut first, mut rest) = (Vec::new(), Vec::new());
    for (class, mut members) in by_class {
        CounterRng::new(derive_seed(seed, tag, class as u64), 0).shuffle(&mut members);
        let k = stratum_count(frac, members.len());
        let tail = members.split_off(k);
        first.extend(members);
        rest.extend(tail);
    }
    (first, rest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledEntry>,
    pub validation: Vec<LabeledEntry>,
    pub test: Vec<LabeledEntry>,
    pub seed: u64,
    /// `(train_frac, val_frac)`; `val_frac` is 0 until validation is carved.
    pub ratios: (f64, f64),
}

/// Per-class train/test split; validation is left empty.
pub fn stratified_split(entries: &[LabeledEntry], train_frac: f64, seed: u64) -> Result<DatasetSplit> {
    check_fraction(train_frac)?;
    if entries.is_empty() {
        return Err(DatasetError::EmptyManifest);
    }
    let (train, test) = stratify(entries, train_frac, seed, "split");
    Ok(DatasetSplit {
        train,
        validation: Vec::new(),
        test,
        seed,
        ratios: (train_frac, 0.0),
    })
}

/// Moves `round_half_even(val_frac * n_c)` of each training class into
/// validation. The test list is untouched.
pub fn carve_validation(split: &DatasetSplit, val_frac: f64, seed: u64) -> Result<DatasetSplit> {
    check_fraction(val_frac)?;
    if !split.validation.is_empty() {
        return Err(DatasetError::AlreadyCarved);
    }
    let (validation, train) = stratify(&split.train, val_frac, seed, "validation");
    Ok(DatasetSplit {
        train,
        validation,
        test: split.test.clone(),
        seed: split.seed,
        ratios: (split.ratios.0, val_frac),
    })
}

/// Number of extra samples each class needs to reach `target`.
pub fn balance_plan(class_counts: &BTreeMap<usize, usize>, target: usize) -> Result<BTreeMap<usize, usize>> {
    class_counts
        .iter()
        .map(|(&class, &count)| {
            target
                .checked_sub(count)
                .map(|extra| (class, extra))
                .ok_or(DatasetError::TargetTooSmall { class, count, target })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Val,
    Test,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Val => "val",
            Subset::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRow {
    pub entry: LabeledEntry,
    pub subset: Subset,
}

impl DatasetSplit {
    /// Rows in train, val, test order.
    pub fn rows(&self) -> Vec<SplitRow> {
        let tag = |list: &[LabeledEntry], subset| {
            list.iter()
                .map(|e| SplitRow {
                    entry: e.clone(),
                    subset,
                })
                .collect::<Vec<_>>()
        };
        let mut rows = tag(&self.train, Subset::Train);
        rows.extend(tag(&self.validation, Subset::Val));
        rows.extend(tag(&self.test, Subset::Test));
        rows
    }
}

/// Writes `id_code,diagnosis,subset` rows; `diagnosis` holds the task label.
pub fn write_split_csv(path: impl AsRef<Path>, rows: &[SplitRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| DatasetError::Csv(e.to_string());
    w.write_record(["id_code", "diagnosis", "subset"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.entry.image_id.as_str(), &r.entry.label.to_string(), r.subset.as_str()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| DatasetError::Io(e.to_string()))
}

pub fn read_split_csv(path: impl AsRef<Path>) -> Result<Vec<SplitRow>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|_| DatasetError::MissingHeader)?;
    if headers.iter().collect::<Vec<_>>() != ["id_code", "diagnosis", "subset"] {
        return Err(DatasetError::MissingHeader);
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| DatasetError::Csv(format!("row {row}: {e}")))?;
        let label = rec[1].parse::<usize>().map_err(|_| DatasetError::BadGrade {
            row,
            value: rec[1].to_string(),
        })?;
        let subset = match &rec[2] {
            "train" => Subset::Train,
            "val" => Subset::Val,
            "test" => Subset::Test,
            other => {
                return Err(DatasetError::BadSubset {
                    row,
                    value: other.to_string(),
                })
            }
        };
        rows.push(SplitRow {
            entry: LabeledEntry {
                image_id: rec[0].to_string(),
                label,
            },
            subset,
        });
    }
    Ok(rows)
}

/// Per-channel mean and standard deviation as fractions of full scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for NormalizationStats {
    /// ImageNet channel statistics.
    fn default() -> Self {
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

impl NormalizationStats {
    pub const IDENTITY: NormalizationStats = NormalizationStats {
        mean: [0.0; 3],
        std: [1.0; 3],
    };

    pub fn new(mean: [f64; 3], std: [f64; 3]) -> Result<Self> {
        let s = Self { mean, std };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.std.iter().all(|s| s.is_finite() && *s > 0.0) && self.mean.iter().all(|m| m.is_finite()) {
            Ok(())
        } else {
            Err(DatasetError::InvalidStats(self.std))
        }
    }

    #[inline]
    pub fn normalize(&self, channel: usize, v: f64) -> f64 {
        (v / 255.0 - self.mean[channel]) / self.std[channel]
    }

    #[inline]
    pub fn denormalize(&self, channel: usize, z: f64) -> f64 {
        (z * self.std[channel] + self.mean[channel]) * 255.0
    }
}

/// Channel-major `3 x H x W` tensor of `(v / 255 - mean) / std`.
pub fn normalize_image(img: &ImageRgb, stats: &NormalizationStats) -> Vec<f64> {
    let plane = img.width() * img.height();
    let mut out = vec![0.0; plane * 3];
    for (i, px) in img.data().chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * plane + i] = stats.normalize(c, px[c] as f64);
        }
    }
    out
}

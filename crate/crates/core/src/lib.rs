//! Class-balanced augmentation, stratified splitting, softmax-head training
//! and multiclass evaluation for retinal image grading.
//!
//! The crate is organised bottom-up: [`imageops`] holds pure pixel
//! transforms, [`augment`] draws and applies random pipelines and
//! oversamples classes, [`dataset`] handles manifests and splits,
//! [`trainer`] fits a linear softmax head with Adam, and [`metrics`]
//! scores predictions.

pub mod augment;
pub mod dataset;
pub mod imageops;
pub mod metrics;
pub mod rng;
pub mod trainer;

pub use augment::{AugmentRecord, PipelineConfig, SampledPipeline};
pub use dataset::{DatasetSplit, GradeLabel, LabeledEntry, ManifestEntry, NormalizationStats, Task};
pub use imageops::{AffineMatrix, Homography, ImageRgb, Rgb};
pub use metrics::{ConfusionMatrix, MetricsReport, ScoreMatrix};
pub use trainer::{AdamState, EpochLog, FeatureExtractor, FeatureSet, LinearHead, TrainConfig};

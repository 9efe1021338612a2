//! The JSON run configuration.

use std::path::{Path, PathBuf};

use gradebal::augment::PipelineConfig;
use gradebal::dataset::{NormalizationStats, Task};
use gradebal::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub manifest_csv: PathBuf,
    pub image_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Precomputed `id,label,p0,...` scores; when set, `evaluate` scores
    /// this file instead of running the checkpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_frac: 0.85,
            val_frac: 0.10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceConfig {
    /// Final per-class size of the training set, originals included.
    pub target_per_class: usize,
    /// Global seed for augmentation draws.
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            target_per_class: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    pub side: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self { side: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub paths: Paths,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub balance: BalanceConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub extractor: ExtractorConfig,
    #[serde(default)]
    pub normalization: NormalizationStats,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::ConfigInvalid(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.resolve_against(base);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.paths;
        for (name, v) in [
            ("manifest_csv", &p.manifest_csv),
            ("image_dir", &p.image_dir),
            ("out_dir", &p.out_dir),
        ] {
            if v.as_os_str().is_empty() {
                return Err(invalid(format!("paths.{name} is empty")));
            }
        }
        if p.scores_csv.as_ref().is_some_and(|s| s.as_os_str().is_empty()) {
            return Err(invalid("paths.scores_csv is empty"));
        }
        for (name, f) in [
            ("split.train_frac", self.split.train_frac),
            ("split.val_frac", self.split.val_frac),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(invalid(format!("{name} must lie strictly between 0 and 1, got {f}")));
            }
        }
        if self.balance.target_per_class == 0 {
            return Err(invalid("balance.target_per_class must be at least 1"));
        }
        if self.extractor.side == 0 {
            return Err(invalid("extractor.side must be at least 1"));
        }
        self.pipeline.validate().map_err(|e| invalid(e.to_string()))?;
        self.train.validate().map_err(|e| invalid(e.to_string()))?;
        self.normalization.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical (sorted-key, compact) JSON of the config.
    pub fn config_hash(&self) -> [u8; 32] {
        sha256_json(&serde_json::to_value(self).expect("config serializes"))
    }

    /// Hash of the settings a checkpoint must agree on to be scored:
    /// task, extractor and normalization.
    pub fn compat_hash(&self) -> [u8; 32] {
        sha256_json(&serde_json::json!({
            "extractor": self.extractor,
            "normalization": self.normalization,
            "task": self.task,
        }))
    }
}

impl Paths {
    fn resolve_against(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.manifest_csv);
        fix(&mut self.image_dir);
        fix(&mut self.out_dir);
        if let Some(s) = self.scores_csv.as_mut() {
            fix(s);
        }
    }
}

fn sha256_json(v: &serde_json::Value) -> [u8; 32] {
    Sha256::digest(v.to_string().as_bytes()).into()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"task":"multiclass","paths":{"manifest_csv":"m.csv","image_dir":"img","out_dir":"out"}}"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.split, SplitConfig::default());
        assert_eq!(cfg.balance.target_per_class, 20_000);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.train.learning_rate, 1e-4);
        assert_eq!(cfg.extractor.side, 32);
        assert_eq!(cfg.pipeline.out_size, 224);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            r#"{"task":"multiclass","paths":{"manifest_csv":"","image_dir":"i","out_dir":"o"}}"#,
            r#"{"task":"ternary","paths":{"manifest_csv":"m","image_dir":"i","out_dir":"o"}}"#,
            r#"{"task":"binary","paths":{"manifest_csv":"m","image_dir":"i","out_dir":"o"},"split":{"train_frac":1.0}}"#,
            r#"{"task":"binary","paths":{"manifest_csv":"m","image_dir":"i","out_dir":"o"},"balance":{"target_per_class":0}}"#,
            r#"{"task":"binary","paths":{"manifest_csv":"m","image_dir":"i","out_dir":"o"},"train":{"patience":0}}"#,
            r#"{"task":"binary","paths":{"manifest_csv":"m","image_dir":"i","out_dir":"o"},"bogus":1}"#,
        ];
        for text in bad {
            assert!(
                matches!(RunConfig::from_json(text), Err(CliError::ConfigInvalid(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn hashes() {
        let a = RunConfig::from_json(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.train.seed = 9;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.compat_hash(), b.compat_hash());
        b.extractor.side = 16;
        assert_ne!(a.compat_hash(), b.compat_hash());
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, MINIMAL).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.paths.image_dir, dir.path().join("img"));
    }
}

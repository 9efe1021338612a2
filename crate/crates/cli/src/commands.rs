//! The pipeline stages behind `--command`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gradebal::augment::{self, DirSink, SourceImage};
use gradebal::dataset::{self, SplitRow, Subset};
use gradebal::imageops::ImageRgb;
use gradebal::metrics::{self, MetricsReport};
use gradebal::trainer::{self, CheckpointMeta, FeatureExtractor, FeatureSet, LinearHead, ReferenceExtractor};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::store::ImageStore;

pub const SPLIT_CSV: &str = "split.csv";
pub const SPLIT_COUNTS_JSON: &str = "split_counts.json";
pub const BALANCE_PLAN_JSON: &str = "balance_plan.json";
pub const AUGMENTED_DIR: &str = "augmented";
pub const AUGMENT_LOG: &str = "augment_log.jsonl";
pub const CHECKPOINT: &str = "head.ckpt";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const SCORES_CSV: &str = "scores.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const RUN_REPORT_JSON: &str = "run_report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Split,
    Balance,
    Augment,
    Train,
    Evaluate,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Split => "split",
            Command::Balance => "balance",
            Command::Augment => "augment",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::All => "all",
        }
    }
}

/// Executes stages against one validated config.
#[derive(Debug)]
pub struct Runner {
    cfg: RunConfig,
    config_hash: String,
    workers: usize,
    verbose: bool,
    store: ImageStore,
    pool: rayon::ThreadPool,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::DataError(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_value(r).expect("row serializes").to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::DataError(format!("{}: {e}", path.display())))
}

fn require(path: PathBuf) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact(path.display().to_string()))
    }
}

fn class_table(counts: &BTreeMap<usize, BTreeMap<&'static str, usize>>) -> Value {
    Value::Object(counts.iter().map(|(c, row)| (c.to_string(), json!(row))).collect())
}

impl Runner {
    pub fn new(cfg: RunConfig, workers: usize, verbose: bool) -> Result<Self, CliError> {
        let workers = workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::module("cli", e))?;
        Ok(Self {
            config_hash: hex::encode(cfg.config_hash()),
            store: ImageStore::new(&cfg.paths.image_dir),
            cfg,
            workers,
            verbose,
            pool,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn store(&self) -> &ImageStore {
        &self.store
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.cfg.paths.out_dir.join(name)
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[gradebal] {}", msg.as_ref());
        }
    }

    pub fn run(&self, cmd: Command) -> Result<(), CliError> {
        fs::create_dir_all(&self.cfg.paths.out_dir).map_err(|e| io_err(&self.cfg.paths.out_dir, e))?;
        let started = Instant::now();
        match cmd {
            Command::Split => self.split(),
            Command::Balance => self.guarded(|| self.balance()),
            Command::Augment => self.guarded(|| self.augment()),
            Command::Train => self.guarded(|| self.train()),
            Command::Evaluate => self.evaluate(),
            Command::All => {
                for stage in [
                    Command::Split,
                    Command::Balance,
                    Command::Augment,
                    Command::Train,
                    Command::Evaluate,
                ] {
                    self.run(stage)?;
                }
                Ok(())
            }
        }?;
        self.log(format!(
            "{} finished in {:.2}s",
            cmd.name(),
            started.elapsed().as_secs_f64()
        ));
        Ok(())
    }

    /// Runs `f` with every test-subset image on the store's deny list.
    fn guarded(&self, f: impl FnOnce() -> Result<(), CliError>) -> Result<(), CliError> {
        let rows = self.split_rows()?;
        self.store.deny(
            rows.into_iter()
                .filter(|r| r.subset == Subset::Test)
                .map(|r| r.entry.image_id),
        );
        let out = f();
        self.store.allow_all();
        out
    }

    fn split_rows(&self) -> Result<Vec<SplitRow>, CliError> {
        let rows = dataset::read_split_csv(require(self.out(SPLIT_CSV))?)?;
        let classes = self.cfg.task.class_count();
        if let Some(r) = rows.iter().find(|r| r.entry.label >= classes) {
            return Err(CliError::DataError(format!(
                "{SPLIT_CSV}: label {} of {:?} is out of range for this task",
                r.entry.label, r.entry.image_id
            )));
        }
        Ok(rows)
    }

    fn subset(rows: &[SplitRow], subset: Subset) -> Vec<(String, usize)> {
        rows.iter()
            .filter(|r| r.subset == subset)
            .map(|r| (r.entry.image_id.clone(), r.entry.label))
            .collect()
    }

    fn hashed(&self, mut body: Value) -> Value {
        body["config_hash"] = json!(self.config_hash);
        body
    }

    pub fn split(&self) -> Result<(), CliError> {
        let path = &self.cfg.paths.manifest_csv;
        if !path.exists() {
            return Err(CliError::MissingArtifact(path.display().to_string()));
        }
        let entries = dataset::label_entries(&dataset::load_manifest(path)?, self.cfg.task);
        let s = &self.cfg.split;
        let split = dataset::stratified_split(&entries, s.train_frac, s.seed)?;
        let split = dataset::carve_validation(&split, s.val_frac, s.seed)?;
        dataset::write_split_csv(self.out(SPLIT_CSV), &split.rows())?;

        let mut table: BTreeMap<usize, BTreeMap<&'static str, usize>> = BTreeMap::new();
        for (key, list) in [
            ("train", &split.train),
            ("val", &split.validation),
            ("test", &split.test),
        ] {
            for (class, n) in dataset::class_counts(list) {
                let row = table
                    .entry(class)
                    .or_insert_with(|| ["train", "val", "test"].into_iter().map(|k| (k, 0)).collect());
                *row.get_mut(key).unwrap() = n;
            }
        }
        for row in table.values_mut() {
            let pool = row["train"] + row["val"];
            row.insert("train_pool", pool);
            row.insert("total", pool + row["test"]);
        }
        write_json(
            &self.out(SPLIT_COUNTS_JSON),
            &self.hashed(json!({ "classes": class_table(&table), "total": entries.len() })),
        )?;
        self.log(format!(
            "split {} images: {} train, {} val, {} test",
            entries.len(),
            split.train.len(),
            split.validation.len(),
            split.test.len()
        ));
        Ok(())
    }

    fn train_counts(&self) -> Result<BTreeMap<usize, usize>, CliError> {
        let train = Self::subset(&self.split_rows()?, Subset::Train);
        let mut counts = BTreeMap::new();
        for (_, c) in train {
            *counts.entry(c).or_insert(0) += 1;
        }
        Ok(counts)
    }

    pub fn balance(&self) -> Result<(), CliError> {
        let counts = self.train_counts()?;
        let target = self.cfg.balance.target_per_class;
        let plan = dataset::balance_plan(&counts, target)?;
        let table = counts
            .iter()
            .map(|(&c, &n)| {
                (
                    c,
                    BTreeMap::from([("train", n), ("extra", plan[&c]), ("total", n + plan[&c])]),
                )
            })
            .collect();
        write_json(
            &self.out(BALANCE_PLAN_JSON),
            &self.hashed(json!({ "classes": class_table(&table), "target_per_class": target })),
        )?;
        self.log(format!("balance plan: {} extra images", plan.values().sum::<usize>()));
        Ok(())
    }

    pub fn augment(&self) -> Result<(), CliError> {
        let train = Self::subset(&self.split_rows()?, Subset::Train);
        let loaded: Vec<ImageRgb> = self.pool.install(|| {
            train
                .par_iter()
                .map(|(id, _)| self.store.load(id))
                .collect::<Result<_, _>>()
        })?;
        let mut by_class: BTreeMap<usize, Vec<SourceImage>> = BTreeMap::new();
        for ((id, class), img) in train.into_iter().zip(loaded) {
            by_class.entry(class).or_default().push((id, img));
        }

        let dir = self.out(AUGMENTED_DIR);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let records = augment::generate_balanced(
            &by_class,
            self.cfg.balance.target_per_class,
            &self.cfg.pipeline,
            self.cfg.balance.seed,
            self.workers,
            &DirSink::new(&dir),
        )?;
        augment::write_augment_log(dir.join(AUGMENT_LOG), &records)?;
        self.log(format!("augment wrote {} replicas", records.len()));
        Ok(())
    }

    fn extractor(&self) -> ReferenceExtractor {
        ReferenceExtractor::new(self.cfg.extractor.side, self.cfg.normalization)
    }

    fn features(&self, images: &[ImageRgb], labels: Vec<usize>) -> Result<FeatureSet, CliError> {
        let ex = self.extractor();
        let rows = self.pool.install(|| trainer::extract_all(&ex, images));
        Ok(FeatureSet::from_rows(ex.dim(), rows, labels)?)
    }

    fn load_from_store(&self, items: &[(String, usize)]) -> Result<(Vec<ImageRgb>, Vec<usize>), CliError> {
        let images = self.pool.install(|| {
            items
                .par_iter()
                .map(|(id, _)| self.store.load(id))
                .collect::<Result<Vec<_>, _>>()
        })?;
        Ok((images, items.iter().map(|(_, c)| *c).collect()))
    }

    pub fn train(&self) -> Result<(), CliError> {
        let rows = self.split_rows()?;
        let dir = self.out(AUGMENTED_DIR);
        let records = augment::read_augment_log(require(dir.join(AUGMENT_LOG))?)?;

        let mut items: Vec<(PathBuf, usize)> = Self::subset(&rows, Subset::Train)
            .into_iter()
            .map(|(id, c)| (dir.join(augment::original_path(c, &id)), c))
            .collect();
        for r in &records {
            let class = r
                .output_path
                .split('/')
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| CliError::DataError(format!("{AUGMENT_LOG}: bad output path {:?}", r.output_path)))?;
            items.push((dir.join(&r.output_path), class));
        }
        let images = self.pool.install(|| {
            items
                .par_iter()
                .map(|(p, _)| ImageRgb::read(require(p.clone())?).map_err(|e| CliError::DataError(e.to_string())))
                .collect::<Result<Vec<_>, _>>()
        })?;
        let train = self.features(&images, items.iter().map(|(_, c)| *c).collect())?;
        drop(images);

        let (val_images, val_labels) = self.load_from_store(&Self::subset(&rows, Subset::Val))?;
        let validation = self.features(&val_images, val_labels)?;

        self.log(format!(
            "training on {} samples, validating on {}",
            train.len(),
            validation.len()
        ));
        let head = LinearHead::zeros(self.cfg.task.class_count(), train.dim());
        let outcome = trainer::fit(&train, &validation, head, &self.cfg.train)?;
        for l in &outcome.logs {
            self.log(format!(
                "epoch {:>4} loss {:.6} val macro F1 {:.4}{}",
                l.epoch,
                l.train_loss,
                l.val_macro_f1,
                if l.is_best { " *" } else { "" }
            ));
        }
        let meta = CheckpointMeta {
            seed: self.cfg.train.seed,
            config_hash: self.cfg.config_hash(),
            compat_hash: self.cfg.compat_hash(),
        };
        trainer::save_checkpoint(self.out(CHECKPOINT), &outcome.best_head, &meta)?;
        write_jsonl(&self.out(TRAIN_LOG), &outcome.logs)?;
        self.log(format!("best epoch {}", outcome.best_epoch));
        Ok(())
    }

    fn score_test_set(&self) -> Result<MetricsReport, CliError> {
        let (head, meta) = trainer::load_checkpoint(require(self.out(CHECKPOINT))?)?;
        if meta.compat_hash != self.cfg.compat_hash() {
            return Err(CliError::ConfigInvalid(
                "checkpoint was trained with different task, extractor or normalization settings".into(),
            ));
        }
        let ex = self.extractor();
        if head.classes() != self.cfg.task.class_count() || head.dim() != ex.dim() {
            return Err(CliError::ConfigInvalid(format!(
                "checkpoint shape {}x{} does not match the config",
                head.classes(),
                head.dim()
            )));
        }
        let test = Self::subset(&self.split_rows()?, Subset::Test);
        let (images, labels) = self.load_from_store(&test)?;
        let features = self.features(&images, labels)?;
        let scores = trainer::predict_scores(&head, &features)?;
        let ids: Vec<String> = test.into_iter().map(|(id, _)| id).collect();
        metrics::write_score_csv(self.out(SCORES_CSV), &ids, &scores)?;
        Ok(metrics::evaluate(&scores)?)
    }

    pub fn evaluate(&self) -> Result<(), CliError> {
        let (report, checkpoint) = match &self.cfg.paths.scores_csv {
            Some(path) => {
                let (_, scores) =
                    metrics::load_score_csv(require(path.clone())?).map_err(|e| CliError::DataError(e.to_string()))?;
                if scores.class_count() != self.cfg.task.class_count() {
                    return Err(CliError::DataError(format!(
                        "scores have {} classes, task needs {}",
                        scores.class_count(),
                        self.cfg.task.class_count()
                    )));
                }
                (metrics::evaluate(&scores)?, None)
            }
            None => (self.score_test_set()?, Some(CHECKPOINT)),
        };
        let metrics = report.to_json();
        write_json(&self.out(METRICS_JSON), &self.hashed(json!({ "metrics": metrics })))?;

        let optional = |name: &str| -> Result<Value, CliError> {
            let p = self.out(name);
            if !p.exists() {
                return Ok(Value::Null);
            }
            let mut v = read_json(&p)?;
            Ok(v.get_mut("classes").map(Value::take).unwrap_or(Value::Null))
        };
        let run_report = self.hashed(json!({
            "balance_counts": optional(BALANCE_PLAN_JSON)?,
            "checkpoint_path": checkpoint,
            "metrics": metrics,
            "split_counts": optional(SPLIT_COUNTS_JSON)?,
        }));
        write_json(&self.out(RUN_REPORT_JSON), &run_report)?;
        self.log(format!(
            "accuracy {:.4}, macro F1 {:.4}, macro AUC {}",
            report.accuracy,
            report.macro_f1,
            report.macro_auc.map_or("n/a".to_string(), |a| format!("{a:.4}"))
        ));
        Ok(())
    }
}

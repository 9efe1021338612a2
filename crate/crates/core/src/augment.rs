//! Stochastic augmentation pipeline and class-balanced oversampling.
//!
//! A pipeline run is split in two: [`sample_pipeline`] materializes every
//! random parameter into a [`SampledPipeline`], and [`apply_pipeline`]
//! replays it. Stages run in this order:
//!
//! hflip, vflip, rotate, color jitter, resized crop, affine, blur,
//! sharpen, perspective.
//!
//! Each stage draws from its own generator stream (see [`crate::rng`]), so
//! gate outcomes and crop retries never shift another stage's draws.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, DatasetError};
use crate::imageops::{self, AffineParams, ColorOp, CropRect, FlipAxis, Homography, ImageOpError, ImageRgb, BLACK};
use crate::rng::{derive_seed, CounterRng};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("class {0} has no source images")]
    EmptyClass(usize),
    #[error("target {target} is smaller than class {class} size {count}")]
    TargetTooSmall { class: usize, count: usize, target: usize },
    #[error(transparent)]
    Image(#[from] ImageOpError),
    #[error("io: {0}")]
    Io(String),
}

impl From<DatasetError> for AugmentError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::TargetTooSmall { class, count, target } => {
                AugmentError::TargetTooSmall { class, count, target }
            }
            other => AugmentError::InvalidConfig(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, AugmentError>;

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn contains(&self, v: f64) -> bool {
        self.0 <= v && v <= self.1
    }

    fn valid(&self) -> bool {
        self.0.is_finite() && self.1.is_finite() && self.0 <= self.1
    }
}

/// Maximum deviation of each jitter factor from identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterConfig {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Hue shift bound as a fraction of a full turn, at most 0.5.
    pub hue: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self {
            brightness: 0.2,
            contrast: 0.2,
            saturation: 0.2,
            hue: 0.1,
        }
    }
}

impl JitterConfig {
    fn range(&self, op: ColorOp) -> Interval {
        match op {
            ColorOp::Brightness => Interval((1.0 - self.brightness).max(0.0), 1.0 + self.brightness),
            ColorOp::Contrast => Interval((1.0 - self.contrast).max(0.0), 1.0 + self.contrast),
            ColorOp::Saturation => Interval((1.0 - self.saturation).max(0.0), 1.0 + self.saturation),
            ColorOp::Hue => Interval(-self.hue, self.hue),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffineConfig {
    /// Max translation per axis, as a fraction of the frame size.
    pub translate_frac: f64,
    pub scale_range: Interval,
    /// Max shear per axis in degrees.
    pub shear_deg: f64,
}

impl Default for AffineConfig {
    fn default() -> Self {
        Self {
            translate_frac: 0.1,
            scale_range: Interval(0.9, 1.1),
            shear_deg: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlurConfig {
    pub kernel: usize,
    pub sigma_range: Interval,
}

impl Default for BlurConfig {
    fn default() -> Self {
        Self {
            kernel: 3,
            sigma_range: Interval(0.1, 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SharpnessConfig {
    pub factor: f64,
    pub p: f64,
}

impl Default for SharpnessConfig {
    fn default() -> Self {
        Self { factor: 2.0, p: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerspectiveConfig {
    pub distortion: f64,
    pub p: f64,
}

impl Default for PerspectiveConfig {
    fn default() -> Self {
        Self {
            distortion: 0.2,
            p: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub p_hflip: f64,
    pub p_vflip: f64,
    pub rotation_deg: Interval,
    pub jitter: JitterConfig,
    pub crop_scale: Interval,
    pub crop_ratio: Interval,
    pub affine: AffineConfig,
    pub blur: BlurConfig,
    pub sharpness: SharpnessConfig,
    pub perspective: PerspectiveConfig,
    pub out_size: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            p_hflip: 0.5,
            p_vflip: 0.5,
            rotation_deg: Interval(-25.0, 25.0),
            jitter: JitterConfig::default(),
            crop_scale: Interval(0.7, 1.0),
            crop_ratio: Interval(3.0 / 4.0, 4.0 / 3.0),
            affine: AffineConfig::default(),
            blur: BlurConfig::default(),
            sharpness: SharpnessConfig::default(),
            perspective: PerspectiveConfig::default(),
            out_size: 224,
        }
    }
}

impl PipelineConfig {
    /// A configuration whose every draw is the identity transform, with
    /// a 1-tap blur.
    pub fn identity(out_size: usize) -> Self {
        Self {
            p_hflip: 0.0,
            p_vflip: 0.0,
            rotation_deg: Interval(0.0, 0.0),
            jitter: JitterConfig {
                brightness: 0.0,
                contrast: 0.0,
                saturation: 0.0,
                hue: 0.0,
            },
            crop_scale: Interval(1.0, 1.0),
            crop_ratio: Interval(1.0, 1.0),
            affine: AffineConfig {
                translate_frac: 0.0,
                scale_range: Interval(1.0, 1.0),
                shear_deg: 0.0,
            },
            blur: BlurConfig {
                kernel: 1,
                sigma_range: Interval(1.0, 1.0),
            },
            sharpness: SharpnessConfig { factor: 2.0, p: 0.0 },
            perspective: PerspectiveConfig {
                distortion: 0.2,
                p: 0.0,
            },
            out_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(AugmentError::InvalidConfig(msg.to_string()));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(prob(self.p_hflip) && prob(self.p_vflip) && prob(self.sharpness.p) && prob(self.perspective.p)) {
            return bad("probabilities must lie in [0, 1]");
        }
        for (name, r) in [
            ("rotation_deg", self.rotation_deg),
            ("crop_scale", self.crop_scale),
            ("crop_ratio", self.crop_ratio),
            ("affine.scale_range", self.affine.scale_range),
            ("blur.sigma_range", self.blur.sigma_range),
        ] {
            if !r.valid() {
                return Err(AugmentError::InvalidConfig(format!("{name} must satisfy lo <= hi")));
            }
        }
        let j = &self.jitter;
        if ![j.brightness, j.contrast, j.saturation]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
        {
            return bad("jitter magnitudes must be non-negative");
        }
        if !(0.0..=0.5).contains(&j.hue) {
            return bad("jitter.hue must lie in [0, 0.5]");
        }
        if self.crop_scale.lo() <= 0.0 || self.crop_scale.hi() > 1.0 {
            return bad("crop_scale must lie in (0, 1]");
        }
        if self.crop_ratio.lo() <= 0.0 {
            return bad("crop_ratio must be positive");
        }
        if !(0.0..=0.5).contains(&self.affine.translate_frac) {
            return bad("affine.translate_frac must lie in [0, 0.5]");
        }
        if self.affine.scale_range.lo() <= 0.0 {
            return bad("affine.scale_range must be positive");
        }
        if !(0.0..45.0).contains(&self.affine.shear_deg) {
            return bad("affine.shear_deg must lie in [0, 45)");
        }
        if self.blur.kernel == 0 || self.blur.kernel.is_multiple_of(2) {
            return bad("blur.kernel must be odd");
        }
        if self.blur.sigma_range.lo() <= 0.0 {
            return bad("blur.sigma_range must be positive");
        }
        if !(self.sharpness.factor.is_finite() && self.sharpness.factor >= 0.0) {
            return bad("sharpness.factor must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.perspective.distortion) {
            return bad("perspective.distortion must lie in [0, 1]");
        }
        if self.out_size == 0 {
            return bad("out_size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterFactors {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl JitterFactors {
    pub fn get(&self, op: ColorOp) -> f64 {
        match op {
            ColorOp::Brightness => self.brightness,
            ColorOp::Contrast => self.contrast,
            ColorOp::Saturation => self.saturation,
            ColorOp::Hue => self.hue,
        }
    }
}

/// One fully materialized draw of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledPipeline {
    pub do_hflip: bool,
    pub do_vflip: bool,
    pub rotation_deg: f64,
    pub jitter_order: [ColorOp; 4],
    pub jitter: JitterFactors,
    pub crop: CropRect,
    pub affine: AffineParams,
    pub blur_sigma: f64,
    pub do_sharpen: bool,
    pub do_perspective: bool,
    /// Inward displacements `(dx, dy)` of the top-left, top-right,
    /// bottom-right and bottom-left output corners, in pixels.
    pub perspective_corners: [f64; 8],
}

// Generator stream per stage.
const STREAM_HFLIP: u64 = 0;
const STREAM_VFLIP: u64 = 1;
const STREAM_ROTATE: u64 = 2;
const STREAM_JITTER_ORDER: u64 = 3;
const STREAM_JITTER: u64 = 4;
const STREAM_CROP: u64 = 5;
const STREAM_AFFINE: u64 = 6;
const STREAM_BLUR: u64 = 7;
const STREAM_SHARPEN: u64 = 8;
const STREAM_PERSPECTIVE: u64 = 9;

const CROP_ATTEMPTS: usize = 10;

fn sample_crop(rng: &mut CounterRng, scale: Interval, ratio: Interval, w: usize, h: usize) -> CropRect {
    let area = (w * h) as f64;
    let (log_lo, log_hi) = (ratio.lo().ln(), ratio.hi().ln());
    for _ in 0..CROP_ATTEMPTS {
        let target = area * rng.uniform(scale.lo(), scale.hi());
        let aspect = rng.uniform(log_lo, log_hi).exp();
        let cw = (target * aspect).sqrt().round() as usize;
        let ch = (target / aspect).sqrt().round() as usize;
        if cw >= 1 && ch >= 1 && cw <= w && ch <= h {
            let top = rng.below((h - ch + 1) as u64) as usize;
            let left = rng.below((w - cw + 1) as u64) as usize;
            return CropRect {
                left,
                top,
                width: cw,
                height: ch,
            };
        }
    }
    // Center crop clamped to the ratio range.
    let in_ratio = w as f64 / h as f64;
    let (cw, ch) = if in_ratio < ratio.lo() {
        (w, ((w as f64 / ratio.lo()).round() as usize).clamp(1, h))
    } else if in_ratio > ratio.hi() {
        (((h as f64 * ratio.hi()).round() as usize).clamp(1, w), h)
    } else {
        (w, h)
    };
    CropRect {
        left: (w - cw) / 2,
        top: (h - ch) / 2,
        width: cw,
        height: ch,
    }
}

/// Draws every pipeline parameter for one image of size `src_w x src_h`.
pub fn sample_pipeline(cfg: &PipelineConfig, seed: u64, src_w: usize, src_h: usize) -> SampledPipeline {
    let stage = |stream| CounterRng::new(seed, stream);

    let do_hflip = stage(STREAM_HFLIP).bernoulli(cfg.p_hflip);
    let do_vflip = stage(STREAM_VFLIP).bernoulli(cfg.p_vflip);
    let rotation_deg = stage(STREAM_ROTATE).uniform(cfg.rotation_deg.lo(), cfg.rotation_deg.hi());

    // Inside-out shuffle: one draw per position.
    let mut order_rng = stage(STREAM_JITTER_ORDER);
    let mut jitter_order = ColorOp::ALL;
    for i in 0..4 {
        let j = order_rng.below(i as u64 + 1) as usize;
        jitter_order.swap(i, j);
    }

    let mut jr = stage(STREAM_JITTER);
    let mut draw = |op| {
        let r = cfg.jitter.range(op);
        jr.uniform(r.lo(), r.hi())
    };
    let jitter = JitterFactors {
        brightness: draw(ColorOp::Brightness),
        contrast: draw(ColorOp::Contrast),
        saturation: draw(ColorOp::Saturation),
        hue: draw(ColorOp::Hue),
    };

    let crop = sample_crop(&mut stage(STREAM_CROP), cfg.crop_scale, cfg.crop_ratio, src_w, src_h);

    let mut ar = stage(STREAM_AFFINE);
    let t = cfg.affine.translate_frac;
    let s = cfg.affine.shear_deg;
    let affine = AffineParams {
        rotate_deg: 0.0,
        translate: (ar.uniform(-t, t), ar.uniform(-t, t)),
        scale: ar.uniform(cfg.affine.scale_range.lo(), cfg.affine.scale_range.hi()),
        shear_deg: (ar.uniform(-s, s), ar.uniform(-s, s)),
    };

    let blur_sigma = stage(STREAM_BLUR).uniform(cfg.blur.sigma_range.lo(), cfg.blur.sigma_range.hi());
    let do_sharpen = stage(STREAM_SHARPEN).bernoulli(cfg.sharpness.p);

    let mut pr = stage(STREAM_PERSPECTIVE);
    let do_perspective = pr.bernoulli(cfg.perspective.p);
    let half = cfg.out_size as f64 / 2.0;
    let max_d = cfg.perspective.distortion * half;
    let mut perspective_corners = [0.0; 8];
    for v in perspective_corners.iter_mut() {
        *v = pr.uniform(0.0, max_d);
    }

    SampledPipeline {
        do_hflip,
        do_vflip,
        rotation_deg,
        jitter_order,
        jitter,
        crop,
        affine,
        blur_sigma,
        do_sharpen,
        do_perspective,
        perspective_corners,
    }
}

/// Maps output corners displaced inward by `d` back onto the frame corners.
fn perspective_homography(size: f64, d: &[f64; 8]) -> imageops::Result<Homography> {
    let frame = [(0.0, 0.0), (size, 0.0), (size, size), (0.0, size)];
    let displaced = [
        (d[0], d[1]),
        (size - d[2], d[3]),
        (size - d[4], size - d[5]),
        (d[6], size - d[7]),
    ];
    Homography::from_correspondences(displaced, frame)
}

/// Replays `sampled` on `img`; output is `out_size x out_size`.
pub fn apply_pipeline(img: &ImageRgb, sampled: &SampledPipeline, cfg: &PipelineConfig) -> Result<ImageRgb> {
    let mut cur = img.clone();
    if sampled.do_hflip {
        cur = imageops::flip(&cur, FlipAxis::Horizontal);
    }
    if sampled.do_vflip {
        cur = imageops::flip(&cur, FlipAxis::Vertical);
    }
    if sampled.rotation_deg != 0.0 {
        let (w, h) = (cur.width() as f64, cur.height() as f64);
        let m = imageops::compose_affine(
            &AffineParams::rotation(sampled.rotation_deg),
            (w, h),
            (w / 2.0, h / 2.0),
        )?;
        cur = imageops::warp_affine(&cur, &m, cur.width(), cur.height(), BLACK);
    }
    for op in sampled.jitter_order {
        cur = imageops::adjust_color(&cur, op, sampled.jitter.get(op))?;
    }
    let size = cfg.out_size;
    cur = imageops::crop_resize(&cur, sampled.crop, size, size)?;
    if sampled.affine != AffineParams::IDENTITY {
        let s = size as f64;
        let m = imageops::compose_affine(&sampled.affine, (s, s), (s / 2.0, s / 2.0))?;
        cur = imageops::warp_affine(&cur, &m, size, size, BLACK);
    }
    cur = imageops::gaussian_blur(&cur, sampled.blur_sigma, cfg.blur.kernel)?;
    if sampled.do_sharpen {
        cur = imageops::adjust_sharpness(&cur, cfg.sharpness.factor)?;
    }
    if sampled.do_perspective {
        let h = perspective_homography(size as f64, &sampled.perspective_corners)?;
        cur = imageops::warp_perspective(&cur, &h, BLACK);
    }
    Ok(cur)
}

/// Provenance row for one generated image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentRecord {
    pub source_id: String,
    pub replica_index: u64,
    pub seed: u64,
    pub sampled: SampledPipeline,
    pub output_path: String,
}

pub fn original_path(class: usize, source_id: &str) -> String {
    format!("{class}/{source_id}__orig.png")
}

pub fn replica_path(class: usize, source_id: &str, replica_index: u64) -> String {
    format!("{class}/{source_id}__r{replica_index}.png")
}

/// One augmented image to produce: the `replica_index`-th pass over
/// `source_index` within `class`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct WorkItem {
    pub class: usize,
    pub source_index: usize,
    pub replica_index: u64,
}

/// Round-robin oversampling schedule; generates no pixels.
pub fn plan_augmentation(class_sizes: &BTreeMap<usize, usize>, target: usize) -> Result<Vec<WorkItem>> {
    if let Some((&class, _)) = class_sizes.iter().find(|(_, &n)| n == 0) {
        return Err(AugmentError::EmptyClass(class));
    }
    let plan = dataset::balance_plan(class_sizes, target)?;
    let mut items = Vec::with_capacity(plan.values().sum());
    for (&class, &extra) in &plan {
        let n = class_sizes[&class];
        items.extend((0..extra).map(|k| WorkItem {
            class,
            source_index: k % n,
            replica_index: (k / n) as u64,
        }));
    }
    Ok(items)
}

/// Destination for generated images, addressed by relative path.
pub trait ImageSink: Sync {
    fn write(&self, rel_path: &str, img: &ImageRgb) -> Result<()>;
}

/// Writes PNGs beneath a root directory.
#[derive(Debug, Clone)]
pub struct DirSink {
    root: PathBuf,
}

impl DirSink {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl ImageSink for DirSink {
    fn write(&self, rel_path: &str, img: &ImageRgb) -> Result<()> {
        let path = self.root.join(rel_path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| AugmentError::Io(format!("{}: {e}", parent.display())))?;
        }
        img.write_png(&path)?;
        Ok(())
    }
}

/// Keeps images in memory; used for dry runs and tests.
#[derive(Debug, Default)]
pub struct MemorySink {
    images: Mutex<BTreeMap<String, ImageRgb>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_inner(self) -> BTreeMap<String, ImageRgb> {
        self.images.into_inner().unwrap_or_else(|p| p.into_inner())
    }
}

impl ImageSink for MemorySink {
    fn write(&self, rel_path: &str, img: &ImageRgb) -> Result<()> {
        self.images
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(rel_path.to_string(), img.clone());
        Ok(())
    }
}

/// A training image tagged with its identifier.
pub type SourceImage = (String, ImageRgb);

/// Brings every class up to `target` images.
///
/// Originals are resized to `out_size` and written as `<class>/<id>__orig.png`.
/// The `target - n_c` extra images per class cycle through the sources
/// round-robin and are written as `<class>/<id>__r<k>.png`. Work runs on a
/// pool of `workers` threads; the result is independent of the thread count.
/// Records come back sorted by class, source id and replica index.
pub fn generate_balanced(
    class_images: &BTreeMap<usize, Vec<SourceImage>>,
    target: usize,
    cfg: &PipelineConfig,
    global_seed: u64,
    workers: usize,
    sink: &dyn ImageSink,
) -> Result<Vec<AugmentRecord>> {
    cfg.validate()?;
    let sizes: BTreeMap<usize, usize> = class_images.iter().map(|(&c, v)| (c, v.len())).collect();
    let plan = plan_augmentation(&sizes, target)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| AugmentError::Io(e.to_string()))?;

    let size = cfg.out_size;
    pool.install(|| {
        let originals: Vec<(usize, &SourceImage)> = class_images
            .iter()
            .flat_map(|(&c, imgs)| imgs.iter().map(move |s| (c, s)))
            .collect();
        originals.par_iter().try_for_each(|(class, (id, img))| {
            sink.write(&original_path(*class, id), &imageops::resize_bilinear(img, size, size))
        })?;

        let mut records: Vec<(usize, AugmentRecord)> = plan
            .par_iter()
            .map(|item| {
                let (id, img) = &class_images[&item.class][item.source_index];
                let seed = derive_seed(global_seed, id, item.replica_index);
                let sampled = sample_pipeline(cfg, seed, img.width(), img.height());
                let out = apply_pipeline(img, &sampled, cfg)?;
                let output_path = replica_path(item.class, id, item.replica_index);
                sink.write(&output_path, &out)?;
                Ok((
                    item.class,
                    AugmentRecord {
                        source_id: id.clone(),
                        replica_index: item.replica_index,
                        seed,
                        sampled,
                        output_path,
                    },
                ))
            })
            .collect::<Result<_>>()?;
        records
            .sort_by(|(ca, a), (cb, b)| (ca, &a.source_id, a.replica_index).cmp(&(cb, &b.source_id, b.replica_index)));
        Ok(records.into_iter().map(|(_, r)| r).collect())
    })
}

/// Writes one JSON object per record, keys sorted.
pub fn write_augment_log(path: impl AsRef<Path>, records: &[AugmentRecord]) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e: std::io::Error| AugmentError::Io(format!("{}: {e}", path.display()));
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for r in records {
        let value = serde_json::to_value(r).map_err(|e| AugmentError::Io(e.to_string()))?;
        writeln!(out, "{value}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn read_augment_log(path: impl AsRef<Path>) -> Result<Vec<AugmentRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| AugmentError::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| AugmentError::Io(e.to_string())))
        .collect()
}

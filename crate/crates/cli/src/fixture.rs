//! Synthetic datasets of flat-colored images for tests and demos.

use std::io;
use std::path::{Path, PathBuf};

use gradebal::imageops::{ImageRgb, Rgb};
use gradebal::rng::CounterRng;

/// Base colors for up to five classes: red, green, blue, light gray, dark gray.
pub const CLASS_COLORS: [Rgb; 5] = [
    [200, 30, 30],
    [30, 200, 30],
    [30, 30, 200],
    [220, 220, 220],
    [60, 60, 60],
];

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub colors: Vec<Rgb>,
    pub per_class: usize,
    pub width: usize,
    pub height: usize,
    /// Std dev of each image's color around its class color.
    pub color_sigma: f64,
    /// Std dev of independent per-pixel noise.
    pub pixel_sigma: f64,
    pub seed: u64,
}

impl FixtureSpec {
    pub fn five_class(per_class: usize) -> Self {
        Self {
            colors: CLASS_COLORS.to_vec(),
            per_class,
            width: 24,
            height: 20,
            color_sigma: 6.0,
            pixel_sigma: 3.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub manifest_csv: PathBuf,
    pub image_dir: PathBuf,
    /// `(id, class)` in manifest order.
    pub entries: Vec<(String, usize)>,
}

fn gaussian(rng: &mut CounterRng) -> f64 {
    let u1 = 1.0 - rng.unit();
    let u2 = rng.unit();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Writes `<dir>/images/<id>.png` and `<dir>/manifest.csv`; class `c` is
/// written as grade `c`.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> io::Result<Fixture> {
    let image_dir = dir.join("images");
    std::fs::create_dir_all(&image_dir)?;
    let mut rng = CounterRng::new(spec.seed, 0);
    let mut entries = Vec::new();
    let mut manifest = String::from("id_code,diagnosis\n");
    for (class, base) in spec.colors.iter().enumerate() {
        for i in 0..spec.per_class {
            let id = format!("c{class}_{i:04}");
            let tint: Vec<f64> = base
                .iter()
                .map(|&b| b as f64 + spec.color_sigma * gaussian(&mut rng))
                .collect();
            let mut data = Vec::with_capacity(spec.width * spec.height * 3);
            for _ in 0..spec.width * spec.height {
                for t in &tint {
                    data.push((t + spec.pixel_sigma * gaussian(&mut rng)).round().clamp(0.0, 255.0) as u8);
                }
            }
            let img = ImageRgb::new(spec.width, spec.height, data).map_err(io::Error::other)?;
            img.write_png(image_dir.join(format!("{id}.png")))
                .map_err(io::Error::other)?;
            manifest.push_str(&format!("{id},{class}\n"));
            entries.push((id, class));
        }
    }
    let manifest_csv = dir.join("manifest.csv");
    std::fs::write(&manifest_csv, manifest)?;
    Ok(Fixture {
        manifest_csv,
        image_dir,
        entries,
    })
}

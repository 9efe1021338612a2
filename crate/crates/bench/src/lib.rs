//! Shared inputs for the criterion benchmarks.

use gradebal::imageops::ImageRgb;
use gradebal::metrics::ScoreMatrix;
use gradebal::rng::CounterRng;

/// Deterministic noise image of the given size.
pub fn noise_image(w: usize, h: usize, seed: u64) -> ImageRgb {
    let mut rng = CounterRng::new(seed, 0);
    let data = (0..w * h * 3).map(|_| rng.below(256) as u8).collect();
    ImageRgb::new(w, h, data).expect("valid dimensions")
}

/// `n` random probability rows over `classes` classes with random labels.
pub fn random_scores(n: usize, classes: usize, seed: u64) -> ScoreMatrix {
    let mut rng = CounterRng::new(seed, 0);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let raw: Vec<f64> = (0..classes).map(|_| rng.unit() + 1e-3).collect();
        let sum: f64 = raw.iter().sum();
        rows.push(raw.into_iter().map(|v| v / sum).collect());
        labels.push(rng.below(classes as u64) as usize);
    }
    ScoreMatrix::new(rows, labels).expect("valid score matrix")
}

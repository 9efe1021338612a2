//! Image-to-feature mappings feeding the linear head.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{normalize_image, NormalizationStats};
use crate::imageops::{resize_bilinear, ImageRgb};

/// Maps an image to a vector of fixed length [`FeatureExtractor::dim`].
pub trait FeatureExtractor: Sync {
    fn dim(&self) -> usize;
    fn extract(&self, img: &ImageRgb) -> Vec<f64>;
}

/// Resize to `side x side`, normalize, flatten channel-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceExtractor {
    pub side: usize,
    pub stats: NormalizationStats,
}

impl ReferenceExtractor {
    pub fn new(side: usize, stats: NormalizationStats) -> Self {
        assert!(side >= 1, "extractor side must be at least 1");
        Self { side, stats }
    }
}

impl FeatureExtractor for ReferenceExtractor {
    fn dim(&self) -> usize {
        3 * self.side * self.side
    }

    fn extract(&self, img: &ImageRgb) -> Vec<f64> {
        normalize_image(&resize_bilinear(img, self.side, self.side), &self.stats)
    }
}

/// Extracts every image on the current rayon pool; output order matches input.
pub fn extract_all<E: FeatureExtractor + ?Sized>(extractor: &E, images: &[ImageRgb]) -> Vec<Vec<f64>> {
    images.par_iter().map(|img| extractor.extract(img)).collect()
}

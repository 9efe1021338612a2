//! Deterministic 8-bit RGB image primitives.
//!
//! Every operation here is a pure function of its inputs. Intermediate
//! arithmetic is done in `f64`; final channel values are rounded half away
//! from zero and clamped to `[0, 255]`.
//!
//! Geometric transforms use half-pixel centers: pixel `(i, j)` covers
//! `[i, i + 1) x [j, j + 1)` and its center sits at `(i + 0.5, j + 0.5)`.
//! [`AffineMatrix`] and [`Homography`] map *output* continuous coordinates to
//! *source* continuous coordinates. [`bilinear_sample`] itself takes pixel
//! index coordinates (the center of pixel `i` is at `i`).

use std::path::Path;

use thiserror::Error;

/// One RGB pixel.
pub type Rgb = [u8; 3];

pub const BLACK: Rgb = [0, 0, 0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageOpError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: usize, height: usize },
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("homography is singular (|det| = {det:e})")]
    SingularHomography { det: f64 },
    #[error("affine transform is singular or non-finite")]
    SingularAffine,
    #[error("kernel size must be odd and >= 1, got {0}")]
    InvalidKernel(usize),
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("factor {factor} out of range for {op}")]
    InvalidFactor { op: &'static str, factor: f64 },
    #[error("crop ({left}, {top}, {width}x{height}) exceeds {image_width}x{image_height} image")]
    CropOutOfBounds {
        left: usize,
        top: usize,
        width: usize,
        height: usize,
        image_width: usize,
        image_height: usize,
    },
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("image io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ImageOpError>;

/// Interleaved, row-major, 8-bit RGB raster.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageRgb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageRgb")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ImageOpError::EmptyImage { width, height });
        }
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(ImageOpError::BufferSize {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    /// A `width x height` image where every pixel is `color`.
    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        let data = color.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, data)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, px: Rgb) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&px);
    }

    /// Decodes any supported image file and converts it to 8-bit RGB.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|e| ImageOpError::Io(format!("{}: {e}", path.display())))?
            .into_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }

    /// Encodes as 8-bit RGB PNG. Output bytes depend only on the pixels.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|e| ImageOpError::Io(format!("{}: {e}", path.display())))
    }

    fn map_pixels(&self, mut f: impl FnMut(usize, usize, Rgb) -> Rgb) -> ImageRgb {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(x, y, f(x, y, self.pixel(x, y)));
            }
        }
        out
    }
}

/// Round half away from zero, then clamp to the 8-bit range.
#[inline]
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.round().clamp(0.0, 255.0) as u8
}

#[inline]
fn quantize3(v: [f64; 3]) -> Rgb {
    [quantize(v[0]), quantize(v[1]), quantize(v[2])]
}

#[inline]
fn to_f64(px: Rgb) -> [f64; 3] {
    [px[0] as f64, px[1] as f64, px[2] as f64]
}

/// Unrounded bilinear interpolation at pixel-index coordinates. Neighbors
/// outside the image contribute `fill`.
fn bilinear_f64(img: &ImageRgb, x: f64, y: f64, fill: Rgb) -> [f64; 3] {
    let (w, h) = (img.width as f64, img.height as f64);
    if !x.is_finite() || !y.is_finite() || x <= -1.0 || y <= -1.0 || x >= w || y >= h {
        return to_f64(fill);
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let fetch = |xi: f64, yi: f64| -> [f64; 3] {
        if xi < 0.0 || yi < 0.0 || xi >= w || yi >= h {
            to_f64(fill)
        } else {
            to_f64(img.pixel(xi as usize, yi as usize))
        }
    };
    let p00 = fetch(x0, y0);
    let p10 = fetch(x0 + 1.0, y0);
    let p01 = fetch(x0, y0 + 1.0);
    let p11 = fetch(x0 + 1.0, y0 + 1.0);
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - fx) + p10[c] * fx;
        let bottom = p01[c] * (1.0 - fx) + p11[c] * fx;
        out[c] = top * (1.0 - fy) + bottom * fy;
    }
    out
}

/// Bilinear interpolation at pixel-index coordinates `(x, y)`.
///
/// Lattice points return the stored pixel exactly. Neighbors that fall
/// outside the image take the value `fill`, so any coordinate with no
/// in-bounds neighbor returns `fill`.
pub fn bilinear_sample(img: &ImageRgb, x: f64, y: f64, fill: Rgb) -> Rgb {
    quantize3(bilinear_f64(img, x, y, fill))
}

/// 2x3 matrix mapping output continuous coordinates to source coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMatrix {
    pub m: [[f64; 3]; 2],
}

impl AffineMatrix {
    pub const IDENTITY: AffineMatrix = AffineMatrix {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    pub fn new(m: [[f64; 3]; 2]) -> Result<Self> {
        if m.iter().flatten().all(|v| v.is_finite()) {
            Ok(Self { m })
        } else {
            Err(ImageOpError::SingularAffine)
        }
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        (m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2])
    }

    /// Matrix product `self * rhs` of the 3x3 embeddings: applying the
    /// result equals applying `rhs` first, then `self`.
    pub fn compose(&self, rhs: &AffineMatrix) -> AffineMatrix {
        let a = &self.m;
        let b = &rhs.m;
        let mut m = [[0.0; 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                m[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
            m[r][2] += a[r][2];
        }
        AffineMatrix { m }
    }

    pub fn to_homography(&self) -> Homography {
        let m = &self.m;
        Homography {
            h: [m[0], m[1], [0.0, 0.0, 1.0]],
        }
    }
}

/// 3x3 projective matrix, normalized so `h[2][2] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    h: [[f64; 3]; 3],
}

fn det3(h: &[[f64; 3]; 3]) -> f64 {
    h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1]) - h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0])
        + h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0])
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Validates and normalizes a raw matrix. Matrices with `|det| <= 1e-12`,
    /// non-finite entries, or a zero bottom-right entry are rejected.
    pub fn new(h: [[f64; 3]; 3]) -> Result<Self> {
        let det = det3(&h);
        if !det.is_finite() || det.abs() <= 1e-12 {
            return Err(ImageOpError::SingularHomography { det });
        }
        let s = h[2][2];
        if s.abs() <= 1e-12 {
            return Err(ImageOpError::SingularHomography { det });
        }
        let mut out = h;
        for row in out.iter_mut() {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        out[2][2] = 1.0;
        Ok(Self { h: out })
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.h
    }

    /// Solves for the homography mapping each `from[i]` onto `to[i]`.
    pub fn from_correspondences(from: [(f64, f64); 4], to: [(f64, f64); 4]) -> Result<Self> {
        // h22 fixed to 1: eight unknowns, two equations per point pair.
        let mut a = [[0.0f64; 9]; 8];
        for i in 0..4 {
            let (x, y) = from[i];
            let (u, v) = to[i];
            a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
            a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
        }
        let sol = solve8(a).ok_or(ImageOpError::SingularHomography { det: 0.0 })?;
        Homography::new([
            [sol[0], sol[1], sol[2]],
            [sol[3], sol[4], sol[5]],
            [sol[6], sol[7], 1.0],
        ])
    }

    #[inline]
    fn apply(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let h = &self.h;
        let w = h[2][0] * x + h[2][1] * y + h[2][2];
        if !w.is_finite() || w.abs() < 1e-12 {
            return None;
        }
        let sx = h[0][0] * x + h[0][1] * y + h[0][2];
        let sy = h[1][0] * x + h[1][1] * y + h[1][2];
        Some((sx / w, sy / w))
    }
}

/// Gaussian elimination with partial pivoting on an 8x9 augmented matrix.
fn solve8(mut a: [[f64; 9]; 8]) -> Option<[f64; 8]> {
    for col in 0..8 {
        let pivot = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        let pivot_row = a[col];
        for row in a.iter_mut().skip(col + 1) {
            let f = row[col] / pivot_row[col];
            for (v, p) in row.iter_mut().zip(pivot_row).skip(col) {
                *v -= f * p;
            }
        }
    }
    let mut x = [0.0; 8];
    for row in (0..8).rev() {
        let mut acc = a[row][8];
        for k in row + 1..8 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Resamples `img` into an `out_w x out_h` frame through `m`.
pub fn warp_affine(img: &ImageRgb, m: &AffineMatrix, out_w: usize, out_h: usize, fill: Rgb) -> ImageRgb {
    let mut data = Vec::with_capacity(out_w * out_h * 3);
    for v in 0..out_h {
        let cy = v as f64 + 0.5;
        for u in 0..out_w {
            let (sx, sy) = m.apply(u as f64 + 0.5, cy);
            data.extend_from_slice(&quantize3(bilinear_f64(img, sx - 0.5, sy - 0.5, fill)));
        }
    }
    ImageRgb {
        width: out_w.max(1),
        height: out_h.max(1),
        data,
    }
}

/// Projective resampling with perspective divide; output has the input's size.
pub fn warp_perspective(img: &ImageRgb, h: &Homography, fill: Rgb) -> ImageRgb {
    let (w, ht) = (img.width, img.height);
    let mut data = Vec::with_capacity(w * ht * 3);
    for v in 0..ht {
        let cy = v as f64 + 0.5;
        for u in 0..w {
            let px = match h.apply(u as f64 + 0.5, cy) {
                Some((sx, sy)) => quantize3(bilinear_f64(img, sx - 0.5, sy - 0.5, fill)),
                None => fill,
            };
            data.extend_from_slice(&px);
        }
    }
    ImageRgb {
        width: w,
        height: ht,
        data,
    }
}

/// Normalized discrete Gaussian weights for offsets `-(k/2)..=k/2`.
pub fn gaussian_kernel(sigma: f64, kernel_size: usize) -> Result<Vec<f64>> {
    if kernel_size == 0 || kernel_size.is_multiple_of(2) {
        return Err(ImageOpError::InvalidKernel(kernel_size));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(ImageOpError::InvalidSigma(sigma));
    }
    let r = (kernel_size / 2) as i64;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / sum).collect())
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(img: &ImageRgb, sigma: f64, kernel_size: usize) -> Result<ImageRgb> {
    let kernel = gaussian_kernel(sigma, kernel_size)?;
    if kernel_size == 1 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width, img.height);
    let r = (kernel_size / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0f64; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (k, wt) in kernel.iter().enumerate() {
                let sx = clamp(x as isize + k as isize - r, w);
                let px = img.pixel(sx, y);
                for c in 0..3 {
                    acc[c] += wt * px[c] as f64;
                }
            }
            tmp[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&acc);
        }
    }
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (k, wt) in kernel.iter().enumerate() {
                let sy = clamp(y as isize + k as isize - r, h);
                let i = (sy * w + x) * 3;
                for c in 0..3 {
                    acc[c] += wt * tmp[i + c];
                }
            }
            data.extend_from_slice(&quantize3(acc));
        }
    }
    Ok(ImageRgb {
        width: w,
        height: h,
        data,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorOp {
    Brightness,
    Contrast,
    Saturation,
    Hue,
}

impl ColorOp {
    pub const ALL: [ColorOp; 4] = [
        ColorOp::Brightness,
        ColorOp::Contrast,
        ColorOp::Saturation,
        ColorOp::Hue,
    ];

    fn name(self) -> &'static str {
        match self {
            ColorOp::Brightness => "brightness",
            ColorOp::Contrast => "contrast",
            ColorOp::Saturation => "saturation",
            ColorOp::Hue => "hue",
        }
    }
}

#[inline]
fn luma(p: [f64; 3]) -> f64 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

fn rgb_to_hsv(p: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = p;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    [h, s, max]
}

fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as u8 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Color adjustment by `factor`.
///
/// * brightness: `v * factor`
/// * contrast: blend toward the image's mean luma (`factor = 0` gives a flat gray)
/// * saturation: blend toward each pixel's own luma
/// * hue: rotate the HSV hue by `factor * 360` degrees, `factor` in `[-0.5, 0.5]`
///
/// Luma uses the Rec. 601 weights (0.299, 0.587, 0.114).
pub fn adjust_color(img: &ImageRgb, op: ColorOp, factor: f64) -> Result<ImageRgb> {
    let valid = match op {
        ColorOp::Hue => (-0.5..=0.5).contains(&factor),
        _ => factor.is_finite() && factor >= 0.0,
    };
    if !valid {
        return Err(ImageOpError::InvalidFactor { op: op.name(), factor });
    }
    let blend = |v: f64, toward: f64| factor * v + (1.0 - factor) * toward;
    Ok(match op {
        ColorOp::Brightness => img.map_pixels(|_, _, px| {
            let p = to_f64(px);
            quantize3([p[0] * factor, p[1] * factor, p[2] * factor])
        }),
        ColorOp::Contrast => {
            let n = (img.width * img.height) as f64;
            let mean = img
                .data
                .chunks_exact(3)
                .map(|c| luma([c[0] as f64, c[1] as f64, c[2] as f64]))
                .sum::<f64>()
                / n;
            img.map_pixels(|_, _, px| {
                let p = to_f64(px);
                quantize3([blend(p[0], mean), blend(p[1], mean), blend(p[2], mean)])
            })
        }
        ColorOp::Saturation => img.map_pixels(|_, _, px| {
            let p = to_f64(px);
            let l = luma(p);
            quantize3([blend(p[0], l), blend(p[1], l), blend(p[2], l)])
        }),
        ColorOp::Hue => {
            if factor == 0.0 {
                return Ok(img.clone());
            }
            img.map_pixels(|_, _, px| {
                let p = to_f64(px);
                let mut hsv = rgb_to_hsv([p[0] / 255.0, p[1] / 255.0, p[2] / 255.0]);
                hsv[0] = (hsv[0] + factor).rem_euclid(1.0);
                let rgb = hsv_to_rgb(hsv);
                quantize3([rgb[0] * 255.0, rgb[1] * 255.0, rgb[2] * 255.0])
            })
        }
    })
}

/// Unrounded 3x3 smoothing (center 5/13, each of the 8 neighbors 1/13) at
/// an interior pixel.
#[inline]
fn smooth_at(img: &ImageRgb, x: usize, y: usize) -> [f64; 3] {
    let mut acc = [0u32; 3];
    for dy in 0..3 {
        for dx in 0..3 {
            let px = img.pixel(x + dx - 1, y + dy - 1);
            let wt = if dx == 1 && dy == 1 { 5 } else { 1 };
            for c in 0..3 {
                acc[c] += wt * px[c] as u32;
            }
        }
    }
    [acc[0] as f64 / 13.0, acc[1] as f64 / 13.0, acc[2] as f64 / 13.0]
}

#[inline]
fn is_interior(img: &ImageRgb, x: usize, y: usize) -> bool {
    x > 0 && y > 0 && x + 1 < img.width && y + 1 < img.height
}

/// The smoothing filter behind [`adjust_sharpness`]; border pixels are copied.
pub fn smooth3x3(img: &ImageRgb) -> ImageRgb {
    img.map_pixels(|x, y, px| {
        if is_interior(img, x, y) {
            quantize3(smooth_at(img, x, y))
        } else {
            px
        }
    })
}

/// `factor * img + (1 - factor) * smooth3x3(img)` on interior pixels.
pub fn adjust_sharpness(img: &ImageRgb, factor: f64) -> Result<ImageRgb> {
    if !(factor.is_finite() && factor >= 0.0) {
        return Err(ImageOpError::InvalidFactor {
            op: "sharpness",
            factor,
        });
    }
    Ok(img.map_pixels(|x, y, px| {
        if !is_interior(img, x, y) {
            return px;
        }
        let s = smooth_at(img, x, y);
        let p = to_f64(px);
        quantize3([
            factor * p[0] + (1.0 - factor) * s[0],
            factor * p[1] + (1.0 - factor) * s[1],
            factor * p[2] + (1.0 - factor) * s[2],
        ])
    }))
}

/// Bilinear resize with half-pixel-center mapping and edge clamping.
pub fn resize_bilinear(img: &ImageRgb, out_w: usize, out_h: usize) -> ImageRgb {
    let (out_w, out_h) = (out_w.max(1), out_h.max(1));
    if out_w == img.width && out_h == img.height {
        return img.clone();
    }
    let sx = img.width as f64 / out_w as f64;
    let sy = img.height as f64 / out_h as f64;
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    let mut data = Vec::with_capacity(out_w * out_h * 3);
    for v in 0..out_h {
        let y = ((v as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let fy = y - y0 as f64;
        for u in 0..out_w {
            let x = ((u as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let fx = x - x0 as f64;
            let (p00, p10) = (to_f64(img.pixel(x0, y0)), to_f64(img.pixel(x1, y0)));
            let (p01, p11) = (to_f64(img.pixel(x0, y1)), to_f64(img.pixel(x1, y1)));
            let mut out = [0.0; 3];
            for c in 0..3 {
                let top = p00[c] * (1.0 - fx) + p10[c] * fx;
                let bottom = p01[c] * (1.0 - fx) + p11[c] * fx;
                out[c] = top * (1.0 - fy) + bottom * fy;
            }
            data.extend_from_slice(&quantize3(out));
        }
    }
    ImageRgb {
        width: out_w,
        height: out_h,
        data,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAxis {
    /// Mirror left-right.
    Horizontal,
    /// Mirror top-bottom.
    Vertical,
}

pub fn flip(img: &ImageRgb, axis: FlipAxis) -> ImageRgb {
    let (w, h) = (img.width, img.height);
    let mut out = img.clone();
    match axis {
        FlipAxis::Horizontal => {
            for y in 0..h {
                for x in 0..w {
                    out.set_pixel(x, y, img.pixel(w - 1 - x, y));
                }
            }
        }
        FlipAxis::Vertical => {
            let row = w * 3;
            for y in 0..h {
                let src = (h - 1 - y) * row;
                out.data[y * row..(y + 1) * row].copy_from_slice(&img.data[src..src + row]);
            }
        }
    }
    out
}

/// Integer crop rectangle in source pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CropRect {
    pub left: usize,
    pub top: usize,
    pub width: usize,
    pub height: usize,
}

impl CropRect {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            left: 0,
            top: 0,
            width,
            height,
        }
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.width >= 1 && self.height >= 1 && self.left + self.width <= width && self.top + self.height <= height
    }
}

/// Extracts `rect` and resizes it to `out_w x out_h`.
pub fn crop_resize(img: &ImageRgb, rect: CropRect, out_w: usize, out_h: usize) -> Result<ImageRgb> {
    if !rect.fits(img.width, img.height) {
        return Err(ImageOpError::CropOutOfBounds {
            left: rect.left,
            top: rect.top,
            width: rect.width,
            height: rect.height,
            image_width: img.width,
            image_height: img.height,
        });
    }
    let row = rect.width * 3;
    let mut data = Vec::with_capacity(rect.height * row);
    for y in rect.top..rect.top + rect.height {
        let start = (y * img.width + rect.left) * 3;
        data.extend_from_slice(&img.data[start..start + row]);
    }
    let cropped = ImageRgb {
        width: rect.width,
        height: rect.height,
        data,
    };
    Ok(resize_bilinear(&cropped, out_w, out_h))
}

/// Parameters of a rotate/translate/scale/shear transform about a center.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AffineParams {
    pub rotate_deg: f64,
    /// Translation as a fraction of the frame width and height.
    pub translate: (f64, f64),
    pub scale: f64,
    /// Shear angles along x and y, in degrees.
    pub shear_deg: (f64, f64),
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        rotate_deg: 0.0,
        translate: (0.0, 0.0),
        scale: 1.0,
        shear_deg: (0.0, 0.0),
    };

    pub fn rotation(deg: f64) -> Self {
        Self {
            rotate_deg: deg,
            ..Self::IDENTITY
        }
    }
}

/// Builds the output-to-source matrix for the forward transform
/// `p' = c + t + s * R(rot) * Shear * (p - c)`, where `Shear = [[1, tan sx], [tan sy, 1]]`
/// and `t` is `translate` scaled by `frame` (width, height).
pub fn compose_affine(params: &AffineParams, frame: (f64, f64), center: (f64, f64)) -> Result<AffineMatrix> {
    let s = params.scale;
    if !(s > 0.0 && s.is_finite()) {
        return Err(ImageOpError::InvalidScale(s));
    }
    let theta = params.rotate_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let shx = params.shear_deg.0.to_radians().tan();
    let shy = params.shear_deg.1.to_radians().tan();
    // Forward linear part: s * R * Sh.
    let a = s * (cos - sin * shy);
    let b = s * (cos * shx - sin);
    let c = s * (sin + cos * shy);
    let d = s * (sin * shx + cos);
    let det = a * d - b * c;
    if !det.is_finite() || det.abs() < 1e-12 {
        return Err(ImageOpError::SingularAffine);
    }
    let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
    let tx = center.0 + params.translate.0 * frame.0;
    let ty = center.1 + params.translate.1 * frame.1;
    AffineMatrix::new([
        [ia, ib, center.0 - (ia * tx + ib * ty)],
        [ic, id, center.1 - (ic * tx + id * ty)],
    ])
}

//! Raster types and the pixel-level algorithms shared by every imaging stage.
//!
//! Intensities are kept as normalized `f64` values in `[0, 1]`; quantization
//! to 256 levels only happens inside the histogram routines.

mod io;
mod regions;

pub use io::{decode_png, encode_png, load_png, save_binary_png, save_png};
pub use regions::{connected_regions, trace_contour, PixelRegion};

use thiserror::Error;

/// ITU-601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.2989, 0.5870, 0.1140];

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("dimension mismatch: expected {expected} values, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("intensity {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("degenerate histogram: a single intensity level is occupied")]
    DegenerateHistogram,
    #[error("empty image")]
    Empty,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("image i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("image decode: {0}")]
    Decode(String),
}

pub type Result<T> = std::result::Result<T, RasterError>;

/// Row-major grayscale raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(RasterError::Dimension {
                expected: width * height,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(RasterError::OutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Build from a closure; values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value.clamp(0.0, 1.0);
    }

    /// Keep pixels where `mask` is set, zero elsewhere.
    pub fn masked(&self, mask: &BinaryImage) -> Result<Self> {
        check_same_dims(self.width, self.height, mask.width, mask.height)?;
        let data = self
            .data
            .iter()
            .zip(&mask.mask)
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        Ok(Self {
            width: self.width,
            height: self.height,
            data,
        })
    }

    /// `value >= threshold` per pixel.
    pub fn binarize(&self, threshold: f64) -> BinaryImage {
        BinaryImage {
            width: self.width,
            height: self.height,
            mask: self.data.iter().map(|&v| v >= threshold).collect(),
        }
    }

    /// Crop to the rectangle `[row0, row0 + height) × [col0, col0 + width)`.
    pub fn crop(&self, row0: usize, col0: usize, width: usize, height: usize) -> Result<Self> {
        if row0 + height > self.height || col0 + width > self.width {
            return Err(RasterError::Parameter(format!(
                "crop {width}x{height}+{col0}+{row0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height);
        for row in row0..row0 + height {
            let start = row * self.width + col0;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

/// Row-major boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(RasterError::Dimension {
                expected: width * height,
                actual: mask.len(),
            });
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                mask.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            mask,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.mask[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn invert(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            mask: self.mask.iter().map(|m| !m).collect(),
        }
    }

    /// Pixelwise `self && !other`.
    pub fn and_not(&self, other: &BinaryImage) -> Result<Self> {
        check_same_dims(self.width, self.height, other.width, other.height)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(&a, &b)| a && !b)
                .collect(),
        })
    }

    /// Pixelwise union.
    pub fn or(&self, other: &BinaryImage) -> Result<Self> {
        check_same_dims(self.width, self.height, other.width, other.height)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }

    /// Render as a grayscale image (true → 1.0).
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        }
    }
}

fn check_same_dims(w0: usize, h0: usize, w1: usize, h1: usize) -> Result<()> {
    if w0 != w1 || h0 != h1 {
        return Err(RasterError::Dimension {
            expected: w0 * h0,
            actual: w1 * h1,
        });
    }
    Ok(())
}

/// 256-bin intensity histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram256 {
    pub counts: [u64; 256],
}

/// Histogram level of a normalized intensity: `min(255, floor(v · 256))`.
#[inline]
pub fn quantize(value: f64) -> usize {
    ((value * 256.0).floor() as usize).min(255)
}

impl Histogram256 {
    pub fn of(img: &GrayImage) -> Self {
        let mut counts = [0u64; 256];
        for &v in &img.data {
            counts[quantize(v)] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Weighted sum of the three channels with [`LUMA_WEIGHTS`].
pub fn to_grayscale(width: usize, height: usize, rgb: &[[f64; 3]]) -> Result<GrayImage> {
    if rgb.len() != width * height {
        return Err(RasterError::Dimension {
            expected: width * height,
            actual: rgb.len(),
        });
    }
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let mut data = Vec::with_capacity(rgb.len());
    for (index, px) in rgb.iter().enumerate() {
        if let Some(&value) = px.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(RasterError::OutOfRange { index, value });
        }
        data.push((wr * px[0] + wg * px[1] + wb * px[2]).clamp(0.0, 1.0));
    }
    Ok(GrayImage {
        width,
        height,
        data,
    })
}

/// Otsu threshold on the 256-level histogram of `img`.
///
/// Returns the intensity `(t + 1) / 256` where level `t` maximizes the
/// between-class variance of the split `{level ≤ t} | {level > t}`; ties go to
/// the smallest `t`. Foreground is `value >= threshold`.
pub fn otsu_threshold(img: &GrayImage) -> Result<f64> {
    if img.is_empty() {
        return Err(RasterError::Empty);
    }
    otsu_level(&Histogram256::of(img)).map(|t| (t as f64 + 1.0) / 256.0)
}

/// Otsu level on a histogram.
pub fn otsu_level(hist: &Histogram256) -> Result<usize> {
    let occupied = hist.counts.iter().filter(|&&c| c > 0).count();
    if occupied < 2 {
        return Err(RasterError::DegenerateHistogram);
    }
    let total = hist.total() as i128;
    let sum_total: i128 = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, &c)| i as i128 * c as i128)
        .sum();

    let mut best_level = 0usize;
    let mut best = f64::NEG_INFINITY;
    let mut n0: i128 = 0;
    let mut sum0: i128 = 0;
    for t in 0..255 {
        n0 += hist.counts[t] as i128;
        sum0 += t as i128 * hist.counts[t] as i128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // σ_b² · N² = (N·S0 − n0·S)² / (n0·n1); the numerator is exact.
        let num = (total * sum0 - n0 * sum_total) as f64;
        let score = num * num / (n0 as f64 * n1 as f64);
        if score > best {
            best = score;
            best_level = t;
        }
    }
    Ok(best_level)
}

/// Parameters of the gamma mapping `[a, b] → [c, d]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaMap {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub gamma: f64,
}

impl GammaMap {
    pub fn new(a: f64, b: f64, c: f64, d: f64, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(RasterError::Parameter(format!("gamma must be > 0, got {gamma}")));
        }
        if !(b > a) {
            return Err(RasterError::Parameter(format!("need a < b, got a={a}, b={b}")));
        }
        if !(0.0 <= c && c <= d && d <= 1.0) {
            return Err(RasterError::Parameter(format!(
                "need 0 <= c <= d <= 1, got c={c}, d={d}"
            )));
        }
        Ok(Self { a, b, c, d, gamma })
    }

    #[inline]
    pub fn apply(&self, value: f64) -> f64 {
        let v = value.clamp(self.a, self.b);
        ((self.d - self.c) * ((v - self.a) / (self.b - self.a)).powf(self.gamma) + self.c)
            .clamp(0.0, 1.0)
    }
}

/// `I_out = (d − c)·((I_in − a)/(b − a))^γ + c`, with inputs clamped into `[a, b]`.
pub fn gamma_correct(img: &GrayImage, a: f64, b: f64, c: f64, d: f64, gamma: f64) -> Result<GrayImage> {
    let map = GammaMap::new(a, b, c, d, gamma)?;
    Ok(apply_gamma(img, &map))
}

pub fn apply_gamma(img: &GrayImage, map: &GammaMap) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&v| map.apply(v)).collect(),
    }
}

/// Upper bound of the gamma input interval picked from the histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramCutoff {
    pub b: f64,
    /// No level fell below the count threshold; `b` fell back to 1.0.
    pub saturated: bool,
}

/// First (lowest) level `i` whose count is below `count_threshold`, as `i / 256`.
pub fn histogram_cutoff_b(img: &GrayImage, count_threshold: u64) -> HistogramCutoff {
    let hist = Histogram256::of(img);
    match hist.counts.iter().position(|&c| c < count_threshold) {
        Some(i) => HistogramCutoff {
            b: i as f64 / 256.0,
            saturated: false,
        },
        None => HistogramCutoff {
            b: 1.0,
            saturated: true,
        },
    }
}

/// Dilation with a `(2r+1)²` square (Chebyshev ball); `radius == 0` copies.
pub fn dilate_mask(mask: &BinaryImage, radius: usize) -> BinaryImage {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width, mask.height);
    let horizontal = running_any(w, h, &mask.mask, radius, true);
    let out = running_any(w, h, &horizontal, radius, false);
    BinaryImage {
        width: w,
        height: h,
        mask: out,
    }
}

// One separable pass: out[p] = any(src within `radius` along the axis).
fn running_any(w: usize, h: usize, src: &[bool], radius: usize, along_rows: bool) -> Vec<bool> {
    let mut out = vec![false; w * h];
    let (lines, len) = if along_rows { (h, w) } else { (w, h) };
    let idx = |line: usize, k: usize| if along_rows { line * w + k } else { k * w + line };
    let mut prefix = vec![0u32; len + 1];
    for line in 0..lines {
        for k in 0..len {
            prefix[k + 1] = prefix[k] + src[idx(line, k)] as u32;
        }
        for k in 0..len {
            let lo = k.saturating_sub(radius);
            let hi = (k + radius + 1).min(len);
            out[idx(line, k)] = prefix[hi] > prefix[lo];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grayscale_weights() {
        let black = to_grayscale(2, 1, &[[0.0; 3], [0.0; 3]]).unwrap();
        assert!(black.pixels().iter().all(|&v| v == 0.0));
        let white = to_grayscale(1, 1, &[[1.0; 3]]).unwrap();
        // The published weights sum to 0.9999.
        assert!((white.get(0, 0) - 1.0).abs() <= 1e-4 + 1e-12);
        let red = to_grayscale(1, 1, &[[1.0, 0.0, 0.0]]).unwrap();
        assert!((red.get(0, 0) - 0.2989).abs() < 1e-15);
        assert!(matches!(
            to_grayscale(2, 2, &[[0.0; 3]]),
            Err(RasterError::Dimension { .. })
        ));
    }

    #[test]
    fn otsu_bimodal_and_degenerate() {
        let img = GrayImage::from_fn(8, 8, |r, _| if r < 4 { 0.0 } else { 1.0 });
        let t = otsu_threshold(&img).unwrap();
        let fg = img.binarize(t);
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(fg.get(r, c), r >= 4);
            }
        }
        let flat = GrayImage::from_fn(4, 4, |_, _| 0.3);
        assert!(matches!(
            otsu_threshold(&flat),
            Err(RasterError::DegenerateHistogram)
        ));
    }

    #[test]
    fn gamma_cases() {
        let img = GrayImage::from_fn(4, 4, |r, c| (r * 4 + c) as f64 / 15.0);
        let id = gamma_correct(&img, 0.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        for (a, b) in id.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-15);
        }
        let one = GrayImage::new(1, 1, vec![0.16]).unwrap();
        let out = gamma_correct(&one, 0.0, 0.64, 0.0, 1.0, 0.5).unwrap();
        assert!((out.get(0, 0) - 0.5).abs() < 1e-12);
        for g in [0.35, 0.6, 1.0, 2.5] {
            let end = GrayImage::new(1, 1, vec![0.6]).unwrap();
            let out = gamma_correct(&end, 0.0, 0.6, 0.1, 0.9, g).unwrap();
            assert!((out.get(0, 0) - 0.9).abs() < 1e-12);
        }
        assert!(gamma_correct(&img, 0.0, 1.0, 0.0, 1.0, 0.0).is_err());
        assert!(gamma_correct(&img, 0.5, 0.5, 0.0, 1.0, 1.0).is_err());
    }

    fn image_with_levels(counts: &[(usize, usize)]) -> GrayImage {
        let mut data = Vec::new();
        for &(level, n) in counts {
            data.extend(std::iter::repeat((level as f64 + 0.5) / 256.0).take(n));
        }
        let w = data.len();
        GrayImage::new(w, 1, data).unwrap()
    }

    #[test]
    fn cutoff_cases() {
        let mut counts: Vec<(usize, usize)> = (0..155).map(|l| (l, 20)).collect();
        counts.push((155, 5));
        let cut = histogram_cutoff_b(&image_with_levels(&counts), 20);
        assert!((cut.b - 155.0 / 256.0).abs() < 1e-15);
        assert!(!cut.saturated);

        let cut = histogram_cutoff_b(&image_with_levels(&[(0, 3), (1, 40)]), 20);
        assert_eq!(cut.b, 0.0);

        let dense: Vec<(usize, usize)> = (0..256).map(|l| (l, 25)).collect();
        let cut = histogram_cutoff_b(&image_with_levels(&dense), 20);
        assert_eq!(cut.b, 1.0);
        assert!(cut.saturated);
    }

    #[test]
    fn dilation_cases() {
        let mut m = BinaryImage::empty(7, 7);
        m.set(3, 3, true);
        assert_eq!(dilate_mask(&m, 0), m);
        let d = dilate_mask(&m, 1);
        for r in 0..7 {
            for c in 0..7 {
                let inside = (2..=4).contains(&r) && (2..=4).contains(&c);
                assert_eq!(d.get(r, c), inside);
            }
        }
    }

    #[test]
    fn dilation_matches_neighborhood_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = BinaryImage::from_fn(32, 32, |_, _| rng.random_bool(0.05));
        let d = dilate_mask(&m, 3);
        for r in 0..32i64 {
            for c in 0..32i64 {
                let mut any = false;
                for rr in (r - 3).max(0)..=(r + 3).min(31) {
                    for cc in (c - 3).max(0)..=(c + 3).min(31) {
                        any |= m.get(rr as usize, cc as usize);
                    }
                }
                assert_eq!(d.get(r as usize, c as usize), any);
            }
        }
    }

    #[test]
    fn crop_and_mask_dims() {
        let img = GrayImage::from_fn(5, 4, |r, c| (r + c) as f64 / 10.0);
        let c = img.crop(1, 2, 3, 2).unwrap();
        assert_eq!(c.get(0, 0), img.get(1, 2));
        assert!(img.crop(3, 3, 3, 3).is_err());
        assert!(img.masked(&BinaryImage::empty(4, 4)).is_err());
    }
}

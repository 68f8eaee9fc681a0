use serde::{Deserialize, Serialize};

use crate::raster::{dilate_mask, otsu_threshold, BinaryImage, GrayImage, RasterError};

use super::OctFrame;

/// Gamma pass used as the intensity reference of the pixel-count probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassInfo {
    pub gamma: f64,
    pub cutoff_b: f64,
    pub cutoff_saturated: bool,
    /// Otsu threshold in the gamma-corrected intensity space; `None` when the
    /// corrected ROI was constant.
    pub threshold: Option<f64>,
}

/// Region of interest of one frame.
#[derive(Debug, Clone)]
pub struct RoiFrame {
    /// Original intensities inside `roi_mask`, zero elsewhere.
    pub masked: GrayImage,
    /// Otsu-bright area (A_V).
    pub vessel_mask: BinaryImage,
    /// `vessel_mask` dilated by the configured radius (A_ROI).
    pub roi_mask: BinaryImage,
    /// Closed polygon `(row, col)` of the inner wall boundary; the closing
    /// edge from the last to the first vertex is implicit.
    pub lumen_contour: Vec<(f64, f64)>,
    /// Shoelace centroid of `lumen_contour`, `(row, col)`.
    pub lumen_center: (f64, f64),
    pub otsu_vessel: f64,
    /// First gamma pass and its corrected image, set by the first iteration.
    pub first_pass: Option<(PassInfo, GrayImage)>,
    /// Pixels of already accepted struts plus a margin; never re-detected.
    pub exclusion: BinaryImage,
}

impl RoiFrame {
    pub fn otsu_first_pass(&self) -> Option<f64> {
        self.first_pass.as_ref().and_then(|(p, _)| p.threshold)
    }
}

/// Bright-area ROI, lumen contour and lumen center of a frame.
pub fn extract_roi(frame: &OctFrame, radius: usize, n_rays: usize) -> Result<RoiFrame, RasterError> {
    let img = &frame.image;
    let otsu = otsu_threshold(img)?;
    let vessel = img.binarize(otsu);
    let roi = dilate_mask(&vessel, radius);
    let masked = img.masked(&roi)?;

    let image_center = (
        (img.height() as f64 - 1.0) / 2.0,
        (img.width() as f64 - 1.0) / 2.0,
    );
    let mut contour = cast_lumen_rays(&vessel, image_center, n_rays);
    let mut center = polygon_centroid(&contour).unwrap_or(image_center);
    if inside_image(&vessel, center) {
        let refined = cast_lumen_rays(&vessel, center, n_rays);
        if let Some(c) = polygon_centroid(&refined) {
            contour = refined;
            center = c;
        }
    }
    Ok(RoiFrame {
        masked,
        roi_mask: roi,
        exclusion: BinaryImage::empty(img.width(), img.height()),
        vessel_mask: vessel,
        lumen_contour: contour,
        lumen_center: center,
        otsu_vessel: otsu,
        first_pass: None,
    })
}

fn inside_image(mask: &BinaryImage, p: (f64, f64)) -> bool {
    p.0 >= 0.0 && p.1 >= 0.0 && p.0 <= (mask.height() - 1) as f64 && p.1 <= (mask.width() - 1) as f64
}

/// First vessel pixel met by each of `n_rays` rays from `origin`; rays that
/// leave the image without a hit are skipped.
fn cast_lumen_rays(vessel: &BinaryImage, origin: (f64, f64), n_rays: usize) -> Vec<(f64, f64)> {
    const STEP: f64 = 0.25;
    let (h, w) = (vessel.height() as f64, vessel.width() as f64);
    let max_len = (h * h + w * w).sqrt();
    let mut out = Vec::with_capacity(n_rays);
    for k in 0..n_rays {
        let a = 2.0 * std::f64::consts::PI * k as f64 / n_rays as f64;
        let (dr, dc) = (a.sin(), a.cos());
        let mut t = 0.0;
        while t <= max_len {
            let (r, c) = (origin.0 + t * dr, origin.1 + t * dc);
            let (ri, ci) = (r.round(), c.round());
            if ri < 0.0 || ci < 0.0 || ri >= h || ci >= w {
                break;
            }
            if vessel.get(ri as usize, ci as usize) {
                out.push((r, c));
                break;
            }
            t += STEP;
        }
    }
    out
}

/// Area centroid of a closed polygon; `None` for fewer than three vertices or
/// zero area.
pub fn polygon_centroid(poly: &[(f64, f64)]) -> Option<(f64, f64)> {
    if poly.len() < 3 {
        return None;
    }
    let (mut a, mut cr, mut cc) = (0.0, 0.0, 0.0);
    for i in 0..poly.len() {
        let (r0, c0) = poly[i];
        let (r1, c1) = poly[(i + 1) % poly.len()];
        let cross = r0 * c1 - r1 * c0;
        a += cross;
        cr += (r0 + r1) * cross;
        cc += (c0 + c1) * cross;
    }
    if a.abs() < 1e-12 {
        return None;
    }
    Some((cr / (3.0 * a), cc / (3.0 * a)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn annulus_frame(inner: f64, outer: f64) -> OctFrame {
        let img = GrayImage::from_fn(201, 201, |r, c| {
            let d = ((r as f64 - 100.0).powi(2) + (c as f64 - 100.0).powi(2)).sqrt();
            if d >= inner && d <= outer {
                0.9
            } else {
                0.05
            }
        });
        OctFrame::new(0, img, 0.01, 0.0, (100.0, 100.0)).unwrap()
    }

    #[test]
    fn lumen_contour_follows_inner_circle() {
        let roi = extract_roi(&annulus_frame(60.0, 75.0), 10, 360).unwrap();
        assert_eq!(roi.lumen_contour.len(), 360);
        for &(r, c) in &roi.lumen_contour {
            let d = ((r - 100.0).powi(2) + (c - 100.0).powi(2)).sqrt();
            assert!((d - 60.0).abs() <= 1.0, "radius {d}");
        }
        assert!((roi.lumen_center.0 - 100.0).abs() < 0.5);
        assert!((roi.lumen_center.1 - 100.0).abs() < 0.5);
    }

    #[test]
    fn zero_radius_masks_with_vessel_area() {
        let frame = annulus_frame(60.0, 75.0);
        let roi = extract_roi(&frame, 0, 90).unwrap();
        for r in 0..201 {
            for c in 0..201 {
                let expect = if roi.vessel_mask.get(r, c) {
                    frame.image.get(r, c)
                } else {
                    0.0
                };
                assert_eq!(roi.masked.get(r, c), expect);
            }
        }
    }

    #[test]
    fn constant_frame_is_unusable() {
        let img = GrayImage::from_fn(20, 20, |_, _| 0.4);
        let frame = OctFrame::new(0, img, 0.01, 0.0, (10.0, 10.0)).unwrap();
        assert!(matches!(
            extract_roi(&frame, 5, 36),
            Err(RasterError::DegenerateHistogram)
        ));
    }

    #[test]
    fn centroid_of_square() {
        let sq = [(0.0, 0.0), (0.0, 2.0), (2.0, 2.0), (2.0, 0.0)];
        assert_eq!(polygon_centroid(&sq), Some((1.0, 1.0)));
        assert_eq!(polygon_centroid(&sq[..2]), None);
    }
}

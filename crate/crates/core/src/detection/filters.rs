use super::{CandidateStrut, DetectionConfig, RejectReason, RoiFrame};

/// Keep iff `contour_min ≤ contour length ≤ contour_max`.
pub fn filter_contour_length(c: &CandidateStrut, cfg: &DetectionConfig) -> Result<(), RejectReason> {
    let len = c.contour_length;
    if len < cfg.contour_min || len > cfg.contour_max {
        return Err(RejectReason::ContourLength);
    }
    Ok(())
}

/// First crossing of the ray `tip → centroid` with the closed lumen polygon,
/// as a ray parameter (`1.0` is the centroid).
pub(crate) fn first_wall_crossing(
    contour: &[(f64, f64)],
    tip: (f64, f64),
    centroid: (f64, f64),
) -> Option<f64> {
    let d = (centroid.0 - tip.0, centroid.1 - tip.1);
    let mut best: Option<f64> = None;
    let n = contour.len();
    if n < 2 {
        return None;
    }
    for i in 0..n {
        let a = contour[i];
        let b = contour[(i + 1) % n];
        let e = (b.0 - a.0, b.1 - a.1);
        let denom = d.0 * e.1 - d.1 * e.0;
        if denom.abs() < 1e-15 {
            continue;
        }
        let w = (a.0 - tip.0, a.1 - tip.1);
        let t = (w.0 * e.1 - w.1 * e.0) / denom;
        let s = (w.0 * d.1 - w.1 * d.0) / denom;
        if t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) && best.is_none_or(|bt| t < bt) {
            best = Some(t);
        }
    }
    best
}

/// Keep iff the centroid lies within `wall_distance_max` pixels of where the
/// ray from the wire tip through it first meets the lumen contour.
pub fn filter_wall_distance(
    c: &CandidateStrut,
    roi: &RoiFrame,
    wire_tip: (f64, f64),
    cfg: &DetectionConfig,
) -> Result<(), RejectReason> {
    let d = (c.centroid.0 - wire_tip.0, c.centroid.1 - wire_tip.1);
    let len = (d.0 * d.0 + d.1 * d.1).sqrt();
    if len < 1e-9 {
        return Err(RejectReason::DegenerateRay);
    }
    let t = first_wall_crossing(&roi.lumen_contour, wire_tip, c.centroid)
        .ok_or(RejectReason::NoWallIntersection)?;
    if (t - 1.0).abs() * len > cfg.wall_distance_max {
        return Err(RejectReason::WallDistance);
    }
    Ok(())
}

/// Probe square anchored at the centroid pixel and grown toward the lumen
/// center. Returns `(bright, in_bounds)` pixel counts.
pub(crate) fn probe_counts(
    img: &crate::raster::GrayImage,
    threshold: f64,
    centroid: (f64, f64),
    lumen_center: (f64, f64),
    side: usize,
) -> (usize, usize) {
    let step = |from: f64, to: f64| if to - from < 0.0 { -1i64 } else { 1 };
    let (sr, sc) = (step(centroid.0, lumen_center.0), step(centroid.1, lumen_center.1));
    let (ar, ac) = (centroid.0.round() as i64, centroid.1.round() as i64);
    let (h, w) = (img.height() as i64, img.width() as i64);
    let (mut bright, mut total) = (0, 0);
    for i in 0..side as i64 {
        let r = ar + sr * i;
        if r < 0 || r >= h {
            continue;
        }
        for j in 0..side as i64 {
            let col = ac + sc * j;
            if col < 0 || col >= w {
                continue;
            }
            total += 1;
            if img.get(r as usize, col as usize) >= threshold {
                bright += 1;
            }
        }
    }
    (bright, total)
}

/// Keep iff at least `probe_fraction` of the in-bounds probe pixels are at or
/// above the first-pass Otsu threshold, measured in the first-pass corrected
/// image.
pub fn filter_pixel_count(
    c: &CandidateStrut,
    roi: &RoiFrame,
    cfg: &DetectionConfig,
) -> Result<(), RejectReason> {
    let Some((pass, img)) = &roi.first_pass else {
        return Err(RejectReason::PixelCount);
    };
    let Some(threshold) = pass.threshold else {
        return Err(RejectReason::PixelCount);
    };
    let (bright, total) = probe_counts(img, threshold, c.centroid, roi.lumen_center, cfg.probe_side);
    if total == 0 || (bright as f64) < cfg.probe_fraction * total as f64 - 1e-9 {
        return Err(RejectReason::PixelCount);
    }
    Ok(())
}

/// `sqrt(1 − λ_min/λ_max)` of the region's pixel covariance.
pub fn region_eccentricity(pixels: &[(usize, usize)]) -> f64 {
    let n = pixels.len() as f64;
    if pixels.len() < 2 {
        return 0.0;
    }
    let (mr, mc) = pixels
        .iter()
        .fold((0.0, 0.0), |(a, b), &(r, c)| (a + r as f64, b + c as f64));
    let (mr, mc) = (mr / n, mc / n);
    let (mut srr, mut scc, mut src) = (0.0, 0.0, 0.0);
    for &(r, c) in pixels {
        let (dr, dc) = (r as f64 - mr, c as f64 - mc);
        srr += dr * dr;
        scc += dc * dc;
        src += dr * dc;
    }
    let (a, b, c) = (srr / n, scc / n, src / n);
    let mean = (a + b) / 2.0;
    let disc = (((a - b) / 2.0).powi(2) + c * c).sqrt();
    let (l1, l2) = (mean + disc, mean - disc);
    if l1 <= 0.0 {
        return 0.0;
    }
    (1.0 - (l2 / l1).max(0.0)).sqrt()
}

/// Optional shape filter; off by default.
pub fn filter_eccentricity(c: &CandidateStrut, cfg: &DetectionConfig) -> Result<(), RejectReason> {
    match &c.region {
        Some(r) if region_eccentricity(&r.pixels) > cfg.eccentricity_max => {
            Err(RejectReason::Eccentricity)
        }
        _ => Ok(()),
    }
}

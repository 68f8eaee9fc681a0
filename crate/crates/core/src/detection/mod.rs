//! Per-frame strut detection.
//!
//! A frame is reduced to its bright vessel area and a dilated region of
//! interest. Each gamma pass of the schedule then corrects the ROI, binarizes
//! it with Otsu, inverts it and labels the enclosed dark regions. Candidates
//! pass through the contour-length, wall-distance and pixel-count filters;
//! accepted ones are excluded from later passes.

mod filters;
mod patch;
mod roi;
mod stack;

pub use filters::{
    filter_contour_length, filter_eccentricity, filter_pixel_count, filter_wall_distance,
    region_eccentricity,
};
pub use patch::{apply_patch, FramePatch, PatchError};
pub use roi::{extract_roi, polygon_centroid, PassInfo, RoiFrame};
pub use stack::{
    load_frame, load_stack_manifest, CropRect, DetectionSet, FrameEntry, StackError,
    StackManifest,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{
    apply_gamma, connected_regions, dilate_mask, histogram_cutoff_b, otsu_threshold, GammaMap,
    GrayImage, PixelRegion,
};

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("invalid detection config: {0}")]
    Config(String),
    #[error("invalid frame: {0}")]
    Frame(String),
}

/// One cross-sectional image with its acquisition geometry.
#[derive(Debug, Clone)]
pub struct OctFrame {
    pub index: usize,
    pub image: GrayImage,
    /// Isotropic in-plane resolution, mm per pixel.
    pub resolution: f64,
    /// Position along the pullback, mm.
    pub z_offset: f64,
    /// Catheter tip `(row, col)` in pixels.
    pub wire_tip: (f64, f64),
}

impl OctFrame {
    pub fn new(
        index: usize,
        image: GrayImage,
        resolution: f64,
        z_offset: f64,
        wire_tip: (f64, f64),
    ) -> Result<Self, DetectionError> {
        if !(resolution > 0.0) {
            return Err(DetectionError::Frame(format!("resolution {resolution} must be > 0")));
        }
        let (r, c) = wire_tip;
        if !(r >= 0.0 && c >= 0.0 && r <= (image.height() as f64 - 1.0) && c <= (image.width() as f64 - 1.0))
        {
            return Err(DetectionError::Frame(format!(
                "wire tip ({r}, {c}) outside {}x{} image",
                image.width(),
                image.height()
            )));
        }
        Ok(Self {
            index,
            image,
            resolution,
            z_offset,
            wire_tip,
        })
    }

    /// Pixel `(row, col)` to in-plane millimetres relative to the image center.
    pub fn pixel_to_mm(&self, p: (f64, f64)) -> (f64, f64) {
        pixel_to_mm(p, self.image.width(), self.image.height(), self.resolution)
    }
}

/// `x = (col − (W−1)/2)·res`, `y = (row − (H−1)/2)·res`.
pub fn pixel_to_mm(p: (f64, f64), width: usize, height: usize, resolution: f64) -> (f64, f64) {
    (
        (p.1 - (width as f64 - 1.0) / 2.0) * resolution,
        (p.0 - (height as f64 - 1.0) / 2.0) * resolution,
    )
}

/// Inverse of [`pixel_to_mm`].
pub fn mm_to_pixel(xy: (f64, f64), width: usize, height: usize, resolution: f64) -> (f64, f64) {
    (
        xy.1 / resolution + (height as f64 - 1.0) / 2.0,
        xy.0 / resolution + (width as f64 - 1.0) / 2.0,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub gamma_schedule: Vec<f64>,
    pub min_region_area: usize,
    pub contour_min: usize,
    pub contour_max: usize,
    /// Pixels.
    pub wall_distance_max: f64,
    pub probe_side: usize,
    pub probe_fraction: f64,
    pub roi_dilation_radius: usize,
    /// Histogram count below which a level ends the gamma input interval.
    pub cutoff_count: u64,
    pub lumen_rays: usize,
    /// Margin around accepted regions when excluding them from later passes.
    pub blacken_margin: usize,
    pub eccentricity_filter: bool,
    pub eccentricity_max: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            gamma_schedule: vec![0.6, 0.5, 0.4, 0.35],
            min_region_area: 50,
            contour_min: 20,
            contour_max: 250,
            wall_distance_max: 40.0,
            probe_side: 10,
            probe_fraction: 0.10,
            roi_dilation_radius: 60,
            cutoff_count: 20,
            lumen_rays: 360,
            blacken_margin: 1,
            eccentricity_filter: false,
            eccentricity_max: 0.98,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        let s = &self.gamma_schedule;
        if s.is_empty() {
            return Err(DetectionError::Config("gamma schedule is empty".into()));
        }
        if s.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(DetectionError::Config("gamma values must be finite and > 0".into()));
        }
        if s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(DetectionError::Config("gamma schedule must be strictly decreasing".into()));
        }
        if self.contour_min >= self.contour_max {
            return Err(DetectionError::Config("contour_min must be < contour_max".into()));
        }
        if !(0.0..=1.0).contains(&self.probe_fraction) {
            return Err(DetectionError::Config("probe_fraction must lie in [0, 1]".into()));
        }
        if self.probe_side == 0 || self.lumen_rays < 3 {
            return Err(DetectionError::Config("probe_side must be > 0 and lumen_rays >= 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ContourLength,
    WallDistance,
    NoWallIntersection,
    DegenerateRay,
    PixelCount,
    Eccentricity,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Status {
    Accepted,
    Rejected(RejectReason),
    /// Added by an operator.
    Manual,
}

impl Status {
    pub fn is_active(&self) -> bool {
        matches!(self, Status::Accepted | Status::Manual)
    }
}

/// A detected (or operator-added) strut region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateStrut {
    pub id: u32,
    pub frame_index: usize,
    /// Gamma pass that produced it; `None` for manual additions.
    pub iteration: Option<usize>,
    #[serde(flatten)]
    pub status: Status,
    /// `(row, col)` pixels.
    pub centroid: (f64, f64),
    /// In-plane `(x, y)` millimetres about the image center.
    pub centroid_mm: (f64, f64),
    pub area: usize,
    pub contour_length: usize,
    #[serde(skip)]
    pub region: Option<PixelRegion>,
}

impl CandidateStrut {
    fn from_region(region: PixelRegion, frame_index: usize, iteration: usize) -> Self {
        Self {
            id: 0,
            frame_index,
            iteration: Some(iteration),
            status: Status::Accepted,
            centroid: region.centroid,
            centroid_mm: (0.0, 0.0),
            area: region.area,
            contour_length: region.contour_length(),
            region: Some(region),
        }
    }

    pub fn manual(id: u32, frame_index: usize, centroid: (f64, f64), centroid_mm: (f64, f64)) -> Self {
        Self {
            id,
            frame_index,
            iteration: None,
            status: Status::Manual,
            centroid,
            centroid_mm,
            area: 0,
            contour_length: 0,
            region: None,
        }
    }
}

/// Detection outcome for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetection {
    pub frame_index: usize,
    pub width: usize,
    pub height: usize,
    /// mm per pixel.
    pub resolution: f64,
    pub z_offset: f64,
    pub usable: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub flag: Option<String>,
    /// `(row, col)` pixels.
    pub lumen_center: Option<(f64, f64)>,
    pub passes: Vec<PassInfo>,
    pub candidates: Vec<CandidateStrut>,
}

impl FrameDetection {
    pub fn pixel_to_mm(&self, p: (f64, f64)) -> (f64, f64) {
        pixel_to_mm(p, self.width, self.height, self.resolution)
    }

    pub fn active(&self) -> impl Iterator<Item = &CandidateStrut> {
        self.candidates.iter().filter(|c| c.status.is_active())
    }
}

/// Run one gamma pass over the ROI and return unfiltered candidates.
pub fn detect_iteration(
    roi: &RoiFrame,
    gamma: f64,
    iteration: usize,
    cfg: &DetectionConfig,
) -> (PassInfo, Vec<CandidateStrut>, Option<GrayImage>) {
    let cutoff = histogram_cutoff_b(&roi.masked, cfg.cutoff_count);
    let mut info = PassInfo {
        gamma,
        cutoff_b: cutoff.b,
        cutoff_saturated: cutoff.saturated,
        threshold: None,
    };
    // A zero cutoff leaves no input interval; the pass sees nothing.
    let Ok(map) = GammaMap::new(0.0, cutoff.b, 0.0, 1.0, gamma) else {
        return (info, Vec::new(), None);
    };
    let corrected = apply_gamma(&roi.masked, &map);
    let Ok(threshold) = otsu_threshold(&corrected) else {
        return (info, Vec::new(), Some(corrected));
    };
    info.threshold = Some(threshold);
    let dark = corrected
        .binarize(threshold)
        .invert()
        .and_not(&roi.exclusion)
        .expect("ROI rasters share dimensions");
    let frame_index = 0;
    let candidates = connected_regions(&dark, cfg.min_region_area)
        .into_iter()
        .map(|r| CandidateStrut::from_region(r, frame_index, iteration))
        .collect();
    (info, candidates, Some(corrected))
}

fn judge(c: &CandidateStrut, roi: &RoiFrame, frame: &OctFrame, cfg: &DetectionConfig) -> Status {
    let checks = [
        filter_contour_length(c, cfg),
        filter_wall_distance(c, roi, frame.wire_tip, cfg),
        filter_pixel_count(c, roi, cfg),
    ];
    for check in checks {
        if let Err(reason) = check {
            return Status::Rejected(reason);
        }
    }
    if cfg.eccentricity_filter {
        if let Err(reason) = filter_eccentricity(c, cfg) {
            return Status::Rejected(reason);
        }
    }
    Status::Accepted
}

/// Full gamma schedule on one frame. Accepted and rejected candidates are all
/// returned; ids follow discovery order.
pub fn detect_frame(frame: &OctFrame, cfg: &DetectionConfig) -> Result<FrameDetection, DetectionError> {
    cfg.validate()?;
    let mut roi = match extract_roi(frame, cfg.roi_dilation_radius, cfg.lumen_rays) {
        Ok(roi) => roi,
        Err(e) => {
            return Ok(FrameDetection {
                frame_index: frame.index,
                width: frame.image.width(),
                height: frame.image.height(),
                resolution: frame.resolution,
                z_offset: frame.z_offset,
                usable: false,
                flag: Some(format!("unusable frame: {e}")),
                lumen_center: None,
                passes: Vec::new(),
                candidates: Vec::new(),
            })
        }
    };
    let mut passes = Vec::new();
    let mut all = Vec::new();
    for (it, &gamma) in cfg.gamma_schedule.iter().enumerate() {
        let (info, candidates, corrected) = detect_iteration(&roi, gamma, it, cfg);
        if it == 0 {
            roi.first_pass = corrected.map(|img| (info.clone(), img));
        }
        passes.push(info);
        let mut accepted = crate::raster::BinaryImage::empty(frame.image.width(), frame.image.height());
        for mut c in candidates {
            c.frame_index = frame.index;
            c.centroid_mm = frame.pixel_to_mm(c.centroid);
            c.status = judge(&c, &roi, frame, cfg);
            if c.status == Status::Accepted {
                if let Some(region) = &c.region {
                    for &(r, col) in &region.pixels {
                        accepted.set(r, col, true);
                    }
                }
            }
            c.id = all.len() as u32;
            all.push(c);
        }
        let grown = dilate_mask(&accepted, cfg.blacken_margin);
        roi.exclusion = roi.exclusion.or(&grown).expect("same dimensions");
    }
    Ok(FrameDetection {
        frame_index: frame.index,
        width: frame.image.width(),
        height: frame.image.height(),
        resolution: frame.resolution,
        z_offset: frame.z_offset,
        usable: true,
        flag: None,
        lumen_center: Some(roi.lumen_center),
        passes,
        candidates: all,
    })
}

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{detect_frame, DetectionConfig, DetectionError, FrameDetection, OctFrame};
use crate::raster::{load_png, RasterError};

#[derive(Debug, Error)]
pub enum StackError {
    #[error("stack manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("frame {index} ({path}): {source}")]
    Frame {
        index: usize,
        path: PathBuf,
        source: RasterError,
    },
    #[error(transparent)]
    Detection(#[from] DetectionError),
}

/// Sub-rectangle kept from every frame, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropRect {
    pub row: usize,
    pub col: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub index: usize,
    /// PNG path relative to the manifest.
    pub file: String,
    /// mm along the pullback; defaults to `index · spacing`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_offset: Option<f64>,
    /// `(row, col)` in the uncropped image.
    pub wire_tip: (f64, f64),
}

/// On-disk description of a frame stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackManifest {
    pub resolution_mm_per_px: f64,
    pub spacing_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<CropRect>,
    pub frames: Vec<FrameEntry>,
}

impl StackManifest {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.resolution_mm_per_px > 0.0) {
            return Err("resolution_mm_per_px must be > 0".into());
        }
        if !(self.spacing_mm > 0.0) {
            return Err("spacing_mm must be > 0".into());
        }
        if self.frames.windows(2).any(|w| w[1].index <= w[0].index) {
            return Err("frame indices must be strictly increasing".into());
        }
        Ok(())
    }

    pub fn z_offset(&self, entry: &FrameEntry) -> f64 {
        entry.z_offset.unwrap_or(entry.index as f64 * self.spacing_mm)
    }
}

pub fn load_stack_manifest(path: &Path) -> Result<StackManifest, StackError> {
    let err = |msg: String| StackError::Manifest {
        path: path.to_path_buf(),
        msg,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let m: StackManifest = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    m.validate().map_err(err)?;
    Ok(m)
}

/// Load, crop and wrap one frame. `dir` is the manifest's directory.
pub fn load_frame(m: &StackManifest, dir: &Path, entry: &FrameEntry) -> Result<OctFrame, StackError> {
    let path = dir.join(&entry.file);
    let frame_err = |source| StackError::Frame {
        index: entry.index,
        path: path.clone(),
        source,
    };
    let mut img = load_png(&path).map_err(frame_err)?;
    let mut tip = entry.wire_tip;
    if let Some(c) = m.crop {
        img = img.crop(c.row, c.col, c.width, c.height).map_err(frame_err)?;
        tip = (tip.0 - c.row as f64, tip.1 - c.col as f64);
    }
    Ok(OctFrame::new(
        entry.index,
        img,
        m.resolution_mm_per_px,
        m.z_offset(entry),
        tip,
    )?)
}

/// Detections for a whole stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub resolution_mm_per_px: f64,
    pub spacing_mm: f64,
    pub frames: Vec<FrameDetection>,
}

impl DetectionSet {
    /// Run detection over every frame of the stack, frames in parallel.
    pub fn detect(m: &StackManifest, dir: &Path, cfg: &DetectionConfig) -> Result<Self, StackError> {
        cfg.validate()?;
        let frames = m
            .frames
            .par_iter()
            .map(|e| {
                let frame = load_frame(m, dir, e)?;
                Ok(detect_frame(&frame, cfg)?)
            })
            .collect::<Result<Vec<_>, StackError>>()?;
        Ok(Self {
            resolution_mm_per_px: m.resolution_mm_per_px,
            spacing_mm: m.spacing_mm,
            frames,
        })
    }

    pub fn frame(&self, index: usize) -> Option<&FrameDetection> {
        self.frames.iter().find(|f| f.frame_index == index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{save_png, GrayImage};

    #[test]
    fn manifest_crop_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_fn(40, 30, |r, c| if c >= 30 { 1.0 } else { (r % 2) as f64 * 0.5 });
        save_png(&img, &dir.path().join("f0.png")).unwrap();
        let m = StackManifest {
            resolution_mm_per_px: 0.02,
            spacing_mm: 0.2,
            crop: Some(CropRect {
                row: 0,
                col: 0,
                width: 30,
                height: 30,
            }),
            frames: vec![FrameEntry {
                index: 3,
                file: "f0.png".into(),
                z_offset: None,
                wire_tip: (15.0, 15.0),
            }],
        };
        let path = dir.path().join("stack.json");
        std::fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
        let back = load_stack_manifest(&path).unwrap();
        assert_eq!(back, m);
        let f = load_frame(&back, dir.path(), &back.frames[0]).unwrap();
        assert_eq!(f.image.width(), 30);
        assert!((f.z_offset - 0.6).abs() < 1e-12);
        assert!(f.image.pixels().iter().all(|&v| v < 0.6));
    }

    #[test]
    fn bad_manifest_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stack.json");
        std::fs::write(&path, r#"{"resolution_mm_per_px": 0, "spacing_mm": 0.1, "frames": []}"#).unwrap();
        assert!(matches!(load_stack_manifest(&path), Err(StackError::Manifest { .. })));
    }
}

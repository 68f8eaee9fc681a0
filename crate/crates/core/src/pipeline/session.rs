//! In-memory state behind the annotation service: one project, raw
//! detections, per-frame patches with optimistic versions and the
//! annotation file bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{artifacts, patched_detections, read_json, write, PatchFile, PipelineError, Project, Stage, VersionedPatch};
use crate::detection::{apply_patch, load_frame, CandidateStrut, DetectionSet, FrameDetection, FramePatch};
use crate::raster::encode_png;
use crate::topology::{classify_points, flatten, lift_to_3d, AnnotationSet, StrutCloud};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("frame {0} not found")]
    NotFound(usize),
    /// Stale version; carries the current frame state.
    #[error("frame {} changed (now version {})", .0.index, .0.version)]
    Conflict(Box<FrameState>),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// One frame as shown to the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameState {
    pub index: usize,
    pub version: u64,
    pub width: usize,
    pub height: usize,
    pub z_offset: f64,
    pub usable: bool,
    /// `(row, col)` pixels.
    pub lumen_center: Option<(f64, f64)>,
    pub image: String,
    pub patch: FramePatch,
    pub candidates: Vec<CandidateStrut>,
}

/// Patch submitted against the version the client last saw.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchRequest {
    pub version: u64,
    #[serde(default)]
    pub additions: Vec<(f64, f64)>,
    #[serde(default)]
    pub removals: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatViewPoint {
    pub u: f64,
    pub v: f64,
    pub frame_index: usize,
    pub source_id: u32,
}

/// The flattened cloud as drawn under the annotation lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatView {
    pub points: Vec<FlatViewPoint>,
    /// Circumference at the mean radius, mm: the period of `u`.
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitReport {
    pub points: usize,
    pub assigned: usize,
    pub unassigned: usize,
    pub rings: usize,
    pub beams: usize,
}

const EMPTY_ANNOTATIONS: &[u8] = b"{\n  \"lines\": []\n}\n";

pub struct AnnotationSession {
    project: Project,
    raw: DetectionSet,
    patches: PatchFile,
    annotations: Vec<u8>,
}

impl AnnotationSession {
    /// Requires the detection stage's output.
    pub fn open(project: Project) -> Result<Self, SessionError> {
        let path = project.artifact(artifacts::DETECTIONS);
        if !path.exists() {
            return Err(PipelineError::Dependency {
                stage: Stage::Flatten,
                run_first: Stage::Detect,
                missing: path,
            }
            .into());
        }
        let raw: DetectionSet = read_json(&path)?;
        let patches = PatchFile::load(&project.patches_path())?;
        patched_detections(&raw, &patches)?;
        let ann = project.annotations_path();
        let annotations = if ann.exists() {
            std::fs::read(&ann).map_err(|e| SessionError::Invalid(format!("{}: {e}", ann.display())))?
        } else {
            EMPTY_ANNOTATIONS.to_vec()
        };
        Ok(Self {
            project,
            raw,
            patches,
            annotations,
        })
    }

    pub fn project(&self) -> &Project {
        &self.project
    }

    pub fn frame_indices(&self) -> Vec<usize> {
        self.raw.frames.iter().map(|f| f.frame_index).collect()
    }

    fn raw_frame(&self, index: usize) -> Result<&FrameDetection, SessionError> {
        self.raw.frame(index).ok_or(SessionError::NotFound(index))
    }

    fn stored(&self, index: usize) -> VersionedPatch {
        self.patches.frames.get(&index).cloned().unwrap_or_default()
    }

    pub fn frame(&self, index: usize) -> Result<FrameState, SessionError> {
        let raw = self.raw_frame(index)?;
        let vp = self.stored(index);
        let det = apply_patch(raw, &vp.patch).map_err(|e| SessionError::Invalid(e.to_string()))?;
        Ok(FrameState {
            index,
            version: vp.version,
            width: det.width,
            height: det.height,
            z_offset: det.z_offset,
            usable: det.usable,
            lumen_center: det.lumen_center,
            image: format!("/frames/{index}/image"),
            patch: vp.patch,
            candidates: det.candidates,
        })
    }

    /// The frame as detection saw it (cropped), PNG-encoded.
    pub fn frame_png(&self, index: usize) -> Result<Vec<u8>, SessionError> {
        self.raw_frame(index)?;
        let stack = self.project.stack_manifest()?;
        let entry = stack
            .frames
            .iter()
            .find(|e| e.index == index)
            .ok_or(SessionError::NotFound(index))?;
        let frame = load_frame(&stack, &self.project.stack_dir(), entry).map_err(|e| SessionError::Invalid(e.to_string()))?;
        encode_png(&frame.image).map_err(|e| SessionError::Invalid(e.to_string()))
    }

    /// Merge `req` into the frame's patch if `req.version` is current.
    pub fn patch(&mut self, index: usize, req: &PatchRequest) -> Result<FrameState, SessionError> {
        let raw = self.raw_frame(index)?;
        let vp = self.stored(index);
        if req.version != vp.version {
            return Err(SessionError::Conflict(Box::new(self.frame(index)?)));
        }
        if req.additions.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(SessionError::Invalid("additions must be finite".into()));
        }
        let merged = vp.patch.merged(&FramePatch {
            additions: req.additions.clone(),
            removals: req.removals.clone(),
        });
        apply_patch(raw, &merged).map_err(|e| SessionError::Invalid(e.to_string()))?;
        let mut next = self.patches.clone();
        next.frames.insert(
            index,
            VersionedPatch {
                version: vp.version + 1,
                patch: merged,
            },
        );
        write(&self.project.patches_path(), next.to_json().as_bytes())?;
        self.patches = next;
        self.frame(index)
    }

    fn cloud(&self) -> Result<StrutCloud, SessionError> {
        let det = patched_detections(&self.raw, &self.patches)?;
        lift_to_3d(&det).map_err(|e| SessionError::Invalid(e.to_string()))
    }

    pub fn flattened(&self) -> Result<FlatView, SessionError> {
        let cloud = self.cloud()?;
        let flat = flatten(&cloud).map_err(|e| SessionError::Invalid(e.to_string()))?;
        let mean_r = flat.iter().map(|f| f.radius).sum::<f64>() / flat.len().max(1) as f64;
        Ok(FlatView {
            points: flat
                .iter()
                .map(|f| {
                    let p = &cloud.points[f.point_ref];
                    FlatViewPoint {
                        u: f.u,
                        v: f.v,
                        frame_index: p.frame_index,
                        source_id: p.source_id,
                    }
                })
                .collect(),
            period: 2.0 * std::f64::consts::PI * mean_r,
        })
    }

    /// Annotation file bytes exactly as last stored.
    pub fn annotations(&self) -> &[u8] {
        &self.annotations
    }

    /// Store `bytes` verbatim after checking they parse as a valid line set.
    pub fn put_annotations(&mut self, bytes: &[u8]) -> Result<(), SessionError> {
        let set: AnnotationSet = serde_json::from_slice(bytes).map_err(|e| SessionError::Invalid(e.to_string()))?;
        set.validate().map_err(|e| SessionError::Invalid(e.to_string()))?;
        write(&self.project.annotations_path(), bytes)?;
        self.annotations = bytes.to_vec();
        Ok(())
    }

    /// Persist patches and annotations, then classify the patched cloud.
    pub fn commit(&mut self) -> Result<CommitReport, SessionError> {
        write(&self.project.patches_path(), self.patches.to_json().as_bytes())?;
        write(&self.project.annotations_path(), &self.annotations)?;
        let lines: AnnotationSet =
            serde_json::from_slice(&self.annotations).map_err(|e| SessionError::Invalid(e.to_string()))?;
        let cloud = self.cloud()?;
        let flat = flatten(&cloud).map_err(|e| SessionError::Invalid(e.to_string()))?;
        let c = classify_points(&cloud, &flat, &lines, self.project.manifest.search_radius)
            .map_err(|e| SessionError::Invalid(e.to_string()))?;
        Ok(CommitReport {
            points: c.points.len(),
            assigned: c.points.len() - c.unassigned.len(),
            unassigned: c.unassigned.len(),
            rings: c.rings().count(),
            beams: c.beams().count(),
        })
    }

    /// Patch versions by frame, for clients polling for changes.
    pub fn versions(&self) -> BTreeMap<usize, u64> {
        self.patches.frames.iter().map(|(k, v)| (*k, v.version)).collect()
    }
}

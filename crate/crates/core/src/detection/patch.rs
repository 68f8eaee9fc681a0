use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CandidateStrut, FrameDetection, RejectReason, Status};

/// Operator corrections for one frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramePatch {
    /// Missed struts as clicked `(row, col)` points.
    #[serde(default)]
    pub additions: Vec<(f64, f64)>,
    /// Candidate ids to discard.
    #[serde(default)]
    pub removals: Vec<u32>,
}

impl FramePatch {
    pub fn is_empty(&self) -> bool {
        self.additions.is_empty() && self.removals.is_empty()
    }

    /// Union of two patches, keeping first-seen order and dropping duplicates.
    pub fn merged(&self, other: &FramePatch) -> FramePatch {
        let mut out = self.clone();
        for &a in &other.additions {
            if !out.additions.contains(&a) {
                out.additions.push(a);
            }
        }
        for &r in &other.removals {
            if !out.removals.contains(&r) {
                out.removals.push(r);
            }
        }
        out
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PatchError {
    #[error("frame {frame}: unknown candidate ids {ids:?}")]
    UnknownIds { frame: usize, ids: Vec<u32> },
}

/// Apply additions and removals. Re-applying the same patch is a no-op:
/// additions already present as manual candidates at the same point are
/// skipped.
pub fn apply_patch(det: &FrameDetection, patch: &FramePatch) -> Result<FrameDetection, PatchError> {
    let mut out = det.clone();
    let mut next_id = out.candidates.iter().map(|c| c.id + 1).max().unwrap_or(0);
    let mut added = Vec::new();
    for &p in &patch.additions {
        let exists = out
            .candidates
            .iter()
            .chain(added.iter())
            .any(|c: &CandidateStrut| c.iteration.is_none() && c.centroid == p);
        if !exists {
            added.push(CandidateStrut::manual(next_id, det.frame_index, p, det.pixel_to_mm(p)));
            next_id += 1;
        }
    }
    out.candidates.extend(added);

    let unknown: Vec<u32> = patch
        .removals
        .iter()
        .copied()
        .filter(|id| !out.candidates.iter().any(|c| c.id == *id))
        .collect();
    if !unknown.is_empty() {
        return Err(PatchError::UnknownIds {
            frame: det.frame_index,
            ids: unknown,
        });
    }
    for c in out.candidates.iter_mut() {
        if patch.removals.contains(&c.id) {
            c.status = Status::Rejected(RejectReason::Manual);
        }
    }
    Ok(out)
}

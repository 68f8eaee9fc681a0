//! Spline wireframe of the stent: periodic ring curves, natural beam curves
//! and the junction table tying beam ends to rings.

mod spline;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use spline::{centripetal_parameters, fit_natural_spline, fit_periodic_spline, SplineCurve, SplineKind};

use crate::topology::{ClassifiedCloud, LineKind};
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum SkeletonError {
    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("consecutive points {0} and {1} coincide")]
    DuplicatePoints(usize, usize),
    #[error("knots: {0}")]
    Knots(String),
    #[error("undersized groups: rings {rings:?}, beams {beams:?}")]
    Undersized { rings: Vec<u32>, beams: Vec<u32> },
    #[error("{kind} {id}: {source}")]
    Fit {
        kind: &'static str,
        id: u32,
        source: Box<SkeletonError>,
    },
    #[error("beam {0}: no ring to attach to")]
    NoRing(u32),
    #[error("skeleton file: {0}")]
    Io(String),
}

/// A parametric curve that can be swept.
pub trait Curve: Sync {
    fn eval(&self, t: f64) -> Vec3;
    fn derivative(&self, t: f64) -> Vec3;
    fn domain(&self) -> (f64, f64);
    fn is_periodic(&self) -> bool;
}

impl Curve for SplineCurve {
    fn eval(&self, t: f64) -> Vec3 {
        SplineCurve::eval(self, t)
    }
    fn derivative(&self, t: f64) -> Vec3 {
        SplineCurve::derivative(self, t)
    }
    fn domain(&self) -> (f64, f64) {
        SplineCurve::domain(self)
    }
    fn is_periodic(&self) -> bool {
        SplineCurve::is_periodic(self)
    }
}

/// Knot scheme for beam curves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamParameterization {
    #[default]
    Centripetal,
    /// Distance along the end-to-end chord; requires monotone points.
    Axial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkeletonConfig {
    /// Junctions farther than this from their ring are flagged dangling (mm).
    pub dangling_threshold: f64,
    pub beam_parameterization: BeamParameterization,
    /// Accept beams with a single point; they are completed by their junctions.
    /// Beam lines that captured no point are then skipped with a warning.
    pub allow_undersized_beams: bool,
    pub projection_samples: usize,
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        Self {
            dangling_threshold: 1.0,
            beam_parameterization: BeamParameterization::Centripetal,
            allow_undersized_beams: false,
            projection_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingCurve {
    pub id: u32,
    pub curve: SplineCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamCurve {
    pub id: u32,
    pub curve: SplineCurve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamEnd {
    Start,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub beam_id: u32,
    pub end: BeamEnd,
    pub ring_id: u32,
    /// Ring parameter of the junction point.
    pub t: f64,
    pub point: Vec3,
    /// Distance from the beam's original end point to the ring (mm).
    pub distance: f64,
    /// The junction came from a point classified as both ring and beam.
    pub shared_point: bool,
    pub dangling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StentSkeleton {
    pub rings: Vec<RingCurve>,
    pub beams: Vec<BeamCurve>,
    pub junctions: Vec<Junction>,
    pub lumen_axis: Vec<Vec3>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl StentSkeleton {
    pub fn ring(&self, id: u32) -> Option<&RingCurve> {
        self.rings.iter().find(|r| r.id == id)
    }

    pub fn beam(&self, id: u32) -> Option<&BeamCurve> {
        self.beams.iter().find(|b| b.id == id)
    }

    pub fn junction(&self, beam_id: u32, end: BeamEnd) -> Option<&Junction> {
        self.junctions.iter().find(|j| j.beam_id == beam_id && j.end == end)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("skeleton serializes")
    }

    pub fn load(path: &Path) -> Result<Self, SkeletonError> {
        let text = std::fs::read_to_string(path).map_err(|e| SkeletonError::Io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| SkeletonError::Io(e.to_string()))
    }
}

fn fit_beam(points: &[Vec3], scheme: BeamParameterization) -> Result<SplineCurve, SkeletonError> {
    match scheme {
        BeamParameterization::Centripetal => fit_natural_spline(points),
        BeamParameterization::Axial => {
            if points.len() < 2 {
                return Err(SkeletonError::InsufficientPoints {
                    needed: 2,
                    got: points.len(),
                });
            }
            let dir = (points[points.len() - 1] - points[0]).normalize();
            let knots: Vec<f64> = points.iter().map(|p| (p - points[0]).dot(&dir)).collect();
            SplineCurve::natural_with_knots(points.to_vec(), knots)
        }
    }
}

/// Project one end of `beam` onto `ring` by a dense scan plus golden-section
/// refinement.
pub fn attach_beam_to_ring(
    beam: &SplineCurve,
    beam_id: u32,
    ring: &RingCurve,
    end: BeamEnd,
    cfg: &SkeletonConfig,
) -> Junction {
    let (t0, t1) = beam.domain();
    let p = beam.eval(if end == BeamEnd::Start { t0 } else { t1 });
    let (t, point, distance) = ring.curve.closest_parameter(&p, cfg.projection_samples);
    Junction {
        beam_id,
        end,
        ring_id: ring.id,
        t,
        point,
        distance,
        shared_point: false,
        dangling: distance > cfg.dangling_threshold,
    }
}

/// Fit rings, resolve both ends of every beam, then fit beams through their
/// points with the junction points as end knots.
pub fn build_skeleton(cloud: &ClassifiedCloud, cfg: &SkeletonConfig) -> Result<StentSkeleton, SkeletonError> {
    let min_beam = if cfg.allow_undersized_beams { 1 } else { 2 };
    let small_rings: Vec<u32> = cloud.rings().filter(|g| g.members.len() < 4).map(|g| g.line_id).collect();
    let small_beams: Vec<u32> = cloud
        .beams()
        .filter(|g| g.members.len() < min_beam && !(cfg.allow_undersized_beams && g.members.is_empty()))
        .map(|g| g.line_id)
        .collect();
    if !small_rings.is_empty() || !small_beams.is_empty() {
        return Err(SkeletonError::Undersized {
            rings: small_rings,
            beams: small_beams,
        });
    }
    let pos = |i: usize| cloud.points[i].position;

    let ring_groups: Vec<_> = cloud.rings().collect();
    let rings = ring_groups
        .par_iter()
        .map(|g| {
            let pts: Vec<Vec3> = g.members.iter().map(|&i| pos(i)).collect();
            fit_periodic_spline(&pts)
                .map(|curve| RingCurve { id: g.line_id, curve })
                .map_err(|e| SkeletonError::Fit {
                    kind: "ring",
                    id: g.line_id,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut warnings = Vec::new();
    let beam_groups: Vec<_> = cloud
        .beams()
        .filter(|g| {
            let empty = g.members.is_empty();
            if empty {
                warnings.push(format!("beam {} has no points and is skipped", g.line_id));
            }
            !empty
        })
        .collect();
    let resolved = beam_groups
        .par_iter()
        .map(|g| resolve_beam(cloud, g.line_id, &g.members, &rings, cfg))
        .collect::<Result<Vec<_>, _>>()?;

    let mut beams = Vec::new();
    let mut junctions = Vec::new();
    for (curve, js) in resolved {
        for j in &js {
            if j.dangling {
                warnings.push(format!(
                    "beam {} {:?} end is {:.3} mm from ring {}",
                    j.beam_id, j.end, j.distance, j.ring_id
                ));
            }
        }
        beams.push(curve);
        junctions.extend(js);
    }

    let mut lumen: Vec<_> = cloud.lumen_centers.clone();
    lumen.sort_by_key(|l| l.frame_index);
    Ok(StentSkeleton {
        rings,
        beams,
        junctions,
        lumen_axis: lumen.iter().map(|l| l.position).collect(),
        warnings,
    })
}

/// Junction from a member already classified into a ring.
fn shared_junction(
    cloud: &ClassifiedCloud,
    beam_id: u32,
    member: usize,
    end: BeamEnd,
    rings: &[RingCurve],
) -> Option<Junction> {
    if !cloud.junction_flags[member] {
        return None;
    }
    let ring_id = cloud.assignments[member].ring?;
    let group = cloud.group(LineKind::Ring, ring_id)?;
    let k = group.members.iter().position(|&m| m == member)?;
    let ring = rings.iter().find(|r| r.id == ring_id)?;
    let t = ring.curve.knots[k];
    Some(Junction {
        beam_id,
        end,
        ring_id,
        t,
        point: ring.curve.eval(t),
        distance: 0.0,
        shared_point: true,
        dangling: false,
    })
}

fn nearest_ring(
    beam: &SplineCurve,
    beam_id: u32,
    rings: &[RingCurve],
    end: BeamEnd,
    exclude: Option<u32>,
    cfg: &SkeletonConfig,
) -> Option<Junction> {
    let mut best: Option<Junction> = None;
    for r in rings {
        if Some(r.id) == exclude && rings.len() > 1 {
            continue;
        }
        let j = attach_beam_to_ring(beam, beam_id, r, end, cfg);
        if best.is_none_or(|b| j.distance < b.distance) {
            best = Some(j);
        }
    }
    best
}

fn resolve_beam(
    cloud: &ClassifiedCloud,
    beam_id: u32,
    members: &[usize],
    rings: &[RingCurve],
    cfg: &SkeletonConfig,
) -> Result<(BeamCurve, Vec<Junction>), SkeletonError> {
    let fit_err = |e| SkeletonError::Fit {
        kind: "beam",
        id: beam_id,
        source: Box::new(e),
    };
    if rings.is_empty() {
        return Err(SkeletonError::NoRing(beam_id));
    }
    let mut pts: Vec<Vec3> = members.iter().map(|&i| cloud.points[i].position).collect();
    let first = members[0];
    let last = members[members.len() - 1];
    let mut start = shared_junction(cloud, beam_id, first, BeamEnd::Start, rings);
    let mut end = if members.len() > 1 {
        shared_junction(cloud, beam_id, last, BeamEnd::End, rings)
    } else {
        None
    };
    if start.is_some() && end.is_some() && start.unwrap().ring_id == end.unwrap().ring_id {
        end = None;
    }
    // Provisional curve for projecting unresolved ends.
    let provisional = if pts.len() >= 2 {
        Some(fit_beam(&pts, cfg.beam_parameterization).map_err(fit_err)?)
    } else {
        None
    };
    let point_curve = |p: Vec3| SplineCurve {
        kind: SplineKind::Natural,
        knots: vec![0.0, 1.0],
        points: vec![p, p],
        moments: vec![Vec3::zeros(); 2],
    };
    let probe = provisional.unwrap_or_else(|| point_curve(pts[0]));
    if start.is_none() {
        start = nearest_ring(&probe, beam_id, rings, BeamEnd::Start, end.map(|j| j.ring_id), cfg);
    }
    if end.is_none() {
        end = nearest_ring(&probe, beam_id, rings, BeamEnd::End, start.map(|j| j.ring_id), cfg);
    }
    let (start, end) = (start.unwrap(), end.unwrap());

    let snap = 1e-9;
    if !start.shared_point {
        if (pts[0] - start.point).norm() <= snap {
            pts[0] = start.point;
        } else {
            pts.insert(0, start.point);
        }
    }
    if !end.shared_point {
        let n = pts.len();
        if (pts[n - 1] - end.point).norm() <= snap && n > 1 {
            pts[n - 1] = end.point;
        } else {
            pts.push(end.point);
        }
    }
    let curve = fit_beam(&pts, cfg.beam_parameterization).map_err(fit_err)?;
    Ok((BeamCurve { id: beam_id, curve }, vec![start, end]))
}

//! Lifting detections to 3D, unrolling the cloud onto the `(r·θ, z)` plane
//! and grouping points by operator-drawn ring and beam polylines.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::DetectionSet;
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("annotation line {id}: {msg}")]
    Line { id: u32, msg: String },
    #[error("duplicate annotation line id {0}")]
    DuplicateLine(u32),
    #[error("empty cloud")]
    EmptyCloud,
}

/// One strut centroid in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrutPoint3D {
    pub position: Vec3,
    pub frame_index: usize,
    pub source_id: u32,
}

/// Per-frame lumen center, in the same space as the strut points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LumenSample {
    pub frame_index: usize,
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrutCloud {
    pub points: Vec<StrutPoint3D>,
    pub lumen_centers: Vec<LumenSample>,
}

/// Active candidates of every usable frame as `(x, y, z_offset)`.
pub fn lift_to_3d(set: &DetectionSet) -> Result<StrutCloud, TopologyError> {
    if !(set.resolution_mm_per_px > 0.0) {
        return Err(TopologyError::Manifest("resolution must be > 0".into()));
    }
    if !(set.spacing_mm > 0.0) {
        return Err(TopologyError::Manifest("spacing must be > 0".into()));
    }
    let mut frames: Vec<_> = set.frames.iter().collect();
    frames.sort_by_key(|f| f.frame_index);
    if frames.windows(2).any(|w| !(w[1].z_offset > w[0].z_offset)) {
        return Err(TopologyError::Manifest("z offsets must increase with frame index".into()));
    }
    let mut points = Vec::new();
    let mut lumen_centers = Vec::new();
    for f in frames {
        for c in f.active() {
            let (x, y) = f.pixel_to_mm(c.centroid);
            points.push(StrutPoint3D {
                position: Vec3::new(x, y, f.z_offset),
                frame_index: f.frame_index,
                source_id: c.id,
            });
        }
        if let Some(lc) = f.lumen_center {
            let (x, y) = f.pixel_to_mm(lc);
            lumen_centers.push(LumenSample {
                frame_index: f.frame_index,
                position: Vec3::new(x, y, f.z_offset),
            });
        }
    }
    Ok(StrutCloud { points, lumen_centers })
}

/// A cloud point unrolled onto the `(u, v) = (r·θ, z)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlattenedPoint {
    pub u: f64,
    pub v: f64,
    pub theta: f64,
    pub radius: f64,
    pub point_ref: usize,
    /// Set when the point sits on the axis and θ was forced to 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub on_axis: bool,
}

/// Mean `(x, y)` of the positions.
pub fn center_of_mass(points: &[Vec3]) -> (f64, f64) {
    let n = points.len().max(1) as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
    (sx / n, sy / n)
}

/// Unroll positions about the z axis through their center of mass, sorted by
/// `θ ∈ [−π, π)`.
pub fn flatten_positions(positions: &[Vec3]) -> Result<Vec<FlattenedPoint>, TopologyError> {
    if positions.is_empty() {
        return Err(TopologyError::EmptyCloud);
    }
    let o = center_of_mass(positions);
    let mut out: Vec<FlattenedPoint> = positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (dx, dy) = (p.x - o.0, p.y - o.1);
            let radius = (dx * dx + dy * dy).sqrt();
            let on_axis = radius < 1e-12;
            let mut theta = if on_axis { 0.0 } else { dy.atan2(dx) };
            if theta >= PI {
                theta -= 2.0 * PI;
            }
            FlattenedPoint {
                u: radius * theta,
                v: p.z,
                theta,
                radius,
                point_ref: i,
                on_axis,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.theta
            .total_cmp(&b.theta)
            .then(a.v.total_cmp(&b.v))
            .then(a.radius.total_cmp(&b.radius))
            .then(a.point_ref.cmp(&b.point_ref))
    });
    Ok(out)
}

pub fn flatten(cloud: &StrutCloud) -> Result<Vec<FlattenedPoint>, TopologyError> {
    let pos: Vec<Vec3> = cloud.points.iter().map(|p| p.position).collect();
    flatten_positions(&pos)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Ring,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationLine {
    pub id: u32,
    pub kind: LineKind,
    /// `(u, v)` vertices in mm.
    pub polyline: Vec<(f64, f64)>,
}

impl AnnotationLine {
    pub fn validate(&self) -> Result<(), TopologyError> {
        let err = |msg: &str| TopologyError::Line {
            id: self.id,
            msg: msg.into(),
        };
        if self.polyline.len() < 2 {
            return Err(err("needs at least 2 vertices"));
        }
        if self.polyline.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(err("non-finite vertex"));
        }
        if self.kind == LineKind::Ring && self.polyline.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(err("ring vertices must have increasing u"));
        }
        Ok(())
    }

    /// Distance from `(u, v)` to the polyline.
    pub fn distance(&self, p: (f64, f64)) -> f64 {
        self.polyline
            .windows(2)
            .map(|w| segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (ex, ey) = (b.0 - a.0, b.1 - a.1);
    let len2 = ex * ex + ey * ey;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * ex + (p.1 - a.1) * ey) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (p.0 - a.0 - t * ex, p.1 - a.1 - t * ey);
    (dx * dx + dy * dy).sqrt()
}

/// The annotation file: a flat list of lines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSet {
    pub lines: Vec<AnnotationLine>,
}

impl AnnotationSet {
    pub fn validate(&self) -> Result<(), TopologyError> {
        let mut seen = BTreeSet::new();
        for l in &self.lines {
            l.validate()?;
            if !seen.insert(l.id) {
                return Err(TopologyError::DuplicateLine(l.id));
            }
        }
        Ok(())
    }
}

/// Line ids a point was assigned to, at most one per kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam: Option<u32>,
}

impl Assignment {
    pub fn is_empty(&self) -> bool {
        self.ring.is_none() && self.beam.is_none()
    }

    pub fn is_junction(&self) -> bool {
        self.ring.is_some() && self.beam.is_some()
    }
}

/// Ordered members of one annotation line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub line_id: u32,
    pub kind: LineKind,
    /// Indices into `ClassifiedCloud::points`; rings cyclic by θ, beams by z.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedCloud {
    pub points: Vec<StrutPoint3D>,
    /// Flattened `(u, v, θ)` per point, in cloud order.
    pub flat: Vec<(f64, f64, f64)>,
    pub assignments: Vec<Assignment>,
    pub junction_flags: Vec<bool>,
    pub groups: Vec<Group>,
    pub unassigned: Vec<usize>,
    pub lumen_centers: Vec<LumenSample>,
}

impl ClassifiedCloud {
    pub fn group(&self, kind: LineKind, id: u32) -> Option<&Group> {
        self.groups.iter().find(|g| g.kind == kind && g.line_id == id)
    }

    pub fn rings(&self) -> impl Iterator<Item = &Group> {
        self.groups.iter().filter(|g| g.kind == LineKind::Ring)
    }

    pub fn beams(&self) -> impl Iterator<Item = &Group> {
        self.groups.iter().filter(|g| g.kind == LineKind::Beam)
    }
}

/// Assign every point to the nearest line of each kind within
/// `search_radius`. Distances are measured to the point's periodic images
/// `u ± 2πr` as well, so lines drawn across the ±π seam still capture it.
pub fn classify_points(
    cloud: &StrutCloud,
    flat: &[FlattenedPoint],
    lines: &AnnotationSet,
    search_radius: f64,
) -> Result<ClassifiedCloud, TopologyError> {
    lines.validate()?;
    let n = cloud.points.len();
    let mut flat_by_ref = vec![(0.0, 0.0, 0.0); n];
    let mut radius = vec![0.0; n];
    for f in flat {
        flat_by_ref[f.point_ref] = (f.u, f.v, f.theta);
        radius[f.point_ref] = f.radius;
    }
    let mut ordered: Vec<&AnnotationLine> = lines.lines.iter().collect();
    ordered.sort_by_key(|l| l.id);

    let mut assignments = vec![Assignment::default(); n];
    for i in 0..n {
        let (u, v, _) = flat_by_ref[i];
        let period = 2.0 * PI * radius[i];
        let mut best: BTreeMap<LineKind, (f64, u32)> = BTreeMap::new();
        for l in &ordered {
            let d = [-1.0, 0.0, 1.0]
                .iter()
                .map(|k| l.distance((u + k * period, v)))
                .fold(f64::INFINITY, f64::min);
            if d > search_radius {
                continue;
            }
            let e = best.entry(l.kind).or_insert((d, l.id));
            if d < e.0 {
                *e = (d, l.id);
            }
        }
        assignments[i] = Assignment {
            ring: best.get(&LineKind::Ring).map(|b| b.1),
            beam: best.get(&LineKind::Beam).map(|b| b.1),
        };
    }

    let pos = |i: usize| cloud.points[i].position;
    let mut groups = Vec::new();
    for l in &ordered {
        let mut members: Vec<usize> = (0..n)
            .filter(|&i| match l.kind {
                LineKind::Ring => assignments[i].ring == Some(l.id),
                LineKind::Beam => assignments[i].beam == Some(l.id),
            })
            .collect();
        let key = |i: &usize, j: &usize| {
            let (a, b) = (flat_by_ref[*i], flat_by_ref[*j]);
            let (pa, pb) = (pos(*i), pos(*j));
            let primary = match l.kind {
                LineKind::Ring => a.2.total_cmp(&b.2).then(a.1.total_cmp(&b.1)),
                LineKind::Beam => a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)),
            };
            primary.then(pa.x.total_cmp(&pb.x)).then(pa.y.total_cmp(&pb.y))
        };
        members.sort_by(key);
        groups.push(Group {
            line_id: l.id,
            kind: l.kind,
            members,
        });
    }
    let unassigned = (0..n).filter(|&i| assignments[i].is_empty()).collect();
    Ok(ClassifiedCloud {
        points: cloud.points.clone(),
        flat: flat_by_ref,
        junction_flags: assignments.iter().map(|a| a.is_junction()).collect(),
        assignments,
        groups,
        unassigned,
        lumen_centers: cloud.lumen_centers.clone(),
    })
}

/// Rotate each ring's cyclic member list so it starts after the widest
/// angular gap. The result no longer depends on where the ±π seam falls.
pub fn wrap_ring_groups(mut c: ClassifiedCloud) -> ClassifiedCloud {
    for g in c.groups.iter_mut().filter(|g| g.kind == LineKind::Ring) {
        let m = g.members.len();
        if m < 2 {
            continue;
        }
        let theta = |k: usize| c.flat[g.members[k]].2;
        let mut best = (0usize, f64::NEG_INFINITY);
        for k in 0..m {
            let next = (k + 1) % m;
            let mut gap = theta(next) - theta(k);
            if next == 0 {
                gap += 2.0 * PI;
            }
            if gap > best.1 + 1e-12 {
                best = (next, gap);
            }
        }
        g.members.rotate_left(best.0);
    }
    c
}

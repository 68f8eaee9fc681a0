//! Catheter-wire framing and per-frame rigid placement of strut points.
//!
//! Frames along the wire are rotation-minimizing (double-reflection
//! transport) rather than Frenet frames, so they stay defined on straight
//! runs and do not flip at inflections. The image plane of frame `i` is
//! spanned by the normal and binormal at its arclength.

use nalgebra::{Matrix3, Rotation3, Unit};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::collections::HashMap;

use crate::topology::ClassifiedCloud;
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum RegistrationError {
    #[error("wire path needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("wire path samples {0} and {1} coincide")]
    DuplicateSamples(usize, usize),
    #[error("invalid step {step} for path of length {length}")]
    Step { step: f64, length: f64 },
    #[error("arclength {s} outside [0, {length}]")]
    OutOfRange { s: f64, length: f64 },
    #[error("frames {0:?} fall outside the wire path")]
    FramesOutOfRange(Vec<usize>),
    #[error("no transform for frames {0:?}")]
    MissingTransforms(Vec<usize>),
    #[error("wire path file: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, RegistrationError>;

/// Ordered 3D polyline with cumulative arclength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePath {
    samples: Vec<Vec3>,
    arclength: Vec<f64>,
}

impl WirePath {
    pub fn new(samples: Vec<Vec3>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(RegistrationError::TooFewSamples(samples.len()));
        }
        let mut arclength = Vec::with_capacity(samples.len());
        arclength.push(0.0);
        for i in 1..samples.len() {
            let d = (samples[i] - samples[i - 1]).norm();
            if d <= 0.0 {
                return Err(RegistrationError::DuplicateSamples(i - 1, i));
            }
            arclength.push(arclength[i - 1] + d);
        }
        Ok(Self { samples, arclength })
    }

    pub fn samples(&self) -> &[Vec3] {
        &self.samples
    }

    pub fn arclength(&self) -> &[f64] {
        &self.arclength
    }

    pub fn length(&self) -> f64 {
        *self.arclength.last().unwrap()
    }

    /// Read `[[x, y, z], ...]` JSON or `x,y,z` CSV lines.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| RegistrationError::Io(e.to_string()))?;
        let pts: Vec<[f64; 3]> = if text.trim_start().starts_with('[') {
            serde_json::from_str(&text).map_err(|e| RegistrationError::Io(e.to_string()))?
        } else {
            text.lines()
                .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
                .map(|l| {
                    let v: Vec<f64> = l
                        .split(',')
                        .map(|t| t.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| RegistrationError::Io(format!("{l:?}: {e}")))?;
                    <[f64; 3]>::try_from(v)
                        .map_err(|_| RegistrationError::Io(format!("{l:?}: expected x,y,z")))
                })
                .collect::<Result<_>>()?
        };
        Self::new(pts.into_iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect())
    }

    pub fn to_json(&self) -> String {
        let pts: Vec<[f64; 3]> = self.samples.iter().map(|p| [p.x, p.y, p.z]).collect();
        serde_json::to_string(&pts).expect("plain numbers serialize")
    }
}

/// Walk `steps` chords of length `c` along the polyline from its start.
/// Returns the visited points (start excluded), or `None` if the polyline
/// ends first.
fn chord_walk(pts: &[Vec3], c: f64, steps: usize) -> Option<Vec<Vec3>> {
    let mut out = Vec::with_capacity(steps);
    let mut q = pts[0];
    let (mut seg, mut t0) = (0usize, 0.0f64);
    for _ in 0..steps {
        let mut found = None;
        while seg + 1 < pts.len() {
            let (a, b) = (pts[seg], pts[seg + 1]);
            let d = b - a;
            // |a + t d − q|² = c², take the exit root.
            let w = a - q;
            let (aa, bb, cc) = (d.dot(&d), 2.0 * d.dot(&w), w.dot(&w) - c * c);
            let disc = bb * bb - 4.0 * aa * cc;
            if disc >= 0.0 {
                let t = (-bb + disc.sqrt()) / (2.0 * aa);
                if t >= t0 && t <= 1.0 {
                    found = Some((seg, t, a + d * t));
                    break;
                }
            }
            seg += 1;
            t0 = 0.0;
        }
        let (s, t, p) = found?;
        seg = s;
        t0 = t;
        q = p;
        out.push(p);
    }
    Some(out)
}

/// Resample to `round(L / step)` equal chords; both endpoints are kept.
pub fn resample_by_arclength(path: &WirePath, step: f64) -> Result<WirePath> {
    let length = path.length();
    if !(step > 0.0) || step > length {
        return Err(RegistrationError::Step { step, length });
    }
    let n = ((length / step).round() as usize).max(1);
    let pts = path.samples();
    let end = *pts.last().unwrap();
    let residual = |c: f64| -> f64 {
        match chord_walk(pts, c, n - 1) {
            Some(w) => (end - w.last().copied().unwrap_or(pts[0])).norm() - c,
            None => -c,
        }
    };
    let (mut lo, mut hi) = (0.0, length / n as f64 * (1.0 + 1e-12));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let c = 0.5 * (lo + hi);
    let mut samples = vec![pts[0]];
    samples.extend(chord_walk(pts, c, n - 1).expect("bracketed chord walks through"));
    samples.push(end);
    WirePath::new(samples)
}

/// Orthonormal right-handed triad at a point of the wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovingFrame {
    pub origin: Vec3,
    pub tangent: Vec3,
    pub normal: Vec3,
    pub binormal: Vec3,
}

impl MovingFrame {
    /// Columns `(normal, binormal, tangent)`.
    pub fn rotation(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[self.normal, self.binormal, self.tangent])
    }

    /// In-plane `(x, y)` to world.
    pub fn to_world(&self, x: f64, y: f64) -> Vec3 {
        self.origin + self.normal * x + self.binormal * y
    }
}

/// Axis least aligned with `t`, made perpendicular to it.
fn seed_normal(t: &Vec3) -> Vec3 {
    let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
    let mut best = axes[0];
    for a in &axes[1..] {
        if a.dot(t).abs() < best.dot(t).abs() {
            best = *a;
        }
    }
    (best - t * best.dot(t)).normalize()
}

/// Rotate `v` by the smallest rotation taking unit `a` to unit `b`.
/// Closed form, stable as `a → b`; `a = −b` is left unrotated.
fn minimal_rotation(a: &Vec3, b: &Vec3, v: &Vec3) -> Vec3 {
    let (w, c) = (a.cross(b), a.dot(b));
    if c <= -1.0 + 1e-12 {
        return *v;
    }
    v * c + w.cross(v) + w * (w.dot(v) / (1.0 + c))
}

/// Unit direction at `a` toward `b` and `c`, from the three-point one-sided
/// difference over chord lengths (second order, like the centered one).
fn one_sided(a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let (h1, h2) = ((b - a).norm(), (c - b).norm());
    let d = -a * ((2.0 * h1 + h2) / (h1 * (h1 + h2))) + b * ((h1 + h2) / (h1 * h2)) - c * (h1 / (h2 * (h1 + h2)));
    if d.norm() > 0.0 {
        d.normalize()
    } else {
        (b - a).normalize()
    }
}

/// Rotation-minimizing frames at every sample: centered-difference tangents
/// inside, three-point one-sided ones at the ends, normals carried by double
/// reflection.
pub fn frames_along(path: &WirePath) -> Result<Vec<MovingFrame>> {
    let p = path.samples();
    let n = p.len();
    for i in 1..n {
        if (p[i] - p[i - 1]).norm() <= 0.0 {
            return Err(RegistrationError::DuplicateSamples(i - 1, i));
        }
    }
    let tangents: Vec<Vec3> = (0..n)
        .map(|i| {
            if n >= 3 && i == 0 {
                one_sided(p[0], p[1], p[2])
            } else if n >= 3 && i == n - 1 {
                -one_sided(p[n - 1], p[n - 2], p[n - 3])
            } else {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                (p[b] - p[a]).normalize()
            }
        })
        .collect();
    let mut frames = Vec::with_capacity(n);
    let mut r = seed_normal(&tangents[0]);
    for i in 0..n {
        let t = tangents[i];
        if i > 0 {
            let v1 = p[i] - p[i - 1];
            let c1 = v1.dot(&v1);
            let r_l = r - v1 * (2.0 / c1 * v1.dot(&r));
            let t_l = tangents[i - 1] - v1 * (2.0 / c1 * v1.dot(&tangents[i - 1]));
            let v2 = t - t_l;
            let c2 = v2.dot(&v2);
            r = if c2 > 1e-300 {
                r_l - v2 * (2.0 / c2 * v2.dot(&r_l))
            } else {
                r_l
            };
            r = (r - t * r.dot(&t)).normalize();
        }
        frames.push(MovingFrame {
            origin: p[i],
            tangent: t,
            normal: r,
            binormal: t.cross(&r),
        });
    }
    Ok(frames)
}

/// A resampled wire with its frames; frames between samples are interpolated.
#[derive(Debug, Clone)]
pub struct FramedPath {
    path: WirePath,
    frames: Vec<MovingFrame>,
}

impl FramedPath {
    pub fn new(path: &WirePath, step: f64) -> Result<Self> {
        let path = resample_by_arclength(path, step)?;
        let frames = frames_along(&path)?;
        Ok(Self { path, frames })
    }

    pub fn path(&self) -> &WirePath {
        &self.path
    }

    pub fn frames(&self) -> &[MovingFrame] {
        &self.frames
    }

    pub fn length(&self) -> f64 {
        self.path.length()
    }

    /// Frame at arclength `s`: origin on the chord, tangent blended, normal
    /// carried from the preceding sample by the minimal rotation.
    pub fn frame_at(&self, s: f64) -> Result<MovingFrame> {
        let len = self.length();
        let tol = 1e-9 * len.max(1.0);
        if !(s >= -tol && s <= len + tol) {
            return Err(RegistrationError::OutOfRange { s, length: len });
        }
        let s = s.clamp(0.0, len);
        let arc = self.path.arclength();
        let k = match arc.binary_search_by(|a| a.partial_cmp(&s).unwrap()) {
            Ok(k) => return Ok(self.frames[k]),
            Err(k) => k - 1,
        };
        let f = (s - arc[k]) / (arc[k + 1] - arc[k]);
        let (a, b) = (&self.frames[k], &self.frames[k + 1]);
        let origin = a.origin + (b.origin - a.origin) * f;
        let t = (a.tangent * (1.0 - f) + b.tangent * f).normalize();
        let normal = minimal_rotation(&a.tangent, &t, &a.normal);
        let normal = (normal - t * normal.dot(&t)).normalize();
        Ok(MovingFrame {
            origin,
            tangent: t,
            normal,
            binormal: t.cross(&normal),
        })
    }
}

/// Correspondence between one frame of the stack and a wire arclength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Landmark {
    pub frame_index: usize,
    pub arclength: f64,
}

/// Whether frame indices advance along the wire samples or against them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PullbackDirection {
    /// Increasing frame index moves toward later wire samples.
    #[default]
    DistalToProximal,
    ProximalToDistal,
}

impl PullbackDirection {
    fn sign(self) -> f64 {
        match self {
            PullbackDirection::DistalToProximal => 1.0,
            PullbackDirection::ProximalToDistal => -1.0,
        }
    }
}

/// Rigid placement of one frame's image plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTransform {
    pub frame_index: usize,
    pub arclength: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl FrameTransform {
    pub fn identity(frame_index: usize, z: f64) -> Self {
        Self {
            frame_index,
            arclength: z,
            rotation: Matrix3::identity(),
            translation: Vec3::new(0.0, 0.0, z),
        }
    }

    /// In-plane `(x, y)` mm to world.
    pub fn apply(&self, x: f64, y: f64) -> Vec3 {
        self.translation + self.rotation * Vec3::new(x, y, 0.0)
    }
}

/// Frame `i` sits at `landmark.arclength ± (i − landmark.frame_index)·spacing`
/// with its image axes along the (rolled) normal and binormal.
pub fn place_frames(
    path: &FramedPath,
    landmark: &Landmark,
    spacing: f64,
    frame_indices: &[usize],
    direction: PullbackDirection,
    roll: f64,
) -> Result<Vec<FrameTransform>> {
    let roll_rot = Rotation3::from_axis_angle(&Unit::new_unchecked(Vec3::z()), roll);
    let mut out = Vec::with_capacity(frame_indices.len());
    let mut bad = Vec::new();
    for &i in frame_indices {
        let s = landmark.arclength + direction.sign() * (i as f64 - landmark.frame_index as f64) * spacing;
        match path.frame_at(s) {
            Ok(f) => out.push(FrameTransform {
                frame_index: i,
                arclength: s,
                rotation: f.rotation() * roll_rot.matrix(),
                translation: f.origin,
            }),
            Err(_) => bad.push(i),
        }
    }
    if !bad.is_empty() {
        return Err(RegistrationError::FramesOutOfRange(bad));
    }
    Ok(out)
}

/// Map in-plane `(x, y)` of frame `frame_index` to world using `transforms`.
pub fn register_point(transforms: &[FrameTransform], frame_index: usize, x: f64, y: f64) -> Option<Vec3> {
    transforms
        .iter()
        .find(|t| t.frame_index == frame_index)
        .map(|t| t.apply(x, y))
}

/// Map every point and lumen center of a straight classified cloud through
/// its frame's transform. Labels, groups and flags are carried verbatim.
pub fn register_cloud(cloud: &ClassifiedCloud, transforms: &[FrameTransform]) -> Result<ClassifiedCloud> {
    let by_frame: HashMap<usize, &FrameTransform> = transforms.iter().map(|t| (t.frame_index, t)).collect();
    let mut missing: Vec<usize> = cloud
        .points
        .iter()
        .map(|p| p.frame_index)
        .chain(cloud.lumen_centers.iter().map(|l| l.frame_index))
        .filter(|f| !by_frame.contains_key(f))
        .collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        missing.dedup();
        return Err(RegistrationError::MissingTransforms(missing));
    }
    let mut out = cloud.clone();
    for p in out.points.iter_mut() {
        p.position = by_frame[&p.frame_index].apply(p.position.x, p.position.y);
    }
    for l in out.lumen_centers.iter_mut() {
        l.position = by_frame[&l.frame_index].apply(l.position.x, l.position.y);
    }
    Ok(out)
}

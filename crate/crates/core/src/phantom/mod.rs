//! Parametric synthetic stent with exact ground truth.
//!
//! A straight design of sinusoidal rings joined by axial beams is swept into
//! a solid, twisted about its axis and bent along a circular arc. Slicing the
//! deformed solid perpendicular to the arc yields a binary frame stack with
//! known strut centers, labels and shadow occlusion.

mod export;
mod slice;

use std::f64::consts::PI;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use export::{
    generate_phantom, hidden_beams, render_frame, truth_annotations, write_phantom, PhantomConfig, PhantomFiles,
    PhantomTruthFile, TruthFrame, WallSpec, BEAM_LINE_OFFSET,
};
pub use slice::{
    add_shadow, rasterize_section, section_segments, slice_stack, PhantomFrame, PhantomStack, Section,
    ShadowSector, ShadowSpec, SliceConfig, TruthStrut,
};

use crate::registration::{MovingFrame, WirePath};
use crate::skeleton::{BeamEnd, Curve, Junction};
use crate::surface::{build_stent_mesh, JoinReport, StentMesh, SurfaceConfig, SurfaceError};
use crate::validation::mesh_volume;
use crate::Vec3;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("invalid design: {0}")]
    Design(String),
    #[error("invalid deformation: {0}")]
    Deformation(String),
    #[error("invalid slicing: {0}")]
    Slice(String),
    #[error("solid: {0}")]
    Surface(#[from] SurfaceError),
    #[error("solid volume: {0}")]
    Volume(String),
    #[error("centerline: {0}")]
    Centerline(String),
    #[error("{0}")]
    Io(String),
}

/// Straight, undeployed stent layout. Dimensions in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StentDesignSpec {
    pub n_rings: usize,
    pub ring_pitch: f64,
    pub radius: f64,
    pub sinusoid_peaks: usize,
    pub sinusoid_amplitude: f64,
    pub beams_per_pair: usize,
    /// Ring section `(width, depth)`.
    pub ring_dims: (f64, f64),
    /// Beam section `(width, depth)`.
    pub beam_dims: (f64, f64),
    pub ring_sections: usize,
    pub beam_sections: usize,
    /// Clearance left between a trimmed beam end and the ring face.
    pub joint_gap: f64,
}

impl Default for StentDesignSpec {
    fn default() -> Self {
        Self {
            n_rings: 15,
            ring_pitch: 1.1,
            radius: 1.5,
            sinusoid_peaks: 8,
            sinusoid_amplitude: 0.3,
            beams_per_pair: 4,
            ring_dims: (0.15, 0.15),
            beam_dims: (0.20, 0.15),
            ring_sections: 2000,
            beam_sections: 200,
            joint_gap: 0.02,
        }
    }
}

impl StentDesignSpec {
    pub fn validate(&self) -> Result<(), PhantomError> {
        let err = |m: &str| Err(PhantomError::Design(m.into()));
        let positive = [
            self.ring_pitch,
            self.radius,
            self.ring_dims.0,
            self.ring_dims.1,
            self.beam_dims.0,
            self.beam_dims.1,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return err("pitch, radius and strut dimensions must be positive");
        }
        if !(self.sinusoid_amplitude >= 0.0) || !(self.joint_gap >= 0.0) {
            return err("amplitude and joint gap must be non-negative");
        }
        if self.n_rings == 0 || self.sinusoid_peaks == 0 {
            return err("need at least one ring and one peak");
        }
        if self.beams_per_pair == 0 || self.beams_per_pair > self.sinusoid_peaks {
            return err("beams_per_pair must lie in [1, sinusoid_peaks]");
        }
        if self.ring_sections < 3 || self.beam_sections < 2 {
            return err("too few sweep sections");
        }
        let gap = self.ring_pitch - 2.0 * self.sinusoid_amplitude - self.ring_dims.0;
        if !(gap > 0.0) {
            return err("adjacent rings intersect (pitch - 2·amplitude - ring width <= 0)");
        }
        if !(gap > 2.0 * self.joint_gap) {
            return err("beams are shorter than their joint clearances");
        }
        // Unrolled curvature at a peak against the half width of the ring.
        let kappa = self.sinusoid_amplitude * (self.sinusoid_peaks as f64 / self.radius).powi(2);
        if !(kappa * self.ring_dims.0 / 2.0 < 1.0) {
            return err("ring folds onto itself at its peaks");
        }
        if !(self.ring_dims.1.max(self.beam_dims.1) / 2.0 < self.radius) {
            return err("strut depth exceeds the radius");
        }
        Ok(())
    }

    /// Axial extent `(z_min, z_max)` of the straight solid.
    pub fn z_range(&self) -> (f64, f64) {
        let half = self.sinusoid_amplitude + self.ring_dims.0 / 2.0;
        (-half, (self.n_rings - 1) as f64 * self.ring_pitch + half)
    }

    pub fn length(&self) -> f64 {
        let (a, b) = self.z_range();
        b - a
    }

    pub fn beam_count(&self) -> usize {
        (self.n_rings - 1) * self.beams_per_pair
    }

    fn ring_phase(&self, ring: usize) -> f64 {
        // Adjacent rings are half a period apart so peaks face valleys.
        if ring % 2 == 0 {
            0.0
        } else {
            PI
        }
    }

    /// Angle of peak `k` of `ring`.
    pub fn peak_angle(&self, ring: usize, k: usize) -> f64 {
        let p = self.sinusoid_peaks as f64;
        ((PI / 2.0 - self.ring_phase(ring) + 2.0 * PI * k as f64) / p).rem_euclid(2.0 * PI)
    }

    /// Peaks of `ring` carrying beams to `ring + 1`; alternate pairs are
    /// offset so beams do not line up along the stent.
    pub fn beam_peaks(&self, pair: usize) -> Vec<usize> {
        let (p, b) = (self.sinusoid_peaks, self.beams_per_pair);
        let shift = if pair % 2 == 1 { p / (2 * b) } else { 0 };
        (0..b).map(|m| (m * p / b + shift) % p).collect()
    }
}

/// Twist and bend of the straight design, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeformationSpec {
    pub twist_angle: f64,
    pub bend_angle: f64,
}

impl Default for DeformationSpec {
    fn default() -> Self {
        Self {
            twist_angle: 60.0,
            bend_angle: 60.0,
        }
    }
}

impl DeformationSpec {
    pub fn validate(&self) -> Result<(), PhantomError> {
        if !(self.twist_angle >= 0.0 && self.twist_angle.is_finite()) {
            return Err(PhantomError::Deformation("twist angle must be >= 0".into()));
        }
        if !(self.bend_angle >= 0.0 && self.bend_angle < 360.0) {
            return Err(PhantomError::Deformation("bend angle must lie in [0, 360)".into()));
        }
        Ok(())
    }

    /// Radius of the bent axis for a stent of the given length.
    pub fn bend_radius(&self, length: f64) -> Option<f64> {
        (self.bend_angle > 0.0).then(|| length / self.bend_angle.to_radians())
    }
}

/// Twist about the z axis followed by bending the axis onto an arc in the
/// x–z plane. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deformation {
    pub twist: f64,
    pub bend: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Deformation {
    pub fn identity(z_min: f64, z_max: f64) -> Self {
        Self {
            twist: 0.0,
            bend: 0.0,
            z_min,
            z_max,
        }
    }

    pub fn length(&self) -> f64 {
        self.z_max - self.z_min
    }

    fn twist_rate(&self) -> f64 {
        self.twist / self.length()
    }

    /// `θ' = θ + twist·(z − z_min)/(z_max − z_min)`.
    pub fn twist_point(&self, p: &Vec3) -> Vec3 {
        let a = self.twist_rate() * (p.z - self.z_min);
        let (s, c) = a.sin_cos();
        Vec3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z)
    }

    fn twist_jacobian(&self, p: &Vec3) -> Matrix3<f64> {
        let a = self.twist_rate() * (p.z - self.z_min);
        let (s, c) = a.sin_cos();
        let q = self.twist_point(p);
        let k = self.twist_rate();
        Matrix3::new(c, -s, -k * q.y, s, c, k * q.x, 0.0, 0.0, 1.0)
    }

    pub fn bend_radius(&self) -> Option<f64> {
        (self.bend != 0.0).then(|| self.length() / self.bend)
    }

    /// Centerline point, unit tangent and in-plane x direction at arclength `s`.
    pub fn axis_frame(&self, s: f64) -> (Vec3, Vec3, Vec3) {
        match self.bend_radius() {
            None => (Vec3::new(0.0, 0.0, self.z_min + s), Vec3::z(), Vec3::x()),
            Some(rb) => {
                let (sp, cp) = (s / rb).sin_cos();
                (
                    Vec3::new(rb * (1.0 - cp), 0.0, self.z_min + rb * sp),
                    Vec3::new(sp, 0.0, cp),
                    Vec3::new(cp, 0.0, -sp),
                )
            }
        }
    }

    /// Map the plane `z = z_min + s` rigidly onto the plane normal to the arc.
    pub fn bend_point(&self, p: &Vec3) -> Vec3 {
        if self.bend == 0.0 {
            return *p;
        }
        let (c, _, ex) = self.axis_frame(p.z - self.z_min);
        c + ex * p.x + Vec3::y() * p.y
    }

    fn bend_jacobian(&self, p: &Vec3) -> Matrix3<f64> {
        let (_, t, ex) = self.axis_frame(p.z - self.z_min);
        let stretch = self.bend_radius().map_or(1.0, |rb| 1.0 - p.x / rb);
        Matrix3::from_columns(&[ex, Vec3::y(), t * stretch])
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.bend_point(&self.twist_point(p))
    }

    pub fn jacobian(&self, p: &Vec3) -> Matrix3<f64> {
        self.bend_jacobian(&self.twist_point(p)) * self.twist_jacobian(p)
    }

    /// Analytic slice frame at arclength `s`: the image x axis is the bent
    /// design x axis, y is the design y axis.
    pub fn frame_at(&self, s: f64) -> MovingFrame {
        let (origin, tangent, normal) = self.axis_frame(s);
        MovingFrame {
            origin,
            tangent,
            normal,
            binormal: tangent.cross(&normal),
        }
    }

    /// Centerline sampled every `step` mm, both ends included.
    pub fn centerline(&self, step: f64) -> Result<WirePath, PhantomError> {
        if !(step > 0.0) {
            return Err(PhantomError::Centerline("step must be > 0".into()));
        }
        let n = (self.length() / step).ceil().max(1.0) as usize;
        let pts = (0..=n)
            .map(|k| self.axis_frame(self.length() * k as f64 / n as f64).0)
            .collect();
        WirePath::new(pts).map_err(|e| PhantomError::Centerline(e.to_string()))
    }
}

/// Undeformed component shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DesignShape {
    /// `(R cos θ, R sin θ, z0 + A sin(Pθ + phase))`, θ ∈ [0, 2π).
    Ring {
        z0: f64,
        phase: f64,
        radius: f64,
        amplitude: f64,
        peaks: usize,
    },
    /// Axial segment at angle `theta`, parameter = z.
    Beam { theta: f64, radius: f64, z0: f64, z1: f64 },
}

/// A design component after deformation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomCurve {
    pub shape: DesignShape,
    pub deformation: Deformation,
}

impl PhantomCurve {
    fn straight(&self, t: f64) -> (Vec3, Vec3) {
        match self.shape {
            DesignShape::Ring {
                z0,
                phase,
                radius,
                amplitude,
                peaks,
            } => {
                let p = peaks as f64;
                let (s, c) = t.sin_cos();
                let arg = p * t + phase;
                (
                    Vec3::new(radius * c, radius * s, z0 + amplitude * arg.sin()),
                    Vec3::new(-radius * s, radius * c, amplitude * p * arg.cos()),
                )
            }
            DesignShape::Beam { theta, radius, .. } => {
                let (s, c) = theta.sin_cos();
                (Vec3::new(radius * c, radius * s, t), Vec3::z())
            }
        }
    }
}

impl Curve for PhantomCurve {
    fn eval(&self, t: f64) -> Vec3 {
        self.deformation.apply(&self.straight(t).0)
    }

    fn derivative(&self, t: f64) -> Vec3 {
        let (p, d) = self.straight(t);
        self.deformation.jacobian(&p) * d
    }

    fn domain(&self) -> (f64, f64) {
        match self.shape {
            DesignShape::Ring { .. } => (0.0, 2.0 * PI),
            DesignShape::Beam { z0, z1, .. } => (z0, z1),
        }
    }

    fn is_periodic(&self) -> bool {
        matches!(self.shape, DesignShape::Ring { .. })
    }
}

/// Analytic skeleton plus swept solid of a (possibly deformed) design.
#[derive(Debug, Clone)]
pub struct PhantomDesign {
    pub spec: StentDesignSpec,
    pub deformation: Deformation,
    pub rings: Vec<(u32, PhantomCurve)>,
    pub beams: Vec<(u32, PhantomCurve)>,
    /// Junctions in the current (deformed) geometry.
    pub junctions: Vec<Junction>,
    pub solid: StentMesh,
    pub join_report: JoinReport,
}

/// Build the straight design and sweep its solid.
pub fn generate_design(spec: &StentDesignSpec) -> Result<PhantomDesign, PhantomError> {
    spec.validate()?;
    let (z_min, z_max) = spec.z_range();
    let deformation = Deformation::identity(z_min, z_max);
    let rings: Vec<(u32, PhantomCurve)> = (0..spec.n_rings)
        .map(|i| {
            let shape = DesignShape::Ring {
                z0: i as f64 * spec.ring_pitch,
                phase: spec.ring_phase(i),
                radius: spec.radius,
                amplitude: spec.sinusoid_amplitude,
                peaks: spec.sinusoid_peaks,
            };
            (i as u32, PhantomCurve { shape, deformation })
        })
        .collect();
    let mut beams = Vec::new();
    let mut junctions = Vec::new();
    for pair in 0..spec.n_rings.saturating_sub(1) {
        for (m, k) in spec.beam_peaks(pair).into_iter().enumerate() {
            let id = (pair * spec.beams_per_pair + m) as u32;
            let theta = spec.peak_angle(pair, k);
            let z0 = pair as f64 * spec.ring_pitch + spec.sinusoid_amplitude;
            let z1 = (pair + 1) as f64 * spec.ring_pitch - spec.sinusoid_amplitude;
            let shape = DesignShape::Beam {
                theta,
                radius: spec.radius,
                z0,
                z1,
            };
            let beam = PhantomCurve { shape, deformation };
            for (end, ring, z) in [(BeamEnd::Start, pair, z0), (BeamEnd::End, pair + 1, z1)] {
                junctions.push(Junction {
                    beam_id: id,
                    end,
                    ring_id: ring as u32,
                    t: theta,
                    point: beam.eval(z),
                    distance: 0.0,
                    shared_point: true,
                    dangling: false,
                });
            }
            beams.push((id, beam));
        }
    }
    let cfg = SurfaceConfig {
        ring_sections: spec.ring_sections,
        beam_sections: spec.beam_sections,
        ring_dims: spec.ring_dims,
        beam_dims: spec.beam_dims,
        joint_gap: spec.joint_gap,
        join: true,
    };
    let axis = [Vec3::new(0.0, 0.0, z_min - 1.0), Vec3::new(0.0, 0.0, z_max + 1.0)];
    let ring_refs: Vec<(u32, &dyn Curve)> = rings.iter().map(|(i, c)| (*i, c as &dyn Curve)).collect();
    let beam_refs: Vec<(u32, &dyn Curve)> = beams.iter().map(|(i, c)| (*i, c as &dyn Curve)).collect();
    let (solid, join_report) = build_stent_mesh(&ring_refs, &beam_refs, &junctions, &axis, &cfg)?;
    Ok(PhantomDesign {
        spec: spec.clone(),
        deformation,
        rings,
        beams,
        junctions,
        solid,
        join_report,
    })
}

impl PhantomDesign {
    fn remap(mut self, next: Deformation, map: impl Fn(&Vec3) -> Vec3 + Sync) -> Self {
        use rayon::prelude::*;
        self.solid.vertices.par_iter_mut().for_each(|v| *v = map(v));
        for (_, c) in self.rings.iter_mut().chain(self.beams.iter_mut()) {
            c.deformation = next;
        }
        for j in self.junctions.iter_mut() {
            j.point = map(&j.point);
        }
        self.deformation = next;
        self
    }

    /// Rotate about the axis, proportionally to z. Only valid before bending.
    pub fn twist(self, degrees: f64) -> Result<Self, PhantomError> {
        if !(degrees >= 0.0 && degrees.is_finite()) {
            return Err(PhantomError::Deformation("twist angle must be >= 0".into()));
        }
        if self.deformation.bend != 0.0 {
            return Err(PhantomError::Deformation("twist needs an axis-aligned geometry".into()));
        }
        let step = Deformation {
            twist: degrees.to_radians(),
            ..Deformation::identity(self.deformation.z_min, self.deformation.z_max)
        };
        let next = Deformation {
            twist: self.deformation.twist + step.twist,
            ..self.deformation
        };
        Ok(self.remap(next, |p| step.twist_point(p)))
    }

    /// Map the straight axis onto a circular arc subtending `degrees`,
    /// preserving arclength. Only valid once.
    pub fn bend(self, degrees: f64) -> Result<Self, PhantomError> {
        if !(degrees >= 0.0 && degrees < 360.0) {
            return Err(PhantomError::Deformation("bend angle must lie in [0, 360)".into()));
        }
        if self.deformation.bend != 0.0 {
            return Err(PhantomError::Deformation("geometry is already bent".into()));
        }
        let step = Deformation {
            bend: degrees.to_radians(),
            ..Deformation::identity(self.deformation.z_min, self.deformation.z_max)
        };
        let next = Deformation {
            bend: step.bend,
            ..self.deformation
        };
        Ok(self.remap(next, |p| step.bend_point(p)))
    }

    pub fn deform(self, spec: &DeformationSpec) -> Result<Self, PhantomError> {
        spec.validate()?;
        self.twist(spec.twist_angle)?.bend(spec.bend_angle)
    }

    pub fn volume(&self) -> Result<f64, PhantomError> {
        mesh_volume(&self.solid).map_err(|e| PhantomError::Volume(e.to_string()))
    }

    pub fn centerline(&self, step: f64) -> Result<WirePath, PhantomError> {
        self.deformation.centerline(step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::curve_length;

    fn small_spec() -> StentDesignSpec {
        StentDesignSpec {
            n_rings: 3,
            ring_sections: 400,
            beam_sections: 40,
            ..Default::default()
        }
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(StentDesignSpec::default().validate().is_ok());
        let overlapping = StentDesignSpec {
            ring_pitch: 0.7,
            ..Default::default()
        };
        assert!(matches!(overlapping.validate(), Err(PhantomError::Design(_))));
        let folded = StentDesignSpec {
            sinusoid_amplitude: 0.45,
            ring_pitch: 1.5,
            sinusoid_peaks: 12,
            ..Default::default()
        };
        assert!(matches!(folded.validate(), Err(PhantomError::Design(_))));
        let no_beams = StentDesignSpec {
            beams_per_pair: 0,
            ..Default::default()
        };
        assert!(no_beams.validate().is_err());
        assert!(DeformationSpec {
            twist_angle: -1.0,
            bend_angle: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn beam_layout_alternates() {
        let s = StentDesignSpec::default();
        assert_eq!(s.beam_peaks(0), vec![0, 2, 4, 6]);
        assert_eq!(s.beam_peaks(1), vec![1, 3, 5, 7]);
        assert_eq!(s.beam_count(), 56);
        // A peak of ring i faces a valley of ring i + 1.
        for i in 0..3 {
            let th = s.peak_angle(i, 3);
            let a = (s.sinusoid_peaks as f64 * th + s.ring_phase(i)).sin();
            let b = (s.sinusoid_peaks as f64 * th + s.ring_phase(i + 1)).sin();
            assert!((a - 1.0).abs() < 1e-12 && (b + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_amplitude_rings_are_planar_circles() {
        let spec = StentDesignSpec {
            sinusoid_amplitude: 0.0,
            ..small_spec()
        };
        let d = generate_design(&spec).unwrap();
        for (i, (_, ring)) in d.rings.iter().enumerate() {
            for k in 0..64 {
                let p = ring.eval(k as f64 * 0.1);
                assert!((p.z - i as f64 * spec.ring_pitch).abs() < 1e-12);
                assert!(((p.x * p.x + p.y * p.y).sqrt() - spec.radius).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn design_counts_and_watertight_solid() {
        let spec = small_spec();
        let d = generate_design(&spec).unwrap();
        assert_eq!(d.rings.len(), spec.n_rings);
        assert_eq!(d.beams.len(), spec.beam_count());
        assert_eq!(d.junctions.len(), 2 * spec.beam_count());
        assert_eq!(d.join_report.joined, 2 * spec.beam_count());
        assert!(d.join_report.capped.is_empty());
        assert!(d.solid.is_watertight());
        assert_eq!(d.solid.components().len(), 1);
    }

    #[test]
    fn volume_matches_prism_estimate() {
        let spec = small_spec();
        let d = generate_design(&spec).unwrap();
        let ring_area = spec.ring_dims.0 * spec.ring_dims.1;
        let beam_area = spec.beam_dims.0 * spec.beam_dims.1;
        let rings: f64 = d.rings.iter().map(|(_, c)| ring_area * curve_length(c)).sum();
        // Beams run centerline to centerline; the ring-covered ends do not count.
        let beams: f64 = d
            .beams
            .iter()
            .map(|(_, c)| beam_area * (curve_length(c) - spec.ring_dims.0))
            .sum();
        let v = d.volume().unwrap();
        let est = rings + beams;
        assert!(((v - est) / est).abs() < 0.01, "mesh {v} vs estimate {est}");
    }

    #[test]
    fn twist_laws() {
        let d = generate_design(&small_spec()).unwrap();
        let before = d.solid.vertices.clone();
        let v0 = d.volume().unwrap();
        let z = d.deformation;
        let same = d.clone().twist(0.0).unwrap();
        assert_eq!(same.solid.vertices, before);
        let t = d.twist(60.0).unwrap();
        for (a, b) in before.iter().zip(&t.solid.vertices) {
            let (ra, rb) = (a.xy().norm(), b.xy().norm());
            assert!((ra - rb).abs() < 1e-12 && (a.z - b.z).abs() < 1e-15);
            let frac = (a.z - z.z_min) / z.length();
            let mut turn = b.y.atan2(b.x) - a.y.atan2(a.x) - frac * 60f64.to_radians();
            turn = (turn + PI).rem_euclid(2.0 * PI) - PI;
            assert!(turn.abs() < 1e-9);
        }
        // The end section turns by the full angle.
        let top = Vec3::new(1.0, 0.0, z.z_max);
        let tw = Deformation { twist: 1.0, ..z }.twist_point(&top);
        assert!((tw.y.atan2(tw.x) - 1.0).abs() < 1e-12);
        let v1 = t.volume().unwrap();
        assert!(((v1 - v0) / v0).abs() < 0.01);
        assert!(t.twist(10.0).is_ok());
    }

    #[test]
    fn bend_laws() {
        let d = generate_design(&small_spec()).unwrap();
        let v0 = d.volume().unwrap();
        let l = d.deformation.length();
        let zero = d.clone().bend(0.0).unwrap();
        assert_eq!(zero.solid.vertices, d.solid.vertices);
        let b = d.twist(60.0).unwrap().bend(60.0).unwrap();
        assert!(b.clone().twist(1.0).is_err());
        assert!(b.clone().bend(1.0).is_err());
        let rb = b.deformation.bend_radius().unwrap();
        assert!((rb - l / 60f64.to_radians()).abs() < 1e-12);
        let c = b.centerline(0.001).unwrap();
        let (p0, p1) = (c.samples()[0], *c.samples().last().unwrap());
        let chord = 2.0 * rb * (30f64.to_radians()).sin();
        assert!(((p1 - p0).norm() - chord).abs() < 1e-9);
        // Arclength of the axis is preserved up to the chord sag.
        assert!((c.length() - l).abs() < 1e-7 * l);
        let v1 = b.volume().unwrap();
        assert!(((v1 - v0) / v0).abs() < 0.01, "{v0} -> {v1}");
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let d = generate_design(&small_spec()).unwrap().deform(&DeformationSpec::default()).unwrap();
        let h = 1e-6;
        for (_, c) in d.rings.iter().chain(d.beams.iter()) {
            let (a, b) = c.domain();
            for k in 1..10 {
                let t = a + (b - a) * k as f64 / 10.0;
                let fd = (c.eval(t + h) - c.eval(t - h)) / (2.0 * h);
                let an = c.derivative(t);
                assert!((fd - an).norm() <= 1e-6 * an.norm().max(1.0), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn deformed_junctions_stay_on_curves() {
        let d = generate_design(&small_spec()).unwrap().deform(&DeformationSpec::default()).unwrap();
        for j in &d.junctions {
            let ring = &d.rings.iter().find(|(i, _)| *i == j.ring_id).unwrap().1;
            assert!((ring.eval(j.t) - j.point).norm() < 1e-9);
        }
    }

    #[test]
    fn slice_frames_are_orthonormal_and_follow_the_arc() {
        let z = Deformation {
            twist: 1.0,
            bend: 1.0,
            z_min: -0.5,
            z_max: 15.0,
        };
        let rb = z.bend_radius().unwrap();
        for k in 0..20 {
            let s = z.length() * k as f64 / 19.0;
            let f = z.frame_at(s);
            let r = f.rotation();
            assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
            let center = Vec3::new(rb, 0.0, z.z_min);
            assert!(((f.origin - center).norm() - rb).abs() < 1e-12);
            // Plane of frame s is the image of z = z_min + s.
            let q = z.bend_point(&Vec3::new(0.3, -0.2, z.z_min + s));
            assert!((q - f.to_world(0.3, -0.2)).norm() < 1e-12);
        }
    }
}

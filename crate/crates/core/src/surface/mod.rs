//! Rectangular cross-section sweeps along skeleton curves, ring–beam
//! joints and binary STL.

mod mesh;
mod stl;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mesh::{box_mesh, icosphere, EdgeCensus, StentMesh, Tag};
pub use stl::{decode_stl, encode_ascii_stl, encode_stl, read_stl, write_stl, StlError};

use crate::skeleton::{BeamEnd, Curve, Junction, StentSkeleton};
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum SurfaceError {
    #[error("need at least {needed} sections, got {got}")]
    TooFewSections { needed: usize, got: usize },
    #[error("lumen axis is empty")]
    EmptyLumenAxis,
    #[error("section {section} center lies on the lumen axis")]
    DegenerateRadial { section: usize },
    #[error("sections {a} and {b} twist by {degrees:.1}° (≥ 90°)")]
    Twist { a: usize, b: usize, degrees: f64 },
    #[error("{tag:?}: {source}")]
    Component { tag: Tag, source: Box<SurfaceError> },
    #[error("beam {beam} {end:?}: {msg}")]
    Join { beam: u32, end: BeamEnd, msg: String },
    #[error("beam {0} has no curve")]
    MissingBeam(u32),
}

/// Rectangle placed across a curve. Vertex order: `+e+r, −e+r, −e−r, +e−r`
/// with half extents `width/2` along `e` and `depth/2` along `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSection {
    pub center: Vec3,
    pub vertices: [Vec3; 4],
    pub width: f64,
    pub depth: f64,
    pub tangent: Vec3,
    /// Unit radial direction, orthogonal to the tangent.
    pub radial: Vec3,
    /// `tangent × radial`.
    pub edge: Vec3,
}

impl CrossSection {
    pub fn new(center: Vec3, tangent: Vec3, radial: Vec3, width: f64, depth: f64) -> Self {
        let edge = tangent.cross(&radial);
        let (e, r) = (edge * (width / 2.0), radial * (depth / 2.0));
        Self {
            center,
            vertices: [center + e + r, center - e + r, center - e - r, center + e - r],
            width,
            depth,
            tangent,
            radial,
            edge,
        }
    }
}

/// Cumulative chord length over a dense parameter sampling.
struct ArcTable {
    t: Vec<f64>,
    s: Vec<f64>,
}

impl ArcTable {
    fn new(curve: &dyn Curve, samples: usize) -> Self {
        let (t0, t1) = curve.domain();
        let t: Vec<f64> = (0..=samples)
            .map(|k| t0 + (t1 - t0) * k as f64 / samples as f64)
            .collect();
        let pts: Vec<Vec3> = t.iter().map(|&x| curve.eval(x)).collect();
        let mut s = vec![0.0];
        for w in pts.windows(2) {
            s.push(s.last().unwrap() + (w[1] - w[0]).norm());
        }
        Self { t, s }
    }

    fn length(&self) -> f64 {
        *self.s.last().unwrap()
    }

    fn param(&self, s: f64) -> f64 {
        let i = match self.s.binary_search_by(|x| x.total_cmp(&s)) {
            Ok(i) => return self.t[i],
            Err(0) => return self.t[0],
            Err(i) if i >= self.s.len() => return *self.t.last().unwrap(),
            Err(i) => i - 1,
        };
        let f = (s - self.s[i]) / (self.s[i + 1] - self.s[i]);
        self.t[i] + f * (self.t[i + 1] - self.t[i])
    }
}

/// Arclength of `curve`, by dense chord sampling.
pub fn curve_length(curve: &dyn Curve) -> f64 {
    ArcTable::new(curve, 8192).length()
}

/// Closest point of a polyline to `p`.
pub fn closest_on_polyline(poly: &[Vec3], p: &Vec3) -> Option<Vec3> {
    if poly.len() == 1 {
        return Some(poly[0]);
    }
    poly.windows(2)
        .map(|w| {
            let e = w[1] - w[0];
            let len2 = e.norm_squared();
            let t = if len2 > 0.0 { ((p - w[0]).dot(&e) / len2).clamp(0.0, 1.0) } else { 0.0 };
            w[0] + e * t
        })
        .min_by(|a, b| (a - p).norm_squared().total_cmp(&(b - p).norm_squared()))
}

/// `n` sections uniform in arclength over the whole curve.
pub fn sample_sections(
    curve: &dyn Curve,
    n: usize,
    dims: (f64, f64),
    lumen_axis: &[Vec3],
) -> Result<Vec<CrossSection>, SurfaceError> {
    sample_sections_between(curve, n, dims, lumen_axis, None)
}

/// Like [`sample_sections`], restricted to the arclength window `range`
/// (open curves). Periodic curves get `n` sections without repeating the
/// start; open curves get sections at both ends of the window.
pub fn sample_sections_between(
    curve: &dyn Curve,
    n: usize,
    dims: (f64, f64),
    lumen_axis: &[Vec3],
    range: Option<(f64, f64)>,
) -> Result<Vec<CrossSection>, SurfaceError> {
    let periodic = curve.is_periodic();
    let needed = if periodic { 3 } else { 2 };
    if n < needed {
        return Err(SurfaceError::TooFewSections { needed, got: n });
    }
    if lumen_axis.is_empty() {
        return Err(SurfaceError::EmptyLumenAxis);
    }
    let table = ArcTable::new(curve, (n * 40).max(8192));
    let len = table.length();
    let (sa, sb) = range.unwrap_or((0.0, len));
    (0..n)
        .map(|k| {
            let s = if periodic {
                len * k as f64 / n as f64
            } else {
                sa + (sb - sa) * k as f64 / (n - 1) as f64
            };
            let t = table.param(s);
            let c = curve.eval(t);
            let tan = curve.derivative(t).normalize();
            let q = closest_on_polyline(lumen_axis, &c).unwrap();
            let r = c - q;
            let r = r - tan * r.dot(&tan);
            if r.norm() < 1e-9 {
                return Err(SurfaceError::DegenerateRadial { section: k });
            }
            Ok(CrossSection::new(c, tan, r.normalize(), dims.0, dims.1))
        })
        .collect()
}

fn check_twist(sections: &[CrossSection], closed: bool) -> Result<(), SurfaceError> {
    let n = sections.len();
    let pairs = if closed { n } else { n - 1 };
    for a in 0..pairs {
        let b = (a + 1) % n;
        let (sa, sb) = (&sections[a], &sections[b]);
        let ra = sa.radial - sb.tangent * sa.radial.dot(&sb.tangent);
        let cos = ra.normalize().dot(&sb.radial).clamp(-1.0, 1.0);
        let degrees = cos.acos().to_degrees();
        if !(degrees < 90.0) {
            return Err(SurfaceError::Twist { a, b, degrees });
        }
    }
    Ok(())
}

/// Vertex layout of one swept tube inside a larger mesh: corner `j` of
/// section `i` is vertex `base + 4i + j`.
#[derive(Debug, Clone)]
struct Tube {
    tag: Tag,
    base: u32,
    sections: Vec<CrossSection>,
    closed: bool,
}

impl Tube {
    fn add(mesh: &mut StentMesh, sections: Vec<CrossSection>, closed: bool, tag: Tag) -> Result<Self, SurfaceError> {
        let needed = if closed { 3 } else { 2 };
        if sections.len() < needed {
            return Err(SurfaceError::TooFewSections {
                needed,
                got: sections.len(),
            });
        }
        check_twist(&sections, closed)?;
        let base = mesh.vertices.len() as u32;
        for s in &sections {
            mesh.vertices.extend_from_slice(&s.vertices);
        }
        Ok(Self {
            tag,
            base,
            sections,
            closed,
        })
    }

    fn n(&self) -> usize {
        self.sections.len()
    }

    fn quad_count(&self) -> usize {
        if self.closed {
            self.n()
        } else {
            self.n() - 1
        }
    }

    fn v(&self, i: usize, j: usize) -> u32 {
        self.base + (4 * (i % self.n()) + j % 4) as u32
    }

    /// Lateral quad between sections `i` and `i+1` on face `j`.
    fn quad(&self, i: usize, j: usize) -> [u32; 4] {
        [self.v(i, j), self.v(i, j + 1), self.v(i + 1, j + 1), self.v(i + 1, j)]
    }

    fn emit(&self, mesh: &mut StentMesh, removed: &HashSet<(usize, usize)>) {
        for i in 0..self.quad_count() {
            for j in 0..4 {
                if removed.contains(&(i, j)) {
                    continue;
                }
                let q = self.quad(i, j);
                mesh.add_triangle([q[0], q[1], q[2]], self.tag);
                mesh.add_triangle([q[0], q[2], q[3]], self.tag);
            }
        }
    }

    fn cap(&self, mesh: &mut StentMesh, i: usize) {
        let v = |j| self.v(i, j);
        mesh.add_triangle([v(0), v(1), v(2)], self.tag);
        mesh.add_triangle([v(0), v(2), v(3)], self.tag);
    }

    /// Outward unit normal of face `j` at section `i`.
    fn face_normal(&self, i: usize, j: usize) -> Vec3 {
        let s = &self.sections[i % self.n()];
        match j % 4 {
            0 => s.radial,
            1 => -s.edge,
            2 => -s.radial,
            _ => s.edge,
        }
    }
}

/// Closed tube through cyclic sections.
pub fn sweep_closed(sections: &[CrossSection], tag: Tag) -> Result<StentMesh, SurfaceError> {
    let mut m = StentMesh::new();
    let tube = Tube::add(&mut m, sections.to_vec(), true, tag)?;
    tube.emit(&mut m, &HashSet::new());
    m.orient_outward();
    Ok(m)
}

/// Open tube: lateral strips only, both end loops left open.
pub fn sweep_open(sections: &[CrossSection], tag: Tag) -> Result<StentMesh, SurfaceError> {
    let mut m = StentMesh::new();
    let tube = Tube::add(&mut m, sections.to_vec(), false, tag)?;
    tube.emit(&mut m, &HashSet::new());
    m.orient_outward();
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub ring_sections: usize,
    pub beam_sections: usize,
    /// Ring section `(width, depth)` in mm.
    pub ring_dims: (f64, f64),
    pub beam_dims: (f64, f64),
    /// Clearance between the trimmed beam end and the ring face (mm).
    pub joint_gap: f64,
    pub join: bool,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            ring_sections: 100,
            beam_sections: 100,
            ring_dims: (0.15, 0.15),
            beam_dims: (0.20, 0.15),
            joint_gap: 0.02,
            join: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JoinReport {
    pub joined: usize,
    /// Beam ends closed with a cap instead of a joint, with the reason.
    pub capped: Vec<(u32, BeamEnd, String)>,
}

struct Hole {
    ring: usize,
    /// First section, quad count and face.
    i0: usize,
    k: usize,
    face: usize,
}

impl Hole {
    fn quads(&self, n: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.k).map(move |m| ((self.i0 + m) % n, self.face))
    }

    /// Boundary loop: face corner `j` forward, then corner `j+1` back.
    fn boundary(&self, tube: &Tube) -> Vec<u32> {
        let mut lp: Vec<u32> = (0..=self.k).map(|m| tube.v(self.i0 + m, self.face)).collect();
        lp.extend((0..=self.k).rev().map(|m| tube.v(self.i0 + m, self.face + 1)));
        lp
    }
}

/// Pick the hole on `ring` facing a beam end centered at `c` whose
/// outward direction from the ring is `d`.
fn place_hole(tube: &Tube, ring: usize, junction: &Vec3, end: &CrossSection, d: &Vec3) -> Hole {
    let n = tube.n();
    let ic = (0..n)
        .min_by(|&a, &b| {
            (tube.sections[a].center - junction)
                .norm_squared()
                .total_cmp(&(tube.sections[b].center - junction).norm_squared())
        })
        .unwrap();
    let face = (0..4)
        .max_by(|&a, &b| tube.face_normal(ic, a).dot(d).total_cmp(&tube.face_normal(ic, b).dot(d)))
        .unwrap();
    let sec = &tube.sections[ic];
    let next = &tube.sections[(ic + 1) % n];
    let h = (next.center - sec.center).norm().max(1e-12);
    let extent = 2.0
        * end
            .vertices
            .iter()
            .map(|v| (v - end.center).dot(&sec.tangent).abs())
            .fold(0.0, f64::max);
    let k = ((extent / h).round() as usize).clamp(1, n / 2);
    let offset = (end.center - sec.center).dot(&sec.tangent) / h;
    let start = (ic as f64 + offset - k as f64 / 2.0).round() as i64;
    Hole {
        ring,
        i0: start.rem_euclid(n as i64) as usize,
        k,
        face,
    }
}

/// Stitch the 4-vertex beam loop to the hole loop with `2k + 6` triangles.
fn zipper(mesh: &mut StentMesh, beam: u32, beam_loop: [u32; 4], hole_loop: &[u32], k: usize) {
    let corners = [0, k, k + 1, 2 * k + 1];
    let pos = |v: u32| mesh.vertices[v as usize];
    let mut best = (f64::INFINITY, 0usize, 1i64);
    for rho in 0..4 {
        for sigma in [1i64, -1] {
            let cost: f64 = (0..4)
                .map(|m| {
                    let b = beam_loop[(rho as i64 + sigma * m as i64).rem_euclid(4) as usize];
                    (pos(b) - pos(hole_loop[corners[m]])).norm_squared()
                })
                .sum();
            if cost < best.0 {
                best = (cost, rho, sigma);
            }
        }
    }
    let (_, rho, sigma) = best;
    let beam_at = |m: usize| beam_loop[(rho as i64 + sigma * m as i64).rem_euclid(4) as usize];
    let len = hole_loop.len();
    for m in 0..4 {
        let (a, a2) = (beam_at(m), beam_at((m + 1) % 4));
        let from = corners[m];
        let to = if m == 3 { len } else { corners[m + 1] };
        let path: Vec<u32> = (from..=to).map(|p| hole_loop[p % len]).collect();
        let q = path.len() - 1;
        let s = q / 2;
        for p in 0..s {
            mesh.add_triangle([a, path[p], path[p + 1]], Tag::Joint(beam));
        }
        mesh.add_triangle([a, path[s], a2], Tag::Joint(beam));
        for p in s..q {
            mesh.add_triangle([a2, path[p], path[p + 1]], Tag::Joint(beam));
        }
    }
}

/// Sweep every ring and beam and join beam ends into ring holes. Beam
/// ends that cannot be joined are capped.
pub fn build_stent_mesh(
    rings: &[(u32, &dyn Curve)],
    beams: &[(u32, &dyn Curve)],
    junctions: &[Junction],
    lumen_axis: &[Vec3],
    cfg: &SurfaceConfig,
) -> Result<(StentMesh, JoinReport), SurfaceError> {
    let wrap = |tag: Tag| move |e: SurfaceError| SurfaceError::Component { tag, source: Box::new(e) };
    let ring_sections: Vec<Vec<CrossSection>> = rings
        .par_iter()
        .map(|(id, c)| sample_sections(*c, cfg.ring_sections, cfg.ring_dims, lumen_axis).map_err(wrap(Tag::Ring(*id))))
        .collect::<Result<_, _>>()?;
    let mut mesh = StentMesh::new();
    let mut tubes = Vec::new();
    for ((id, _), secs) in rings.iter().zip(ring_sections) {
        tubes.push(Tube::add(&mut mesh, secs, true, Tag::Ring(*id)).map_err(wrap(Tag::Ring(*id)))?);
    }
    let mut removed: Vec<HashSet<(usize, usize)>> = vec![HashSet::new(); tubes.len()];
    let mut report = JoinReport::default();

    // Beam sections, trimmed back from the ring at each joinable end.
    struct BeamPlan<'a> {
        id: u32,
        ends: [Option<(&'a Junction, usize)>; 2],
        sections: Vec<CrossSection>,
    }
    let plans: Vec<BeamPlan> = beams
        .par_iter()
        .map(|(id, curve)| {
            let find = |end: BeamEnd| {
                junctions
                    .iter()
                    .find(|j| j.beam_id == *id && j.end == end)
                    .filter(|j| cfg.join && !j.dangling)
                    .and_then(|j| rings.iter().position(|(r, _)| *r == j.ring_id).map(|ri| (j, ri)))
            };
            let ends = [find(BeamEnd::Start), find(BeamEnd::End)];
            let table = ArcTable::new(*curve, 8192);
            let len = table.length();
            let (t0, t1) = curve.domain();
            let trim = |end: Option<(&Junction, usize)>, t: f64| -> f64 {
                let Some((j, _)) = end else { return 0.0 };
                let d = curve.derivative(t).normalize();
                let ring_curve = rings.iter().find(|(r, _)| *r == j.ring_id).unwrap().1;
                let tr = ring_curve.derivative(j.t).normalize();
                let q = closest_on_polyline(lumen_axis, &j.point).unwrap();
                let r = j.point - q;
                let r = (r - tr * r.dot(&tr)).normalize();
                let e = tr.cross(&r);
                d.dot(&e).abs() * cfg.ring_dims.0 / 2.0 + d.dot(&r).abs() * cfg.ring_dims.1 / 2.0 + cfg.joint_gap
            };
            let (ta, tb) = (trim(ends[0], t0), trim(ends[1], t1));
            if ta + tb >= len {
                return Err(SurfaceError::Join {
                    beam: *id,
                    end: BeamEnd::Start,
                    msg: format!("beam length {len:.4} mm shorter than joint trims"),
                });
            }
            let sections = sample_sections_between(*curve, cfg.beam_sections, cfg.beam_dims, lumen_axis, Some((ta, len - tb)))
                .map_err(wrap(Tag::Beam(*id)))?;
            Ok(BeamPlan {
                id: *id,
                ends,
                sections,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut zips = Vec::new();
    let mut beam_tubes = Vec::new();
    for plan in plans {
        let tube = Tube::add(&mut mesh, plan.sections, false, Tag::Beam(plan.id)).map_err(wrap(Tag::Beam(plan.id)))?;
        for (slot, end) in [BeamEnd::Start, BeamEnd::End].into_iter().enumerate() {
            let si = if slot == 0 { 0 } else { tube.n() - 1 };
            let Some((j, ri)) = plan.ends[slot] else {
                tube.cap(&mut mesh, si);
                let why = if cfg.join { "dangling or unattached" } else { "joining disabled" };
                report.capped.push((plan.id, end, why.into()));
                continue;
            };
            let sec = tube.sections[si];
            let d = (sec.center - j.point).normalize();
            let hole = place_hole(&tubes[ri], ri, &j.point, &sec, &d);
            let n = tubes[ri].n();
            if hole.quads(n).any(|q| removed[ri].contains(&q)) {
                tube.cap(&mut mesh, si);
                report.capped.push((plan.id, end, "hole overlaps another joint".into()));
                continue;
            }
            removed[ri].extend(hole.quads(n));
            let beam_loop = [tube.v(si, 0), tube.v(si, 1), tube.v(si, 2), tube.v(si, 3)];
            zips.push((plan.id, beam_loop, hole));
            report.joined += 1;
        }
        beam_tubes.push(tube);
    }
    for (t, rm) in tubes.iter().zip(&removed) {
        t.emit(&mut mesh, rm);
    }
    for t in &beam_tubes {
        t.emit(&mut mesh, &HashSet::new());
    }
    for (id, beam_loop, hole) in zips {
        let lp = hole.boundary(&tubes[hole.ring]);
        zipper(&mut mesh, id, beam_loop, &lp, hole.k);
    }
    mesh.orient_outward();
    Ok((mesh, report))
}

/// Mesh of a fitted skeleton.
pub fn build_surface(skel: &StentSkeleton, cfg: &SurfaceConfig) -> Result<(StentMesh, JoinReport), SurfaceError> {
    let rings: Vec<(u32, &dyn Curve)> = skel.rings.iter().map(|r| (r.id, &r.curve as &dyn Curve)).collect();
    let beams: Vec<(u32, &dyn Curve)> = skel.beams.iter().map(|b| (b.id, &b.curve as &dyn Curve)).collect();
    build_stent_mesh(&rings, &beams, &skel.junctions, &skel.lumen_axis, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    struct Circle {
        r: f64,
        z: f64,
    }

    impl Curve for Circle {
        fn eval(&self, t: f64) -> Vec3 {
            Vec3::new(self.r * t.cos(), self.r * t.sin(), self.z)
        }
        fn derivative(&self, t: f64) -> Vec3 {
            Vec3::new(-self.r * t.sin(), self.r * t.cos(), 0.0)
        }
        fn domain(&self) -> (f64, f64) {
            (0.0, 2.0 * PI)
        }
        fn is_periodic(&self) -> bool {
            true
        }
    }

    struct Segment {
        a: Vec3,
        b: Vec3,
    }

    impl Curve for Segment {
        fn eval(&self, t: f64) -> Vec3 {
            self.a + (self.b - self.a) * t
        }
        fn derivative(&self, _: f64) -> Vec3 {
            self.b - self.a
        }
        fn domain(&self) -> (f64, f64) {
            (0.0, 1.0)
        }
        fn is_periodic(&self) -> bool {
            false
        }
    }

    fn z_axis() -> Vec<Vec3> {
        vec![Vec3::new(0.0, 0.0, -5.0), Vec3::new(0.0, 0.0, 5.0)]
    }

    fn torus(n: usize, r: f64, s: f64) -> StentMesh {
        let secs = sample_sections(&Circle { r, z: 0.0 }, n, (s, s), &z_axis()).unwrap();
        sweep_closed(&secs, Tag::Ring(0)).unwrap()
    }

    #[test]
    fn pappus_torus() {
        let (r, s) = (2.0, 0.15);
        let exact = 2.0 * PI * r * s * s;
        let m = torus(100, r, s);
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 0);
        assert_eq!(m.len(), 800);
        let v = m.signed_volume();
        assert!(v > 0.0 && (v - exact).abs() / exact < 0.01, "{v} vs {exact}");
        let e50 = (torus(50, r, s).signed_volume() - exact).abs();
        let e100 = (v - exact).abs();
        let ratio = e50 / e100;
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn section_rectangles_exact() {
        let secs = sample_sections(&Circle { r: 1.5, z: 0.3 }, 37, (0.2, 0.15), &z_axis()).unwrap();
        for s in &secs {
            let v = s.vertices;
            let d = |a: usize, b: usize| (v[a] - v[b]).norm();
            assert!((d(0, 1) - 0.2).abs() < 1e-9 && (d(2, 3) - 0.2).abs() < 1e-9);
            assert!((d(1, 2) - 0.15).abs() < 1e-9 && (d(3, 0) - 0.15).abs() < 1e-9);
            let normal = (v[1] - v[0]).cross(&(v[3] - v[0])).normalize();
            assert!((v[2] - v[0]).dot(&normal).abs() < 1e-9);
            assert!((v[1] - v[0]).dot(&s.radial).abs() < 1e-6);
            assert!(normal.cross(&s.tangent).norm() < 1e-9);
        }
        let two = sample_sections(&Segment { a: Vec3::new(1.0, 0.0, 0.0), b: Vec3::new(1.0, 0.0, 1.0) }, 2, (0.2, 0.15), &z_axis()).unwrap();
        assert_eq!(two[0].center, Vec3::new(1.0, 0.0, 0.0));
        assert!((two[1].center - Vec3::new(1.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn straight_sweep_congruent_radial() {
        let seg = Segment {
            a: Vec3::new(0.0, 1.0, 0.0),
            b: Vec3::new(0.0, 1.0, 2.0),
        };
        let secs = sample_sections(&seg, 5, (0.2, 0.1), &z_axis()).unwrap();
        for s in &secs {
            assert!((s.radial - Vec3::y()).norm() < 1e-12);
            for (a, b) in s.vertices.iter().zip(&secs[0].vertices) {
                assert!(((a - s.center) - (b - secs[0].center)).norm() < 1e-12);
            }
        }
        let m = sweep_open(&secs[..2], Tag::Beam(0)).unwrap();
        assert_eq!(m.len(), 8);
        let loops = m.boundary_loops();
        assert_eq!(loops.len(), 2);
        assert!(loops.iter().all(|l| l.len() == 4));
        let full = sweep_open(&secs, Tag::Beam(0)).unwrap();
        assert!((full.area() - 2.0 * (0.2 + 0.1) * 2.0).abs() < 1e-9);
    }

    #[test]
    fn reversed_sections_same_volume() {
        let mut secs = sample_sections(&Circle { r: 1.0, z: 0.0 }, 60, (0.15, 0.15), &z_axis()).unwrap();
        let v = sweep_closed(&secs, Tag::Ring(0)).unwrap().signed_volume();
        secs.reverse();
        let m = sweep_closed(&secs, Tag::Ring(0)).unwrap();
        assert!((m.signed_volume() - v).abs() < 1e-12);
    }

    #[test]
    fn degenerate_radial_and_twist() {
        let on_axis = Segment {
            a: Vec3::new(0.0, 0.0, 0.0),
            b: Vec3::new(0.0, 0.0, 1.0),
        };
        assert_eq!(
            sample_sections(&on_axis, 3, (0.1, 0.1), &z_axis()),
            Err(SurfaceError::DegenerateRadial { section: 0 })
        );
        let a = CrossSection::new(Vec3::zeros(), Vec3::z(), Vec3::x(), 0.1, 0.1);
        let b = CrossSection::new(Vec3::z(), Vec3::z(), -Vec3::x(), 0.1, 0.1);
        assert!(matches!(sweep_open(&[a, b], Tag::Beam(1)), Err(SurfaceError::Twist { a: 0, b: 1, .. })));
    }

    fn junction(beam_id: u32, end: BeamEnd, ring_id: u32, t: f64, point: Vec3) -> Junction {
        Junction {
            beam_id,
            end,
            ring_id,
            t,
            point,
            distance: 0.0,
            shared_point: true,
            dangling: false,
        }
    }

    #[test]
    fn t_junction_watertight() {
        let ring = Circle { r: 5.0, z: 0.0 };
        let beam = Segment {
            a: Vec3::new(5.0, 0.0, 0.0),
            b: Vec3::new(5.0, 0.0, 1.0),
        };
        let js = [junction(7, BeamEnd::Start, 0, 0.0, beam.a)];
        let cfg = SurfaceConfig {
            ring_sections: 400,
            beam_sections: 10,
            ..Default::default()
        };
        let (m, rep) = build_stent_mesh(&[(0, &ring)], &[(7, &beam)], &js, &z_axis(), &cfg).unwrap();
        assert_eq!(rep.joined, 1);
        assert_eq!(rep.capped.len(), 1);
        assert!(m.is_watertight());
        assert_eq!(m.components().len(), 1);
        assert_eq!(m.euler_characteristic(), 0);
        let ring_only = sweep_closed(&sample_sections(&ring, 400, (0.15, 0.15), &z_axis()).unwrap(), Tag::Ring(0))
            .unwrap()
            .signed_volume();
        let beam_vol = 0.2 * 0.15 * (1.0 - 0.075 - 0.02);
        let v = m.signed_volume();
        assert!((v - ring_only - beam_vol).abs() < 0.2 * 0.15 * 0.02 + 1e-4, "{v}");
        let joint = m.tags.iter().filter(|t| matches!(t, Tag::Joint(_))).count();
        let ring_spacing = 2.0 * PI * 5.0 / 400.0;
        let k = (0.2f64 / ring_spacing).round() as usize;
        assert_eq!(joint, 2 * k + 6);
    }

    #[test]
    fn two_rings_bridged() {
        let r0 = Circle { r: 1.5, z: 0.0 };
        let r1 = Circle { r: 1.5, z: 1.0 };
        let mut beams = Vec::new();
        let mut js = Vec::new();
        for b in 0..4u32 {
            let a = b as f64 * PI / 2.0;
            let p = Vec3::new(1.5 * a.cos(), 1.5 * a.sin(), 0.0);
            beams.push(Segment { a: p, b: p + Vec3::z() });
            js.push(junction(b, BeamEnd::Start, 0, a, p));
            js.push(junction(b, BeamEnd::End, 1, a, p + Vec3::z()));
        }
        let beam_refs: Vec<(u32, &dyn Curve)> = beams.iter().enumerate().map(|(i, b)| (i as u32, b as &dyn Curve)).collect();
        let (m, rep) = build_stent_mesh(&[(0, &r0), (1, &r1)], &beam_refs, &js, &z_axis(), &SurfaceConfig::default()).unwrap();
        assert_eq!(rep.joined, 8);
        assert!(rep.capped.is_empty());
        assert!(m.is_watertight());
        assert_eq!(m.components().len(), 1);
        assert!(m.signed_volume() > 0.0);
    }
}

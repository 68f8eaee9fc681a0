use std::collections::BTreeSet;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PhantomError;
use crate::detection::{mm_to_pixel, pixel_to_mm};
use crate::raster::{connected_regions, BinaryImage};
use crate::registration::{FramedPath, MovingFrame, WirePath};
use crate::surface::{StentMesh, Tag};
use crate::validation::mesh_volume;
use crate::Vec3;

/// Acquisition geometry of the synthetic stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceConfig {
    /// Distance between consecutive frames along the centerline, mm.
    pub spacing: f64,
    /// mm per pixel.
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// Resampling step of the centerline before framing, mm.
    pub frame_step: f64,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self {
            spacing: 0.1,
            resolution: 0.01,
            width: 480,
            height: 480,
            frame_step: 0.005,
        }
    }
}

impl SliceConfig {
    fn validate(&self) -> Result<(), PhantomError> {
        if !(self.spacing > 0.0) || !(self.resolution > 0.0) || !(self.frame_step > 0.0) {
            return Err(PhantomError::Slice("spacing, resolution and frame step must be > 0".into()));
        }
        if self.width < 8 || self.height < 8 {
            return Err(PhantomError::Slice("frames must be at least 8x8 pixels".into()));
        }
        Ok(())
    }
}

/// Plane section of a solid: boundary segments in in-plane mm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Section {
    pub segments: Vec<((f64, f64), (f64, f64), Tag)>,
}

/// Intersect `mesh` with the image plane of `frame`. Vertices on the plane
/// count as in front of it, so every crossing edge is cut exactly once.
pub fn section_segments(mesh: &StentMesh, frame: &MovingFrame) -> Section {
    let d: Vec<f64> = mesh.vertices.iter().map(|v| (v - frame.origin).dot(&frame.tangent)).collect();
    let project = |p: Vec3| {
        let q = p - frame.origin;
        (q.dot(&frame.normal), q.dot(&frame.binormal))
    };
    let mut segments = Vec::new();
    for (t, tag) in mesh.triangles.iter().zip(&mesh.tags) {
        let side = t.map(|v| d[v as usize] >= 0.0);
        if side[0] == side[1] && side[1] == side[2] {
            continue;
        }
        let mut pts = Vec::with_capacity(2);
        for k in 0..3 {
            let (a, b) = (t[k] as usize, t[(k + 1) % 3] as usize);
            if side[k] != side[(k + 1) % 3] {
                let s = d[a] / (d[a] - d[b]);
                pts.push(project(mesh.vertices[a] + (mesh.vertices[b] - mesh.vertices[a]) * s));
            }
        }
        // Orient along tangent × normal so closed sections wind consistently.
        let [p0, p1, p2] = t.map(|v| mesh.vertices[v as usize]);
        let n = (p1 - p0).cross(&(p2 - p0));
        let dir = frame.tangent.cross(&n);
        let (a, b) = (pts[0], pts[1]);
        let along = (b.0 - a.0) * dir.dot(&frame.normal) + (b.1 - a.1) * dir.dot(&frame.binormal);
        if along < 0.0 {
            segments.push((b, a, *tag));
        } else {
            segments.push((a, b, *tag));
        }
    }
    Section { segments }
}

/// Even-odd scanline fill with pixel-center inclusion. Returns the mask and,
/// per filled span, its row, first column and the tags of its two edges.
pub fn rasterize_section(
    section: &Section,
    width: usize,
    height: usize,
    resolution: f64,
) -> (BinaryImage, Vec<(usize, usize, Tag, Tag)>) {
    let mut rows: Vec<Vec<(f64, Tag)>> = vec![Vec::new(); height];
    for &(a, b, tag) in &section.segments {
        let (ra, ca) = mm_to_pixel(a, width, height, resolution);
        let (rb, cb) = mm_to_pixel(b, width, height, resolution);
        if ra == rb {
            continue;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        let first = lo.ceil().max(0.0) as i64;
        let last = (hi.ceil() as i64 - 1).min(height as i64 - 1);
        for r in first..=last {
            let y = r as f64;
            if y < lo || y >= hi {
                continue;
            }
            let c = ca + (cb - ca) * (y - ra) / (rb - ra);
            rows[r as usize].push((c, tag));
        }
    }
    let mut mask = BinaryImage::empty(width, height);
    let mut spans = Vec::new();
    for (r, xs) in rows.iter_mut().enumerate() {
        xs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in xs.chunks_exact(2) {
            let c0 = pair[0].0.ceil().max(0.0) as i64;
            let c1 = (pair[1].0.ceil() as i64).min(width as i64);
            if c1 <= c0 {
                continue;
            }
            for c in c0..c1 {
                mask.set(r, c as usize, true);
            }
            spans.push((r, c0 as usize, pair[0].1, pair[1].1));
        }
    }
    (mask, spans)
}

/// Hard angular shadow: pixels seen from `apex` within `half_width` of
/// `direction` (radians, `atan2(Δrow, Δcol)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowSector {
    /// `(row, col)`.
    pub apex: (f64, f64),
    pub direction: f64,
    pub half_width: f64,
}

impl ShadowSector {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        if self.half_width >= PI {
            return true;
        }
        let (dr, dc) = (row as f64 - self.apex.0, col as f64 - self.apex.1);
        if dr == 0.0 && dc == 0.0 {
            return false;
        }
        let (s, c) = self.direction.sin_cos();
        let angle = (c * dr - s * dc).atan2(c * dc + s * dr);
        angle.abs() < self.half_width
    }
}

/// Catheter shadow: a sector cast from a catheter sitting `apex_offset_mm`
/// off the lumen center, pointing back through the center and rotating by
/// `drift_deg_per_mm` of pullback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowSpec {
    pub width_deg: f64,
    pub drift_deg_per_mm: f64,
    pub start_deg: f64,
    pub apex_offset_mm: f64,
}

impl Default for ShadowSpec {
    fn default() -> Self {
        Self {
            width_deg: 30.0,
            drift_deg_per_mm: 3.6,
            start_deg: 30.0,
            apex_offset_mm: 0.0,
        }
    }
}

/// Ground truth for one strut section of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthStrut {
    pub frame_index: usize,
    /// Index within the frame, in raster order of the first pixel.
    pub id: u32,
    pub ring: Option<u32>,
    pub beam: Option<u32>,
    pub area: usize,
    /// `(row, col)` of the whole section.
    pub centroid: (f64, f64),
    /// World position of `centroid`.
    pub position: Vec3,
    pub visible_area: usize,
    pub visible_centroid: Option<(f64, f64)>,
    pub occluded: bool,
    #[serde(skip)]
    pub pixels: Vec<(usize, usize)>,
}

impl TruthStrut {
    pub fn is_junction(&self) -> bool {
        self.ring.is_some() && self.beam.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomFrame {
    pub index: usize,
    /// Arclength along the centerline, mm.
    pub z_offset: f64,
    pub frame: MovingFrame,
    /// `(row, col)`.
    pub wire_tip: (f64, f64),
    /// Strut pixels not hidden by the shadow.
    pub mask: BinaryImage,
    pub shadow: Option<ShadowSector>,
}

/// A sliced phantom with ground truth.
#[derive(Debug, Clone)]
pub struct PhantomStack {
    pub frames: Vec<PhantomFrame>,
    pub spacing: f64,
    pub resolution: f64,
    pub centerline: WirePath,
    pub truth: Vec<TruthStrut>,
    pub solid: StentMesh,
    pub exact_volume: f64,
    /// Odd scanline crossings dropped while rasterizing; zero for closed solids.
    pub open_rows: usize,
}

impl PhantomStack {
    pub fn truth_in(&self, frame: usize) -> impl Iterator<Item = &TruthStrut> {
        self.truth.iter().filter(move |t| t.frame_index == frame)
    }
}

fn label_regions(
    index: usize,
    frame: &MovingFrame,
    mask: &BinaryImage,
    spans: &[(usize, usize, Tag, Tag)],
    resolution: f64,
) -> Vec<TruthStrut> {
    let (w, h) = (mask.width(), mask.height());
    let regions = connected_regions(mask, 1);
    let mut label = vec![usize::MAX; w * h];
    for (k, r) in regions.iter().enumerate() {
        for &(row, col) in &r.pixels {
            label[row * w + col] = k;
        }
    }
    let mut rings: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); regions.len()];
    let mut beams: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); regions.len()];
    for &(row, col, a, b) in spans {
        let k = label[row * w + col];
        for tag in [a, b] {
            match tag {
                Tag::Ring(i) => {
                    rings[k].insert(i);
                }
                Tag::Beam(i) | Tag::Joint(i) => {
                    beams[k].insert(i);
                }
                _ => {}
            }
        }
    }
    regions
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            let (x, y) = pixel_to_mm(r.centroid, w, h, resolution);
            TruthStrut {
                frame_index: index,
                id: k as u32,
                ring: rings[k].first().copied(),
                beam: beams[k].first().copied(),
                area: r.area,
                centroid: r.centroid,
                position: frame.to_world(x, y),
                visible_area: r.area,
                visible_centroid: Some(r.centroid),
                occluded: false,
                pixels: r.pixels,
            }
        })
        .collect()
}

/// Slice `solid` perpendicular to `centerline` every `spacing` mm starting
/// at its first sample. Frames without struts are kept.
pub fn slice_stack(solid: &StentMesh, centerline: &WirePath, cfg: &SliceConfig) -> Result<PhantomStack, PhantomError> {
    cfg.validate()?;
    let exact_volume = mesh_volume(solid).map_err(|e| PhantomError::Volume(e.to_string()))?;
    let step = cfg.frame_step.min(centerline.length());
    let framed = FramedPath::new(centerline, step).map_err(|e| PhantomError::Centerline(e.to_string()))?;
    let count = (framed.length() / cfg.spacing + 1e-9).floor() as usize + 1;
    let center = ((cfg.height as f64 - 1.0) / 2.0, (cfg.width as f64 - 1.0) / 2.0);
    let sliced: Vec<(PhantomFrame, Vec<TruthStrut>, usize)> = (0..count)
        .into_par_iter()
        .map(|k| {
            let s = k as f64 * cfg.spacing;
            let frame = framed
                .frame_at(s.min(framed.length()))
                .map_err(|e| PhantomError::Centerline(e.to_string()))?;
            let section = section_segments(solid, &frame);
            let (mask, spans) = rasterize_section(&section, cfg.width, cfg.height, cfg.resolution);
            let open = odd_rows(&section, cfg);
            let truth = label_regions(k, &frame, &mask, &spans, cfg.resolution);
            Ok((
                PhantomFrame {
                    index: k,
                    z_offset: s,
                    frame,
                    wire_tip: center,
                    mask,
                    shadow: None,
                },
                truth,
                open,
            ))
        })
        .collect::<Result<_, PhantomError>>()?;
    let mut frames = Vec::with_capacity(count);
    let mut truth = Vec::new();
    let mut open_rows = 0;
    for (f, t, o) in sliced {
        frames.push(f);
        truth.extend(t);
        open_rows += o;
    }
    Ok(PhantomStack {
        frames,
        spacing: cfg.spacing,
        resolution: cfg.resolution,
        centerline: centerline.clone(),
        truth,
        solid: solid.clone(),
        exact_volume,
        open_rows,
    })
}

fn odd_rows(section: &Section, cfg: &SliceConfig) -> usize {
    let mut counts = vec![0usize; cfg.height];
    for &(a, b, _) in &section.segments {
        let (ra, _) = mm_to_pixel(a, cfg.width, cfg.height, cfg.resolution);
        let (rb, _) = mm_to_pixel(b, cfg.width, cfg.height, cfg.resolution);
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        let first = lo.ceil().max(0.0) as i64;
        let last = (hi.ceil() as i64 - 1).min(cfg.height as i64 - 1);
        for r in first..=last {
            if (r as f64) >= lo && (r as f64) < hi {
                counts[r as usize] += 1;
            }
        }
    }
    counts.iter().filter(|c| *c % 2 == 1).count()
}

/// Force the shadow sector of every frame to background and flag truths
/// left without visible pixels. The catheter tip becomes the sector apex.
pub fn add_shadow(mut stack: PhantomStack, spec: &ShadowSpec) -> Result<PhantomStack, PhantomError> {
    if !(spec.width_deg >= 0.0) || !spec.drift_deg_per_mm.is_finite() || !(spec.apex_offset_mm >= 0.0) {
        return Err(PhantomError::Slice("shadow width and apex offset must be >= 0".into()));
    }
    if stack.frames.iter().any(|f| f.shadow.is_some()) {
        return Err(PhantomError::Slice("stack already carries a shadow".into()));
    }
    let res = stack.resolution;
    for f in stack.frames.iter_mut() {
        let (w, h) = (f.mask.width(), f.mask.height());
        let beta = (spec.start_deg + spec.drift_deg_per_mm * f.z_offset).to_radians();
        let apex = mm_to_pixel(
            (-spec.apex_offset_mm * beta.cos(), -spec.apex_offset_mm * beta.sin()),
            w,
            h,
            res,
        );
        if !(apex.0 >= 0.0 && apex.1 >= 0.0 && apex.0 <= h as f64 - 1.0 && apex.1 <= w as f64 - 1.0) {
            return Err(PhantomError::Slice(format!("shadow apex {apex:?} leaves the image")));
        }
        let sector = ShadowSector {
            apex,
            direction: beta,
            half_width: (spec.width_deg / 2.0).to_radians(),
        };
        f.mask = BinaryImage::from_fn(w, h, |r, c| f.mask.get(r, c) && !sector.contains(r, c));
        f.wire_tip = apex;
        f.shadow = Some(sector);
    }
    for t in stack.truth.iter_mut() {
        let sector = stack.frames[t.frame_index].shadow.expect("every frame shadowed");
        let visible: Vec<&(usize, usize)> = t.pixels.iter().filter(|&&(r, c)| !sector.contains(r, c)).collect();
        t.visible_area = visible.len();
        t.occluded = visible.is_empty();
        t.visible_centroid = (!visible.is_empty()).then(|| {
            let n = visible.len() as f64;
            let (sr, sc) = visible.iter().fold((0.0, 0.0), |(a, b), &&(r, c)| (a + r as f64, b + c as f64));
            (sr / n, sc / n)
        });
    }
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{generate_design, DeformationSpec, StentDesignSpec};
    use crate::surface::box_mesh;

    fn three_ring_stack(cfg: &SliceConfig) -> PhantomStack {
        let spec = StentDesignSpec {
            n_rings: 3,
            ring_sections: 600,
            beam_sections: 40,
            ..Default::default()
        };
        let d = generate_design(&spec).unwrap().deform(&DeformationSpec::default()).unwrap();
        let c = d.centerline(0.005).unwrap();
        slice_stack(&d.solid, &c, cfg).unwrap()
    }

    #[test]
    fn prism_slices_are_identical_and_area_is_exact() {
        // Axis-aligned box along z; frames every 0.25 mm.
        let solid = box_mesh(Vec3::new(-0.41, -0.23, 0.0), Vec3::new(0.37, 0.29, 3.0));
        let line = WirePath::new(vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 3.0)]).unwrap();
        let cfg = SliceConfig {
            spacing: 0.25,
            resolution: 0.007,
            width: 160,
            height: 160,
            frame_step: 0.01,
        };
        let stack = slice_stack(&solid, &line, &cfg).unwrap();
        assert_eq!(stack.frames.len(), (3.0f64 / 0.25).floor() as usize + 1);
        assert_eq!(stack.open_rows, 0);
        let inner = &stack.frames[1..stack.frames.len() - 1];
        for f in inner {
            assert_eq!(f.mask, inner[0].mask);
        }
        let area = inner[0].mask.count() as f64 * 0.007 * 0.007;
        let exact = 0.78 * 0.52;
        assert!(((area - exact) / exact).abs() < 0.02, "{area} vs {exact}");
    }

    #[test]
    fn disk_area_within_two_percent() {
        let solid = crate::surface::icosphere(1.0, 5);
        let line = WirePath::new(vec![Vec3::new(0.0, 0.0, -0.5), Vec3::new(0.0, 0.0, 0.5)]).unwrap();
        let cfg = SliceConfig {
            spacing: 0.5,
            resolution: 0.007,
            width: 320,
            height: 320,
            frame_step: 0.01,
        };
        let stack = slice_stack(&solid, &line, &cfg).unwrap();
        // The middle frame cuts the polyhedron through its equator.
        let mid = &stack.frames[1];
        let poly: f64 = section_area(&section_segments(&solid, &mid.frame));
        let raster = mid.mask.count() as f64 * 0.007 * 0.007;
        assert!(((raster - poly) / poly).abs() < 0.02, "{raster} vs {poly}");
        assert_eq!(stack.truth.iter().filter(|t| t.frame_index == 1).count(), 1);
    }

    fn section_area(s: &Section) -> f64 {
        s.segments.iter().map(|&(a, b, _)| a.0 * b.1 - b.0 * a.1).sum::<f64>().abs() / 2.0
    }

    #[test]
    fn frame_count_follows_spacing() {
        let cfg = SliceConfig {
            spacing: 0.2,
            ..Default::default()
        };
        let stack = three_ring_stack(&cfg);
        let len = stack.centerline.length();
        assert_eq!(stack.frames.len(), (len / 0.2).floor() as usize + 1);
        assert_eq!(stack.open_rows, 0);
        assert!(stack.frames.windows(2).all(|w| (w[1].z_offset - w[0].z_offset - 0.2).abs() < 1e-12));
    }

    #[test]
    fn truth_is_labeled_and_consistent() {
        let stack = three_ring_stack(&SliceConfig::default());
        assert!(!stack.truth.is_empty());
        let mut rings = BTreeSet::new();
        let mut beams = BTreeSet::new();
        for t in &stack.truth {
            assert!(t.ring.is_some() || t.beam.is_some(), "unlabeled truth {t:?}");
            rings.extend(t.ring);
            beams.extend(t.beam);
            assert_eq!(t.area, t.pixels.len());
            let f = &stack.frames[t.frame_index];
            assert!(t.pixels.iter().all(|&(r, c)| f.mask.get(r, c)));
        }
        assert_eq!(rings.into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(beams.len(), 8);
        // Strut sections sit at the stent radius in the image plane.
        for t in &stack.truth {
            let (x, y) = pixel_to_mm(t.centroid, 480, 480, 0.01);
            let r = (x * x + y * y).sqrt();
            assert!((1.2..1.6).contains(&r), "radius {r}");
        }
    }

    #[test]
    fn shadow_extremes() {
        let stack = three_ring_stack(&SliceConfig {
            spacing: 0.2,
            ..Default::default()
        });
        let none = add_shadow(
            stack.clone(),
            &ShadowSpec {
                width_deg: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in stack.frames.iter().zip(&none.frames) {
            assert_eq!(a.mask, b.mask);
        }
        assert!(none.truth.iter().all(|t| !t.occluded && t.visible_area == t.area));
        let all = add_shadow(
            stack.clone(),
            &ShadowSpec {
                width_deg: 360.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(all.frames.iter().all(|f| f.mask.count() == 0));
        assert!(all.truth.iter().all(|t| t.occluded));
        assert!(add_shadow(all, &ShadowSpec::default()).is_err());
    }

    #[test]
    fn shadow_flags_match_sector_geometry() {
        let stack = three_ring_stack(&SliceConfig {
            spacing: 0.2,
            ..Default::default()
        });
        let s = add_shadow(stack, &ShadowSpec::default()).unwrap();
        let mut hidden = 0;
        for t in &s.truth {
            let f = &s.frames[t.frame_index];
            let sector = f.shadow.unwrap();
            let inside = t.pixels.iter().filter(|&&(r, c)| sector.contains(r, c)).count();
            assert_eq!(t.visible_area, t.area - inside);
            assert_eq!(t.occluded, inside == t.area);
            hidden += t.occluded as usize;
            assert_eq!(f.wire_tip, sector.apex);
        }
        assert!(hidden > 0);
    }

    #[test]
    fn sector_membership() {
        let s = ShadowSector {
            apex: (10.0, 10.0),
            direction: 0.0,
            half_width: 15f64.to_radians(),
        };
        assert!(s.contains(10, 20));
        assert!(s.contains(12, 20));
        assert!(!s.contains(20, 20));
        assert!(!s.contains(10, 0));
        assert!(!s.contains(10, 10));
        let down = ShadowSector { direction: PI / 2.0, ..s };
        assert!(down.contains(20, 10));
        assert!(!down.contains(10, 20));
    }
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    add_shadow, generate_design, slice_stack, DeformationSpec, PhantomDesign, PhantomError, PhantomFrame,
    PhantomStack, ShadowSector, ShadowSpec, SliceConfig, StentDesignSpec, TruthStrut,
};
use crate::detection::{pixel_to_mm, FrameEntry, StackManifest};
use crate::fsutil::write_atomic;
use crate::raster::{dilate_mask, encode_png, BinaryImage, GrayImage};
use crate::surface::encode_stl;
use crate::topology::{flatten_positions, AnnotationLine, AnnotationSet, LineKind};
use crate::Vec3;

/// Annotation line ids of beams are offset so they never collide with rings.
pub const BEAM_LINE_OFFSET: u32 = 1000;

/// Vessel wall drawn behind the struts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WallSpec {
    /// Clearance between the outer strut face and the wall, mm.
    pub gap: f64,
    pub thickness: f64,
    /// Width of the bright rim drawn around every strut, pixels.
    pub outline_px: usize,
}

impl Default for WallSpec {
    fn default() -> Self {
        Self {
            gap: 0.02,
            thickness: 0.15,
            outline_px: 2,
        }
    }
}

/// Everything needed to regenerate a phantom stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub design: StentDesignSpec,
    pub deformation: DeformationSpec,
    pub slice: SliceConfig,
    pub shadow: Option<ShadowSpec>,
    pub wall: WallSpec,
    /// Sample step of the exported centerline, mm.
    pub centerline_step: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            design: StentDesignSpec::default(),
            deformation: DeformationSpec::default(),
            slice: SliceConfig::default(),
            shadow: Some(ShadowSpec::default()),
            wall: WallSpec::default(),
            centerline_step: 0.005,
        }
    }
}

impl PhantomConfig {
    pub fn wall_inner_radius(&self) -> f64 {
        let d = &self.design;
        d.radius + d.ring_dims.1.max(d.beam_dims.1) / 2.0 + self.wall.gap
    }
}

/// Design, deform, slice and shadow.
pub fn generate_phantom(cfg: &PhantomConfig) -> Result<(PhantomDesign, PhantomStack), PhantomError> {
    let design = generate_design(&cfg.design)?.deform(&cfg.deformation)?;
    let centerline = design.centerline(cfg.centerline_step)?;
    let mut stack = slice_stack(&design.solid, &centerline, &cfg.slice)?;
    if let Some(s) = &cfg.shadow {
        stack = add_shadow(stack, s)?;
    }
    Ok((design, stack))
}

/// Binary OCT-like frame: a bright wall annulus and a bright rim around each
/// strut, struts themselves dark. The shadow sector blanks the wall.
pub fn render_frame(frame: &PhantomFrame, resolution: f64, inner_radius: f64, wall: &WallSpec) -> GrayImage {
    let (w, h) = (frame.mask.width(), frame.mask.height());
    let rim = dilate_mask(&frame.mask, wall.outline_px);
    let outer = inner_radius + wall.thickness;
    let shadow = |r: usize, c: usize| frame.shadow.is_some_and(|s: ShadowSector| s.contains(r, c));
    let bright = BinaryImage::from_fn(w, h, |r, c| {
        if frame.mask.get(r, c) {
            return false;
        }
        if rim.get(r, c) {
            return true;
        }
        let (x, y) = pixel_to_mm((r as f64, c as f64), w, h, resolution);
        let d = (x * x + y * y).sqrt();
        d >= inner_radius && d <= outer && !shadow(r, c)
    });
    bright.to_gray()
}

/// In-plane millimetres of the visible part of a truth entry.
fn visible_mm(t: &TruthStrut, w: usize, h: usize, resolution: f64) -> Option<(f64, f64)> {
    t.visible_centroid.map(|c| pixel_to_mm(c, w, h, resolution))
}

/// Ground-truth ring and beam polylines through the visible truth points,
/// unrolled exactly as the pipeline unrolls a detected cloud.
pub fn truth_annotations(stack: &PhantomStack) -> Result<AnnotationSet, PhantomError> {
    let Some(first) = stack.frames.first() else {
        return Ok(AnnotationSet::default());
    };
    let (w, h) = (first.mask.width(), first.mask.height());
    let visible: Vec<(&TruthStrut, Vec3)> = stack
        .truth
        .iter()
        .filter(|t| !t.occluded)
        .filter_map(|t| {
            let (x, y) = visible_mm(t, w, h, stack.resolution)?;
            Some((t, Vec3::new(x, y, stack.frames[t.frame_index].z_offset)))
        })
        .collect();
    if visible.is_empty() {
        return Ok(AnnotationSet::default());
    }
    let pos: Vec<Vec3> = visible.iter().map(|(_, p)| *p).collect();
    let flat = flatten_positions(&pos).map_err(|e| PhantomError::Slice(e.to_string()))?;
    let mut rings: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
    let mut beams: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
    for f in &flat {
        let t = visible[f.point_ref].0;
        if let Some(r) = t.ring {
            rings.entry(r).or_default().push((f.u, f.v));
        }
        if let Some(b) = t.beam {
            beams.entry(b).or_default().push((f.u, f.v));
        }
    }
    let mut lines = Vec::new();
    for (id, mut pts) in rings {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts.dedup_by(|b, a| !(b.0 > a.0));
        if pts.len() >= 2 {
            lines.push(AnnotationLine {
                id,
                kind: LineKind::Ring,
                polyline: pts,
            });
        }
    }
    for (id, mut pts) in beams {
        pts.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
        if pts.len() == 1 {
            let (u, v) = pts[0];
            pts = vec![(u, v - 1e-3), (u, v + 1e-3)];
        }
        lines.push(AnnotationLine {
            id: BEAM_LINE_OFFSET + id,
            kind: LineKind::Beam,
            polyline: pts,
        });
    }
    Ok(AnnotationSet { lines })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFrame {
    pub index: usize,
    pub z_offset: f64,
    pub wire_tip: (f64, f64),
    pub shadow: Option<ShadowSector>,
}

/// `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruthFile {
    pub config: PhantomConfig,
    pub exact_volume: f64,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<TruthFrame>,
    pub struts: Vec<TruthStrut>,
}

impl PhantomTruthFile {
    pub fn load(path: &Path) -> Result<Self, PhantomError> {
        let text = std::fs::read_to_string(path).map_err(|e| PhantomError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PhantomError::Io(format!("{}: {e}", path.display())))
    }

    /// Beams with no visible section in any frame.
    pub fn hidden_beams(&self) -> Vec<u32> {
        hidden_beams(&self.struts)
    }
}

/// Beam ids whose every truth section is occluded.
pub fn hidden_beams(struts: &[TruthStrut]) -> Vec<u32> {
    let mut seen: BTreeMap<u32, bool> = BTreeMap::new();
    for t in struts {
        if let Some(b) = t.beam {
            *seen.entry(b).or_insert(false) |= !t.occluded;
        }
    }
    seen.into_iter().filter(|(_, v)| !v).map(|(b, _)| b).collect()
}

/// Paths written by [`write_phantom`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomFiles {
    pub manifest: PathBuf,
    pub truth: PathBuf,
    pub centerline: PathBuf,
    pub annotations: PathBuf,
    pub solid: PathBuf,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> PhantomError + '_ {
    move |e| PhantomError::Io(format!("{}: {e}", path.display()))
}

/// Write the stack as PNG frames plus manifest, truth, centerline,
/// annotation lines and the solid STL under `dir`.
pub fn write_phantom(cfg: &PhantomConfig, stack: &PhantomStack, dir: &Path) -> Result<PhantomFiles, PhantomError> {
    let Some(first) = stack.frames.first() else {
        return Err(PhantomError::Slice("stack has no frames".into()));
    };
    let (w, h) = (first.mask.width(), first.mask.height());
    let inner = cfg.wall_inner_radius();
    let stack_dir = dir.join("stack");
    let names: Vec<String> = stack.frames.iter().map(|f| format!("frame_{:04}.png", f.index)).collect();
    stack
        .frames
        .par_iter()
        .zip(&names)
        .map(|(f, name)| {
            let img = render_frame(f, stack.resolution, inner, &cfg.wall);
            let bytes = encode_png(&img).map_err(|e| PhantomError::Io(e.to_string()))?;
            let p = stack_dir.join(name);
            write_atomic(&p, &bytes).map_err(io(&p))
        })
        .collect::<Result<(), _>>()?;
    let manifest = StackManifest {
        resolution_mm_per_px: stack.resolution,
        spacing_mm: stack.spacing,
        crop: None,
        frames: stack
            .frames
            .iter()
            .zip(&names)
            .map(|(f, name)| FrameEntry {
                index: f.index,
                file: name.clone(),
                z_offset: None,
                wire_tip: f.wire_tip,
            })
            .collect(),
    };
    let files = PhantomFiles {
        manifest: stack_dir.join("manifest.json"),
        truth: dir.join("truth.json"),
        centerline: dir.join("centerline.json"),
        annotations: dir.join("annotations.json"),
        solid: dir.join("phantom.stl"),
    };
    write_atomic(&files.manifest, json(&manifest).as_bytes()).map_err(io(&files.manifest))?;
    let truth = PhantomTruthFile {
        config: cfg.clone(),
        exact_volume: stack.exact_volume,
        width: w,
        height: h,
        frames: stack
            .frames
            .iter()
            .map(|f| TruthFrame {
                index: f.index,
                z_offset: f.z_offset,
                wire_tip: f.wire_tip,
                shadow: f.shadow,
            })
            .collect(),
        struts: stack.truth.clone(),
    };
    write_atomic(&files.truth, json(&truth).as_bytes()).map_err(io(&files.truth))?;
    write_atomic(&files.centerline, stack.centerline.to_json().as_bytes()).map_err(io(&files.centerline))?;
    let lines = truth_annotations(stack)?;
    write_atomic(&files.annotations, json(&lines).as_bytes()).map_err(io(&files.annotations))?;
    write_atomic(&files.solid, &encode_stl(&stack.solid)).map_err(io(&files.solid))?;
    Ok(files)
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}

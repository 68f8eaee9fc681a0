//! Volume, voxelized overlap and the VA/PA accuracy indexes.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::surface::StentMesh;
use crate::Vec3;

/// Voxels coarser than this cannot resolve a strut edge.
pub const MAX_VOXEL: f64 = 0.15;
pub const DEFAULT_VOXEL: f64 = 0.015;

#[derive(Debug, Error, PartialEq)]
pub enum ValidationError {
    #[error("mesh is open: {} boundary edges, first {:?}", .0.len(), .0.first())]
    OpenMesh(Vec<(u32, u32)>),
    #[error("voxel {0} mm exceeds the 0.15 mm strut edge; use ≤ 0.015 mm (one tenth of an edge)")]
    VoxelTooLarge(f64),
    #[error("voxel size must be > 0, got {0}")]
    VoxelSize(f64),
    #[error("phantom volume must be > 0, got {0}")]
    PhantomVolume(f64),
    #[error("ray casting failed to find a non-degenerate ray in row {0}")]
    DegenerateRow(usize),
}

/// Absolute enclosed volume. Logs a warning when winding is inconsistent.
pub fn mesh_volume(mesh: &StentMesh) -> Result<f64, ValidationError> {
    let census = mesh.edge_census();
    if !census.boundary.is_empty() {
        return Err(ValidationError::OpenMesh(census.boundary));
    }
    let mut directed = std::collections::HashSet::new();
    let mut mixed = 0usize;
    for t in &mesh.triangles {
        for k in 0..3 {
            if !directed.insert((t[k], t[(k + 1) % 3])) {
                mixed += 1;
            }
        }
    }
    if mixed > 0 {
        log::warn!("mesh orientation is mixed on {mixed} edges; volume may be wrong");
    }
    Ok(mesh.signed_volume().abs())
}

/// Voxel counts and volumes of two solids on a shared grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapVolumes {
    pub voxel: f64,
    pub count_a: u64,
    pub count_b: u64,
    pub count_both: u64,
    pub v_a: f64,
    pub v_b: f64,
    pub v_o: f64,
}

/// Triangles projected onto the plane orthogonal to the ray axis.
struct RayGrid<'m> {
    mesh: &'m StentMesh,
    axis: usize,
    u: usize,
    w: usize,
    lo: Vec3,
    voxel: f64,
    nw: usize,
    bins: Vec<Vec<u32>>,
}

impl<'m> RayGrid<'m> {
    fn new(mesh: &'m StentMesh, axis: usize, lo: Vec3, voxel: f64, nu: usize, nw: usize) -> Self {
        let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut bins = vec![Vec::new(); nu * nw];
        let idx = |x: f64, l: f64| (x - l) / voxel - 0.5;
        for i in 0..mesh.len() {
            let c = mesh.corners(i);
            let (umin, umax) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[u]), b.max(p[u])));
            let (wmin, wmax) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[w]), b.max(p[w])));
            // Widen by a hair so jittered rays near a bin edge still see the triangle.
            let pad = 1e-6;
            let iu0 = (idx(umin, lo[u]) - pad).ceil().max(0.0) as usize;
            let iu1 = (idx(umax, lo[u]) + pad).floor();
            let iw0 = (idx(wmin, lo[w]) - pad).ceil().max(0.0) as usize;
            let iw1 = (idx(wmax, lo[w]) + pad).floor();
            if iu1 < 0.0 || iw1 < 0.0 {
                continue;
            }
            let (iu1, iw1) = ((iu1 as usize).min(nu.saturating_sub(1)), (iw1 as usize).min(nw.saturating_sub(1)));
            for iu in iu0..=iu1 {
                for iw in iw0..=iw1 {
                    bins[iu * nw + iw].push(i as u32);
                }
            }
        }
        Self {
            mesh,
            axis,
            u,
            w,
            lo,
            voxel,
            nw,
            bins,
        }
    }

    /// Sorted crossings of the ray through row `(iu, iw)` with parity
    /// intervals; retried with deterministic jitter on degenerate hits.
    fn intervals(&self, iu: usize, iw: usize) -> Result<Vec<(f64, f64)>, ValidationError> {
        let pu = self.lo[self.u] + (iu as f64 + 0.5) * self.voxel;
        let pw = self.lo[self.w] + (iw as f64 + 0.5) * self.voxel;
        let bin = &self.bins[iu * self.nw + iw];
        'attempt: for attempt in 0..16u64 {
            let (ju, jw) = if attempt == 0 {
                (0.0, 0.0)
            } else {
                let h = splitmix(((iu as u64) << 32) ^ (iw as u64) ^ (attempt << 56));
                let a = (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                let b = (splitmix(h) >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                (a * 1e-6 * self.voxel, b * 1e-6 * self.voxel)
            };
            let (qu, qw) = (pu + ju, pw + jw);
            let mut hits = Vec::new();
            for &t in bin {
                let c = self.mesh.corners(t as usize);
                let p: Vec<(f64, f64)> = c.iter().map(|v| (v[self.u] - qu, v[self.w] - qw)).collect();
                let e = |a: (f64, f64), b: (f64, f64)| a.0 * b.1 - a.1 * b.0;
                let (e0, e1, e2) = (e(p[1], p[2]), e(p[2], p[0]), e(p[0], p[1]));
                let scale = p.iter().map(|q| q.0.abs() + q.1.abs()).fold(0.0, f64::max).powi(2) * 1e-12;
                if e0.abs() <= scale || e1.abs() <= scale || e2.abs() <= scale {
                    let inside_or_edge = (e0 >= -scale && e1 >= -scale && e2 >= -scale) || (e0 <= scale && e1 <= scale && e2 <= scale);
                    if inside_or_edge {
                        continue 'attempt;
                    }
                    continue;
                }
                if (e0 > 0.0) == (e1 > 0.0) && (e1 > 0.0) == (e2 > 0.0) {
                    let sum = e0 + e1 + e2;
                    let x = (e0 * c[0][self.axis] + e1 * c[1][self.axis] + e2 * c[2][self.axis]) / sum;
                    hits.push(x);
                }
            }
            if hits.len() % 2 == 1 {
                continue 'attempt;
            }
            hits.sort_by(f64::total_cmp);
            return Ok(hits.chunks(2).map(|c| (c[0], c[1])).collect());
        }
        Err(ValidationError::DegenerateRow(iu * self.nw + iw))
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Voxel centers `lo + (i + ½)·v` strictly inside `(s, e)`.
fn centers_in(s: f64, e: f64, lo: f64, v: f64, n: usize) -> u64 {
    let a = ((s - lo) / v - 0.5).ceil().max(0.0);
    let b = ((e - lo) / v - 0.5).floor().min(n as f64 - 1.0);
    if b < a {
        0
    } else {
        (b - a) as u64 + 1
    }
}

fn intersect(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        let s = a[i].0.max(b[j].0);
        let e = a[i].1.min(b[j].1);
        if s < e {
            out.push((s, e));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Voxelize both closed meshes on a shared grid over their joint bounding
/// box; a voxel is inside when its center is (parity ray casting along the
/// longest box axis).
pub fn voxel_overlap(a: &StentMesh, b: &StentMesh, voxel: f64) -> Result<OverlapVolumes, ValidationError> {
    if !(voxel > 0.0) {
        return Err(ValidationError::VoxelSize(voxel));
    }
    if voxel > MAX_VOXEL {
        return Err(ValidationError::VoxelTooLarge(voxel));
    }
    for m in [a, b] {
        let c = m.edge_census();
        if !c.boundary.is_empty() {
            return Err(ValidationError::OpenMesh(c.boundary));
        }
    }
    let bounds: Vec<(Vec3, Vec3)> = [a, b].iter().filter_map(|m| m.bounds()).collect();
    if bounds.is_empty() {
        return Ok(OverlapVolumes {
            voxel,
            count_a: 0,
            count_b: 0,
            count_both: 0,
            v_a: 0.0,
            v_b: 0.0,
            v_o: 0.0,
        });
    }
    let lo = bounds.iter().fold(bounds[0].0, |l, b| l.inf(&b.0));
    let hi = bounds.iter().fold(bounds[0].1, |h, b| h.sup(&b.1));
    let ext = hi - lo;
    let axis = (0..3).max_by(|&i, &j| ext[i].total_cmp(&ext[j])).unwrap();
    let n: Vec<usize> = (0..3).map(|k| ((ext[k] / voxel).ceil() as usize).max(1)).collect();
    let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
    let ga = RayGrid::new(a, axis, lo, voxel, n[u], n[w]);
    let gb = RayGrid::new(b, axis, lo, voxel, n[u], n[w]);
    let rows = n[u] * n[w];
    let counts = (0..rows)
        .into_par_iter()
        .map(|r| {
            let (iu, iw) = (r / n[w], r % n[w]);
            let ia = ga.intervals(iu, iw)?;
            let ib = gb.intervals(iu, iw)?;
            let count = |iv: &[(f64, f64)]| -> u64 { iv.iter().map(|&(s, e)| centers_in(s, e, lo[axis], voxel, n[axis])).sum() };
            Ok((count(&ia), count(&ib), count(&intersect(&ia, &ib))))
        })
        .try_reduce(|| (0, 0, 0), |x, y| Ok((x.0 + y.0, x.1 + y.1, x.2 + y.2)))?;
    let v3 = voxel.powi(3);
    Ok(OverlapVolumes {
        voxel,
        count_a: counts.0,
        count_b: counts.1,
        count_both: counts.2,
        v_a: counts.0 as f64 * v3,
        v_b: counts.1 as f64 * v3,
        v_o: counts.2 as f64 * v3,
    })
}

/// Reconstruction accuracy against a phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voxel_size: Option<f64>,
    pub v_r: f64,
    pub v_p: f64,
    pub v_o: f64,
    #[serde(rename = "VA")]
    pub va: f64,
    #[serde(rename = "PA")]
    pub pa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconstructed_mesh: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom_mesh: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// `VA = 100·V_r/V_p`, `PA = 100·V_o/V_p`.
pub fn accuracy(v_r: f64, v_p: f64, v_o: f64) -> Result<AccuracyReport, ValidationError> {
    if !(v_p > 0.0) {
        return Err(ValidationError::PhantomVolume(v_p));
    }
    Ok(AccuracyReport {
        spacing: None,
        voxel_size: None,
        v_r,
        v_p,
        v_o,
        va: 100.0 * v_r / v_p,
        pa: 100.0 * v_o / v_p,
        reconstructed_mesh: None,
        phantom_mesh: None,
        config_hash: None,
    })
}

/// Plain-text table of one or more reports, one column per spacing.
pub fn accuracy_table(reports: &[AccuracyReport]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<22}", "Inter-slice distance");
    for r in reports {
        let _ = write!(s, "{:>12}", r.spacing.map(|x| format!("{x} mm")).unwrap_or_else(|| "-".into()));
    }
    s.push('\n');
    let rows: [(&str, fn(&AccuracyReport) -> String); 5] = [
        ("V_r (mm^3)", |r| format!("{:.4}", r.v_r)),
        ("V_p (mm^3)", |r| format!("{:.4}", r.v_p)),
        ("V_o (mm^3)", |r| format!("{:.4}", r.v_o)),
        ("VA (%)", |r| format!("{:.2}", r.va)),
        ("PA (%)", |r| format!("{:.2}", r.pa)),
    ];
    for (name, f) in rows {
        let _ = write!(s, "{name:<22}");
        for r in reports {
            let _ = write!(s, "{:>12}", f(r));
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{box_mesh, icosphere};

    fn round2(x: f64) -> f64 {
        (x * 100.0).round() / 100.0
    }

    #[test]
    fn published_volume_triples() {
        let coarse = accuracy(11.3876, 11.8789, 6.6408).unwrap();
        assert_eq!((round2(coarse.va), round2(coarse.pa)), (95.86, 55.90));
        let fine = accuracy(11.8793, 11.8789, 9.0764).unwrap();
        assert_eq!((round2(fine.va), round2(fine.pa)), (100.0, 76.41));
        assert!(accuracy(1.0, 0.0, 0.0).is_err());
        let k = 3.7;
        let scaled = accuracy(11.3876 * k, 11.8789 * k, 6.6408 * k).unwrap();
        assert!((scaled.va - coarse.va).abs() < 1e-12 && (scaled.pa - coarse.pa).abs() < 1e-12);
        let table = accuracy_table(&[coarse, fine]);
        assert!(table.contains("95.86") && table.contains("76.41"));
    }

    #[test]
    fn volumes_of_cube_and_sphere() {
        let cube = box_mesh(Vec3::zeros(), Vec3::repeat(1.0));
        assert!((mesh_volume(&cube).unwrap() - 1.0).abs() < 1e-12);
        let s = icosphere(1.0, 4);
        let exact = 4.0 / 3.0 * std::f64::consts::PI;
        assert!((mesh_volume(&s).unwrap() - exact).abs() / exact < 0.005);
        let mut open = cube.clone();
        open.triangles.pop();
        assert!(matches!(mesh_volume(&open), Err(ValidationError::OpenMesh(_))));
    }

    #[test]
    fn box_overlap_analytic() {
        let a = box_mesh(Vec3::zeros(), Vec3::new(1.5, 1.0, 0.6));
        let b = box_mesh(Vec3::new(0.5, 0.25, 0.15), Vec3::new(2.0, 1.2, 0.9));
        let v = 0.015;
        let o = voxel_overlap(&a, &b, v).unwrap();
        let exact = 1.0 * 0.75 * 0.45;
        assert!((o.v_o - exact).abs() / exact < 0.02, "{}", o.v_o);
        assert!((o.v_a - 0.9).abs() / 0.9 < 0.02);
        // Independent count of grid centers inside the intersection box.
        let count = |lo: f64, hi: f64| (0..400).filter(|i| {
            let c = (*i as f64 + 0.5) * v;
            c > lo && c < hi
        }).count() as u64;
        assert_eq!(o.count_both, count(0.5, 1.5) * count(0.25, 1.0) * count(0.15, 0.6));
        assert_eq!(o.count_a, count(0.0, 1.5) * count(0.0, 1.0) * count(0.0, 0.6));
        let self_o = voxel_overlap(&a, &a, 0.015).unwrap();
        assert_eq!(self_o.count_both, self_o.count_a);
        let far = a.translated(Vec3::new(10.0, 0.0, 0.0));
        assert_eq!(voxel_overlap(&a, &far, 0.05).unwrap().count_both, 0);
    }

    #[test]
    fn voxel_limits() {
        let a = box_mesh(Vec3::zeros(), Vec3::repeat(1.0));
        assert_eq!(voxel_overlap(&a, &a, 0.2), Err(ValidationError::VoxelTooLarge(0.2)));
        assert_eq!(voxel_overlap(&a, &a, 0.0), Err(ValidationError::VoxelSize(0.0)));
    }

    #[test]
    fn sphere_refinement_converges() {
        let s = icosphere(0.5, 4);
        let t = s.translated(Vec3::new(0.3, 0.0, 0.0));
        let c = voxel_overlap(&s, &t, 0.04).unwrap().v_o;
        let f = voxel_overlap(&s, &t, 0.02).unwrap().v_o;
        assert!((c - f).abs() / f < 0.02, "{c} {f}");
        let v = mesh_volume(&s).unwrap();
        let vox = voxel_overlap(&s, &s, 0.015).unwrap().v_a;
        assert!((v - vox).abs() / v < 0.02);
    }
}

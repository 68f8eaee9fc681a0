use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::mesh::{StentMesh, Tag};
use crate::fsutil::write_atomic;
use crate::Vec3;

#[derive(Debug, Error)]
pub enum StlError {
    #[error("malformed STL at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

const HEADER: &[u8] = b"stentrecon binary STL";

/// Binary STL: 80-byte header, u32 count, 50 bytes per triangle.
pub fn encode_stl(mesh: &StentMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(84 + 50 * mesh.len());
    let mut header = [0u8; 80];
    header[..HEADER.len()].copy_from_slice(HEADER);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.len() as u32).to_le_bytes());
    let push = |out: &mut Vec<u8>, v: &Vec3| {
        for c in [v.x, v.y, v.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    };
    for i in 0..mesh.len() {
        // normal of the stored float32 corners, so a decoded file re-encodes
        // to the same bytes
        let [a, b, c] = mesh.corners(i).map(|p| p.map(|x| x as f32 as f64));
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        push(&mut out, &if len > 0.0 { n / len } else { Vec3::zeros() });
        for p in [a, b, c] {
            push(&mut out, &p);
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}

/// Parse binary STL; vertices with identical float32 coordinates are shared.
pub fn decode_stl(bytes: &[u8]) -> Result<StentMesh, StlError> {
    if bytes.len() < 84 {
        return Err(StlError::Parse {
            offset: bytes.len(),
            msg: "truncated header".into(),
        });
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let expected = 84 + 50 * count;
    if bytes.len() != expected {
        return Err(StlError::Parse {
            offset: bytes.len().min(expected),
            msg: format!("{count} triangles need {expected} bytes, file has {}", bytes.len()),
        });
    }
    let mut mesh = StentMesh::new();
    let mut index: HashMap<[u32; 3], u32> = HashMap::new();
    let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    for t in 0..count {
        let base = 84 + 50 * t;
        let mut tri = [0u32; 3];
        for (k, slot) in tri.iter_mut().enumerate() {
            let o = base + 12 + 12 * k;
            let c = [f(o), f(o + 4), f(o + 8)];
            if c.iter().any(|v| !v.is_finite()) {
                return Err(StlError::Parse {
                    offset: o,
                    msg: "non-finite vertex".into(),
                });
            }
            let bits = [c[0].to_bits(), c[1].to_bits(), c[2].to_bits()];
            *slot = *index
                .entry(bits)
                .or_insert_with(|| mesh.add_vertex(Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64)));
        }
        mesh.add_triangle(tri, Tag::Other);
    }
    Ok(mesh)
}

pub fn write_stl(mesh: &StentMesh, path: &Path) -> Result<(), StlError> {
    Ok(write_atomic(path, &encode_stl(mesh))?)
}

pub fn read_stl(path: &Path) -> Result<StentMesh, StlError> {
    decode_stl(&std::fs::read(path)?)
}

/// ASCII STL for debugging.
pub fn encode_ascii_stl(mesh: &StentMesh, name: &str) -> String {
    let mut s = format!("solid {name}\n");
    for i in 0..mesh.len() {
        let n = mesh.normal(i);
        let _ = writeln!(s, "  facet normal {:e} {:e} {:e}\n    outer loop", n.x, n.y, n.z);
        for p in mesh.corners(i) {
            let _ = writeln!(s, "      vertex {:e} {:e} {:e}", p.x, p.y, p.z);
        }
        s.push_str("    endloop\n  endfacet\n");
    }
    let _ = writeln!(s, "endsolid {name}");
    s
}

#[cfg(test)]
mod tests {
    use super::super::mesh::box_mesh;
    use super::*;

    #[test]
    fn sizes() {
        let mut one = StentMesh::new();
        let v: Vec<u32> = [Vec3::zeros(), Vec3::x(), Vec3::y()].iter().map(|&p| one.add_vertex(p)).collect();
        one.add_triangle([v[0], v[1], v[2]], Tag::Other);
        assert_eq!(encode_stl(&one).len(), 134);
        let empty = encode_stl(&StentMesh::new());
        assert_eq!(empty.len(), 84);
        assert_eq!(decode_stl(&empty).unwrap().len(), 0);
    }

    #[test]
    fn round_trip() {
        let m = box_mesh(Vec3::new(0.1, 0.2, 0.3), Vec3::new(1.7, 2.9, 3.1));
        let back = decode_stl(&encode_stl(&m)).unwrap();
        assert_eq!(back.len(), m.len());
        assert!(back.is_watertight());
        for i in 0..m.len() {
            for (a, b) in m.corners(i).iter().zip(back.corners(i)) {
                for k in 0..3 {
                    assert_eq!(a[k] as f32, b[k] as f32);
                }
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.stl");
        write_stl(&m, &p).unwrap();
        assert_eq!(read_stl(&p).unwrap().len(), 12);
    }

    #[test]
    fn malformed_offsets() {
        match decode_stl(&[0u8; 10]) {
            Err(StlError::Parse { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("{other:?}"),
        }
        let mut bytes = encode_stl(&box_mesh(Vec3::zeros(), Vec3::repeat(1.0)));
        bytes.truncate(200);
        assert!(matches!(decode_stl(&bytes), Err(StlError::Parse { offset: 200, .. })));
        let ascii = encode_ascii_stl(&box_mesh(Vec3::zeros(), Vec3::repeat(1.0)), "cube");
        assert_eq!(ascii.matches("facet normal").count(), 12);
    }
}

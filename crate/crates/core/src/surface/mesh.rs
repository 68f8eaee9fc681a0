use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::Vec3;

/// What a triangle belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "id")]
pub enum Tag {
    Ring(u32),
    Beam(u32),
    /// Zipper between a beam end and its ring hole, keyed by beam id.
    Joint(u32),
    Other,
}

/// Indexed triangle mesh with per-triangle component tags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StentMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub tags: Vec<Tag>,
}

/// Edge multiplicities of a mesh.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeCensus {
    pub edges: usize,
    pub boundary: Vec<(u32, u32)>,
    pub non_manifold: Vec<(u32, u32)>,
}

fn key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl StentMesh {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn add_vertex(&mut self, p: Vec3) -> u32 {
        self.vertices.push(p);
        (self.vertices.len() - 1) as u32
    }

    pub fn add_triangle(&mut self, t: [u32; 3], tag: Tag) {
        self.triangles.push(t);
        self.tags.push(tag);
    }

    /// Append `other`, offsetting its indices.
    pub fn append(&mut self, other: &StentMesh) {
        let off = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + off, t[1] + off, t[2] + off]));
        self.tags.extend_from_slice(&other.tags);
    }

    pub fn corners(&self, i: usize) -> [Vec3; 3] {
        let t = self.triangles[i];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    /// Unit normal by the right-hand rule; zero for degenerate triangles.
    pub fn normal(&self, i: usize) -> Vec3 {
        let [a, b, c] = self.corners(i);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::zeros()
        }
    }

    pub fn area(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let [a, b, c] = self.corners(i);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.triangles.iter().flatten().map(|&v| self.vertices[v as usize]);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| (lo.inf(&p), hi.sup(&p))))
    }

    /// Signed volume by the divergence theorem, measured about the bounding
    /// box center for conditioning.
    pub fn signed_volume(&self) -> f64 {
        let Some((lo, hi)) = self.bounds() else {
            return 0.0;
        };
        let o = (lo + hi) / 2.0;
        self.triangle_volumes(o, 0..self.len()).sum::<f64>()
    }

    fn triangle_volumes<'a>(&'a self, o: Vec3, range: impl Iterator<Item = usize> + 'a) -> impl Iterator<Item = f64> + 'a {
        range.map(move |i| {
            let [a, b, c] = self.corners(i);
            (a - o).dot(&(b - o).cross(&(c - o))) / 6.0
        })
    }

    pub fn edge_census(&self) -> EdgeCensus {
        let mut count: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *count.entry(key(t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        let mut boundary: Vec<_> = count.iter().filter(|(_, &c)| c == 1).map(|(&e, _)| e).collect();
        let mut non_manifold: Vec<_> = count.iter().filter(|(_, &c)| c > 2).map(|(&e, _)| e).collect();
        boundary.sort_unstable();
        non_manifold.sort_unstable();
        EdgeCensus {
            edges: count.len(),
            boundary,
            non_manifold,
        }
    }

    /// Every edge shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        let c = self.edge_census();
        c.boundary.is_empty() && c.non_manifold.is_empty()
    }

    /// `V − E + F` over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &v in t {
                used[v as usize] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_census().edges as i64 + self.len() as i64
    }

    /// Closed boundary loops as vertex cycles.
    pub fn boundary_loops(&self) -> Vec<Vec<u32>> {
        let mut next: HashMap<u32, Vec<u32>> = HashMap::new();
        for (a, b) in self.edge_census().boundary {
            next.entry(a).or_default().push(b);
            next.entry(b).or_default().push(a);
        }
        let mut starts: Vec<u32> = next.keys().copied().collect();
        starts.sort_unstable();
        let mut seen = std::collections::HashSet::new();
        let mut loops = Vec::new();
        for s in starts {
            if seen.contains(&s) {
                continue;
            }
            let mut lp = vec![s];
            seen.insert(s);
            let mut prev = s;
            let mut cur = next[&s][0];
            while cur != s && seen.insert(cur) {
                lp.push(cur);
                let nb = &next[&cur];
                let nxt = if nb[0] != prev { nb[0] } else { *nb.get(1).unwrap_or(&nb[0]) };
                prev = cur;
                cur = nxt;
            }
            loops.push(lp);
        }
        loops
    }

    /// Triangle adjacency via shared edges: `(neighbor, shared edge)`.
    fn edge_triangles(&self) -> HashMap<(u32, u32), Vec<usize>> {
        let mut map: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
        for (i, t) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                map.entry(key(t[k], t[(k + 1) % 3])).or_default().push(i);
            }
        }
        map
    }

    /// Edge-connected components as lists of triangle indices, ordered by
    /// their smallest triangle.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let map = self.edge_triangles();
        let mut comp = vec![usize::MAX; self.len()];
        let mut out = Vec::new();
        for s in 0..self.len() {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![s];
            comp[s] = id;
            let mut queue = VecDeque::from([s]);
            while let Some(i) = queue.pop_front() {
                let t = self.triangles[i];
                for k in 0..3 {
                    for &j in &map[&key(t[k], t[(k + 1) % 3])] {
                        if comp[j] == usize::MAX {
                            comp[j] = id;
                            members.push(j);
                            queue.push_back(j);
                        }
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Make winding consistent across shared edges, then flip any component
    /// whose signed volume is negative. Returns the number of triangles
    /// whose winding could not be made consistent (non-orientable or
    /// non-manifold neighborhoods).
    pub fn orient_outward(&mut self) -> usize {
        let map = self.edge_triangles();
        let mut visited = vec![false; self.len()];
        let mut conflicts = 0;
        let has_directed = |t: [u32; 3], a: u32, b: u32| (0..3).any(|k| t[k] == a && t[(k + 1) % 3] == b);
        for comp in self.components() {
            let s = comp[0];
            visited[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(i) = queue.pop_front() {
                let t = self.triangles[i];
                for k in 0..3 {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    let nbs = &map[&key(a, b)];
                    if nbs.len() != 2 {
                        continue;
                    }
                    for &j in nbs {
                        if j == i {
                            continue;
                        }
                        let consistent = !has_directed(self.triangles[j], a, b);
                        if visited[j] {
                            if !consistent {
                                conflicts += 1;
                            }
                            continue;
                        }
                        if !consistent {
                            self.triangles[j].swap(1, 2);
                        }
                        visited[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            let lo_hi = comp
                .iter()
                .flat_map(|&i| self.corners(i))
                .fold((Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)), |(lo, hi), p| {
                    (lo.inf(&p), hi.sup(&p))
                });
            let o = (lo_hi.0 + lo_hi.1) / 2.0;
            let vol: f64 = self.triangle_volumes(o, comp.iter().copied()).sum();
            if vol < 0.0 {
                for &i in &comp {
                    self.triangles[i].swap(1, 2);
                }
            }
        }
        conflicts
    }

    /// Merge vertices closer than `eps` (grid hashing), dropping triangles
    /// that collapse.
    pub fn weld(&mut self, eps: f64) {
        let cell = |p: &Vec3| ((p.x / eps).round() as i64, (p.y / eps).round() as i64, (p.z / eps).round() as i64);
        let mut grid: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        let mut remap = vec![0u32; self.vertices.len()];
        let mut kept: Vec<Vec3> = Vec::new();
        for (i, p) in self.vertices.iter().enumerate() {
            let c = cell(p);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(list) = grid.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                            for &k in list {
                                if (kept[k as usize] - p).norm() <= eps {
                                    found = Some(k);
                                    break 'search;
                                }
                            }
                        }
                    }
                }
            }
            remap[i] = match found {
                Some(k) => k,
                None => {
                    kept.push(*p);
                    let k = (kept.len() - 1) as u32;
                    grid.entry(c).or_default().push(k);
                    k
                }
            };
        }
        let mut tris = Vec::with_capacity(self.triangles.len());
        let mut tags = Vec::with_capacity(self.tags.len());
        for (t, tag) in self.triangles.iter().zip(&self.tags) {
            let m = [remap[t[0] as usize], remap[t[1] as usize], remap[t[2] as usize]];
            if m[0] != m[1] && m[1] != m[2] && m[0] != m[2] {
                tris.push(m);
                tags.push(*tag);
            }
        }
        self.vertices = kept;
        self.triangles = tris;
        self.tags = tags;
    }

    /// Sub-mesh of the given triangles with compacted vertices.
    pub fn extract(&self, tris: &[usize]) -> StentMesh {
        let mut remap: HashMap<u32, u32> = HashMap::new();
        let mut out = StentMesh::new();
        for &i in tris {
            let t = self.triangles[i];
            let mut m = [0u32; 3];
            for k in 0..3 {
                m[k] = *remap
                    .entry(t[k])
                    .or_insert_with(|| out.add_vertex(self.vertices[t[k] as usize]));
            }
            out.add_triangle(m, self.tags[i]);
        }
        out
    }

    pub fn translated(&self, d: Vec3) -> StentMesh {
        let mut m = self.clone();
        for v in &mut m.vertices {
            *v += d;
        }
        m
    }
}

/// Axis-aligned box with outward winding.
pub fn box_mesh(lo: Vec3, hi: Vec3) -> StentMesh {
    let mut m = StentMesh::new();
    for k in 0..8 {
        m.add_vertex(Vec3::new(
            if k & 1 == 0 { lo.x } else { hi.x },
            if k & 2 == 0 { lo.y } else { hi.y },
            if k & 4 == 0 { lo.z } else { hi.z },
        ));
    }
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    for q in quads {
        m.add_triangle([q[0], q[1], q[2]], Tag::Other);
        m.add_triangle([q[0], q[2], q[3]], Tag::Other);
    }
    m
}

/// Icosahedron refined `level` times and projected to a sphere.
pub fn icosphere(radius: f64, level: usize) -> StentMesh {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, g, 0.0),
        (1.0, g, 0.0),
        (-1.0, -g, 0.0),
        (1.0, -g, 0.0),
        (0.0, -1.0, g),
        (0.0, 1.0, g),
        (0.0, -1.0, -g),
        (0.0, 1.0, -g),
        (g, 0.0, -1.0),
        (g, 0.0, 1.0),
        (-g, 0.0, -1.0),
        (-g, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut m = [0u32; 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                m[k] = *mid.entry(key(a, b)).or_insert_with(|| {
                    verts.push(((verts[a as usize] + verts[b as usize]) / 2.0).normalize());
                    (verts.len() - 1) as u32
                });
            }
            next.push([f[0], m[0], m[2]]);
            next.push([f[1], m[1], m[0]]);
            next.push([f[2], m[2], m[1]]);
            next.push(m);
        }
        faces = next;
    }
    StentMesh {
        vertices: verts.into_iter().map(|v| v * radius).collect(),
        tags: vec![Tag::Other; faces.len()],
        triangles: faces,
    }
}

//! Reference implementations and fixtures shared by the integration tests.
//! The oracles are deliberately naive so they share no code with the crate.
#![allow(dead_code)]

use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stentrecon_core::raster::{BinaryImage, GrayImage};
use stentrecon_core::registration::WirePath;
use stentrecon_core::skeleton::Curve;
use stentrecon_core::Vec3;

fn level(v: f64) -> usize {
    ((v * 256.0).floor() as usize).min(255)
}

/// Otsu level by scanning every split of the raw pixels and comparing
/// between-class variances as exact rationals. `None` when fewer than two
/// levels are occupied. Ties keep the smallest level.
pub fn otsu_scan(img: &GrayImage) -> Option<usize> {
    let levels: Vec<i128> = img.pixels().iter().map(|&v| level(v) as i128).collect();
    let mut best: Option<(usize, i128, i128)> = None;
    for t in 0..255i128 {
        let (mut n0, mut s0, mut n1, mut s1) = (0i128, 0i128, 0i128, 0i128);
        for &l in &levels {
            if l <= t {
                n0 += 1;
                s0 += l;
            } else {
                n1 += 1;
                s1 += l;
            }
        }
        if n0 == 0 || n1 == 0 {
            continue;
        }
        // w0·w1·(μ0 − μ1)² · N² = (S0·n1 − S1·n0)² / (n0·n1)
        let d = s0 * n1 - s1 * n0;
        let (num, den) = (d * d, n0 * n1);
        let better = match best {
            None => true,
            Some((_, bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((t as usize, num, den));
        }
    }
    best.map(|b| b.0)
}

/// 8-connected component label per pixel (`usize::MAX` for background),
/// by breadth-first search.
pub fn bfs_labels(mask: &BinaryImage) -> (Vec<usize>, usize) {
    let (w, h) = (mask.width(), mask.height());
    let mut label = vec![usize::MAX; w * h];
    let mut next = 0;
    for start in 0..w * h {
        if !mask.as_slice()[start] || label[start] != usize::MAX {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        label[start] = next;
        while let Some(p) = queue.pop_front() {
            let (r, c) = ((p / w) as i64, (p % w) as i64);
            for nr in r - 1..=r + 1 {
                for nc in c - 1..=c + 1 {
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let q = nr as usize * w + nc as usize;
                    if mask.as_slice()[q] && label[q] == usize::MAX {
                        label[q] = next;
                        queue.push_back(q);
                    }
                }
            }
        }
        next += 1;
    }
    (label, next)
}

/// Dilation by looking at every pixel of the `(2r+1)²` neighbourhood.
pub fn dilate_scan(mask: &BinaryImage, radius: usize) -> BinaryImage {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let r = radius as i64;
    BinaryImage::from_fn(mask.width(), mask.height(), |row, col| {
        let (row, col) = (row as i64, col as i64);
        (row - r..=row + r).any(|y| {
            (col - r..=col + r).any(|x| y >= 0 && x >= 0 && y < h && x < w && mask.get(y as usize, x as usize))
        })
    })
}

/// Random grayscale image: uniform noise, a few flat levels, or two noisy
/// populations, chosen by the generator.
pub fn random_gray(rng: &mut ChaCha8Rng) -> GrayImage {
    let (w, h) = (rng.random_range(1..48), rng.random_range(1..48));
    let style = rng.random_range(0..3);
    let levels: Vec<f64> = (0..rng.random_range(2..6)).map(|_| rng.random_range(0.0..1.0)).collect();
    let (a, b) = (rng.random_range(0.05..0.45), rng.random_range(0.55..0.95));
    GrayImage::from_fn(w, h, |_, _| match style {
        0 => rng.random_range(0.0..1.0),
        1 => levels[rng.random_range(0..levels.len())],
        _ => {
            let m = if rng.random_bool(0.3) { b } else { a };
            (m + rng.random_range(-0.08..0.08f64)).clamp(0.0, 1.0)
        }
    })
}

pub fn random_mask(rng: &mut ChaCha8Rng, density: f64) -> BinaryImage {
    let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
    BinaryImage::from_fn(w, h, |_, _| rng.random_bool(density))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Helix of radius `r` rising `pitch` per turn about z, sampled uniformly in
/// angle.
pub fn helix(r: f64, pitch: f64, turns: f64, n: usize) -> WirePath {
    let c = pitch / (2.0 * PI);
    WirePath::new(
        (0..=n)
            .map(|i| {
                let t = 2.0 * PI * turns * i as f64 / n as f64;
                Vec3::new(r * t.cos(), r * t.sin(), c * t)
            })
            .collect(),
    )
    .unwrap()
}

/// Unit tangent of the helix at `p` (on the helix).
pub fn helix_tangent(r: f64, pitch: f64, p: &Vec3) -> Vec3 {
    let c = pitch / (2.0 * PI);
    let a = p.y.atan2(p.x);
    Vec3::new(-r * a.sin(), r * a.cos(), c).normalize()
}

/// Horizontal circle of radius `r` at height `z`, parameterized by angle.
pub struct Circle {
    pub r: f64,
    pub z: f64,
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

pub fn z_axis() -> Vec<Vec3> {
    vec![Vec3::new(0.0, 0.0, -5.0), Vec3::new(0.0, 0.0, 5.0)]
}

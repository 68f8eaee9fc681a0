use serde::{Deserialize, Serialize};

use super::BinaryImage;

/// A maximal 8-connected foreground component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelRegion {
    /// Member pixels as `(row, col)` in raster order.
    pub pixels: Vec<(usize, usize)>,
    /// Mean `(row, col)` of the members.
    pub centroid: (f64, f64),
    /// Moore-traced outer boundary, starting at the first member pixel.
    pub contour: Vec<(usize, usize)>,
    pub area: usize,
}

impl PixelRegion {
    pub fn from_pixels(mut pixels: Vec<(usize, usize)>, width: usize, height: usize) -> Self {
        pixels.sort_unstable();
        let area = pixels.len();
        let (sr, sc) = pixels
            .iter()
            .fold((0.0, 0.0), |(r, c), &(pr, pc)| (r + pr as f64, c + pc as f64));
        let centroid = (sr / area as f64, sc / area as f64);
        let mut member = vec![false; width * height];
        for &(r, c) in &pixels {
            member[r * width + c] = true;
        }
        let contour = trace_contour(&member, width, height, pixels[0]);
        Self {
            pixels,
            centroid,
            contour,
            area,
        }
    }

    pub fn contour_length(&self) -> usize {
        self.contour.len()
    }
}

// Clockwise on screen (rows grow downward), starting west.
const DIRS: [(i64, i64); 8] = [
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
];

fn dir_index(dr: i64, dc: i64) -> usize {
    DIRS.iter()
        .position(|&d| d == (dr, dc))
        .expect("backtrack pixel must be an 8-neighbor")
}

/// Moore-neighbor boundary trace of the component containing `start`.
///
/// `start` must be the component's topmost-leftmost pixel so that its west
/// neighbor is background. Tracing stops when the first move out of `start`
/// is about to be repeated.
pub fn trace_contour(
    member: &[bool],
    width: usize,
    height: usize,
    start: (usize, usize),
) -> Vec<(usize, usize)> {
    let inside = |r: i64, c: i64| {
        r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width && member[r as usize * width + c as usize]
    };
    let mut contour = vec![start];
    let (mut pr, mut pc) = (start.0 as i64, start.1 as i64);
    let mut back = 0usize;
    let mut first_move: Option<(i64, i64)> = None;
    let limit = 8 * member.iter().filter(|&&m| m).count() + 16;
    loop {
        let mut next = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let (qr, qc) = (pr + DIRS[d].0, pc + DIRS[d].1);
            if inside(qr, qc) {
                let prev = (back + k - 1) % 8;
                let (br, bc) = (pr + DIRS[prev].0, pc + DIRS[prev].1);
                next = Some((qr, qc, dir_index(br - qr, bc - qc)));
                break;
            }
        }
        let Some((nr, nc, nb)) = next else {
            // Isolated pixel.
            return contour;
        };
        let at_start = (pr, pc) == (start.0 as i64, start.1 as i64);
        match first_move {
            None => first_move = Some((nr, nc)),
            Some(m) if at_start && m == (nr, nc) => {
                // The closing step re-entered `start`; it is already first.
                contour.pop();
                return contour;
            }
            _ => {}
        }
        if contour.len() > limit {
            return contour;
        }
        contour.push((nr as usize, nc as usize));
        pr = nr;
        pc = nc;
        back = nb;
    }
}

/// Label the 8-connected components of `mask`, keeping those with at least
/// `min_area` pixels. Regions are ordered by their first pixel in raster order.
pub fn connected_regions(mask: &BinaryImage, min_area: usize) -> Vec<PixelRegion> {
    let (w, h) = (mask.width(), mask.height());
    let src = mask.as_slice();
    let mut seen = vec![false; w * h];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !src[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(p) = stack.pop() {
            let (r, c) = (p / w, p % w);
            pixels.push((r, c));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr as usize >= h || nc as usize >= w {
                        continue;
                    }
                    let q = nr as usize * w + nc as usize;
                    if src[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        if pixels.len() >= min_area.max(1) {
            regions.push(PixelRegion::from_pixels(pixels, w, h));
        }
    }
    regions
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks() -> BinaryImage {
        BinaryImage::from_fn(40, 20, |r, c| {
            (2..12).contains(&r) && ((2..12).contains(&c) || (20..30).contains(&c))
        })
    }

    #[test]
    fn two_blocks() {
        let regions = connected_regions(&blocks(), 50);
        assert_eq!(regions.len(), 2);
        assert_eq!(regions[0].centroid, (6.5, 6.5));
        assert_eq!(regions[1].centroid, (6.5, 24.5));
        assert_eq!(regions[0].area, 100);
        assert_eq!(regions[0].contour_length(), 36);
    }

    #[test]
    fn small_block_dropped() {
        let m = BinaryImage::from_fn(10, 10, |r, c| r < 7 && c < 7);
        assert!(connected_regions(&m, 50).is_empty());
        assert_eq!(connected_regions(&m, 49).len(), 1);
    }

    #[test]
    fn diagonal_pixels_join() {
        let m = BinaryImage::from_fn(4, 4, |r, c| r == c);
        let regions = connected_regions(&m, 1);
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].area, 4);
    }

    #[test]
    fn contour_of_single_pixel_and_line() {
        let m = BinaryImage::from_fn(5, 5, |r, c| r == 2 && c == 2);
        let reg = connected_regions(&m, 1);
        assert_eq!(reg[0].contour, vec![(2, 2)]);

        let m = BinaryImage::from_fn(6, 3, |r, c| r == 1 && (1..5).contains(&c));
        let reg = connected_regions(&m, 1);
        // Out along the top, back along the bottom of a one-pixel line.
        assert_eq!(
            reg[0].contour,
            vec![(1, 1), (1, 2), (1, 3), (1, 4), (1, 3), (1, 2)]
        );
    }

    #[test]
    fn contour_pixels_are_boundary_members() {
        let m = BinaryImage::from_fn(30, 30, |r, c| {
            let (dr, dc) = (r as f64 - 14.5, c as f64 - 14.5);
            let d2 = dr * dr + dc * dc;
            d2 < 120.0 && !(d2 < 20.0 && dc > 0.0)
        });
        let reg = connected_regions(&m, 1);
        assert_eq!(reg.len(), 1);
        for &(r, c) in &reg[0].contour {
            assert!(m.get(r, c));
            let on_edge = r == 0
                || c == 0
                || r == 29
                || c == 29
                || !m.get(r - 1, c)
                || !m.get(r + 1, c)
                || !m.get(r, c - 1)
                || !m.get(r, c + 1);
            assert!(on_edge, "({r},{c}) is interior");
        }
    }
}

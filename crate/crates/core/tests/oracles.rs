//! Raster primitives against naive reference implementations.

mod common;

use common::{bfs_labels, dilate_scan, otsu_scan, random_gray, random_mask, rng};
use proptest::prelude::*;
use stentrecon_core::raster::{connected_regions, dilate_mask, otsu_threshold, BinaryImage, GrayImage};

fn otsu_agrees(img: &GrayImage) -> Result<(), String> {
    match (otsu_threshold(img), otsu_scan(img)) {
        (Ok(t), Some(level)) if t == (level as f64 + 1.0) / 256.0 => Ok(()),
        (Err(_), None) => Ok(()),
        (got, want) => Err(format!("otsu {got:?} vs scan level {want:?}")),
    }
}

/// Regions must be exactly the BFS components, in raster order of their
/// first pixel.
fn partition_agrees(mask: &BinaryImage) -> Result<(), String> {
    let (labels, count) = bfs_labels(mask);
    let regions = connected_regions(mask, 1);
    if regions.len() != count {
        return Err(format!("{} regions vs {count} components", regions.len()));
    }
    let w = mask.width();
    let mut covered = 0;
    for pair in regions.windows(2) {
        if pair[0].pixels[0] >= pair[1].pixels[0] {
            return Err("regions out of raster order".into());
        }
    }
    for (k, r) in regions.iter().enumerate() {
        let l = labels[r.pixels[0].0 * w + r.pixels[0].1];
        if r.pixels.iter().any(|&(y, x)| labels[y * w + x] != l) {
            return Err(format!("region {k} spans components"));
        }
        if labels.iter().filter(|&&m| m == l).count() != r.area || r.area != r.pixels.len() {
            return Err(format!("region {k} is not a whole component"));
        }
        covered += r.area;
    }
    if covered != mask.count() {
        return Err(format!("{covered} labeled of {} true pixels", mask.count()));
    }
    Ok(())
}

#[test]
fn otsu_matches_exhaustive_scan_on_100_images() {
    let mut g = rng(2024);
    for k in 0..100 {
        let img = random_gray(&mut g);
        otsu_agrees(&img).unwrap_or_else(|e| panic!("image {k}: {e}"));
    }
}

#[test]
fn otsu_single_level_has_no_threshold() {
    let flat = GrayImage::from_fn(7, 5, |_, _| 0.4);
    assert!(otsu_threshold(&flat).is_err());
    assert_eq!(otsu_scan(&flat), None);
}

#[test]
fn flood_fill_matches_bfs_on_100_masks() {
    let mut g = rng(7);
    for k in 0..100 {
        let density = [0.2, 0.45, 0.6, 0.9][k % 4];
        let mask = random_mask(&mut g, density);
        partition_agrees(&mask).unwrap_or_else(|e| panic!("mask {k}: {e}"));
    }
}

#[test]
fn flood_fill_handles_a_1024_square_frame() {
    // one component covering almost everything; recursion would overflow
    let mask = BinaryImage::from_fn(1024, 1024, |r, c| (r + c) % 997 != 0);
    partition_agrees(&mask).unwrap();
}

#[test]
fn dilation_matches_neighbourhood_scan_on_100_masks() {
    let mut g = rng(99);
    for k in 0..100 {
        let mask = random_mask(&mut g, 0.08);
        let radius = k % 5;
        assert_eq!(dilate_mask(&mask, radius), dilate_scan(&mask, radius), "mask {k} radius {radius}");
    }
}

fn gray_strategy() -> impl Strategy<Value = GrayImage> {
    (1usize..24, 1usize..24).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f64..=1.0, w * h).prop_map(move |d| GrayImage::new(w, h, d).unwrap())
    })
}

fn mask_strategy() -> impl Strategy<Value = BinaryImage> {
    (1usize..24, 1usize..24).prop_flat_map(|(w, h)| {
        prop::collection::vec(prop::bool::weighted(0.4), w * h).prop_map(move |d| BinaryImage::new(w, h, d).unwrap())
    })
}

proptest! {
    #[test]
    fn otsu_matches_scan(img in gray_strategy()) {
        prop_assert!(otsu_agrees(&img).is_ok(), "{:?}", otsu_agrees(&img));
    }

    #[test]
    fn flood_fill_matches_bfs(mask in mask_strategy()) {
        prop_assert!(partition_agrees(&mask).is_ok(), "{:?}", partition_agrees(&mask));
    }

    #[test]
    fn dilation_matches_scan(mask in mask_strategy(), radius in 0usize..5) {
        prop_assert_eq!(dilate_mask(&mask, radius), dilate_scan(&mask, radius));
    }
}

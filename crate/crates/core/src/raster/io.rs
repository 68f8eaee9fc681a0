use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use super::{to_grayscale, BinaryImage, GrayImage, RasterError, Result};

/// Load an 8- or 16-bit grayscale or RGB(A) PNG as normalized intensities.
/// Color inputs go through [`to_grayscale`]; alpha is ignored.
pub fn load_png(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path)?;
    decode_png(&bytes)
}

pub fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| RasterError::Decode(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => {
            GrayImage::new(w, h, buf.into_raw().into_iter().map(|p| p as f64 / 255.0).collect())
        }
        DynamicImage::ImageLumaA8(buf) => GrayImage::new(
            w,
            h,
            buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        ),
        DynamicImage::ImageLuma16(buf) => {
            GrayImage::new(w, h, buf.into_raw().into_iter().map(|p| p as f64 / 65535.0).collect())
        }
        DynamicImage::ImageLumaA16(buf) => GrayImage::new(
            w,
            h,
            buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        ),
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            let rgb = img.to_rgb16();
            let px: Vec<[f64; 3]> = rgb
                .pixels()
                .map(|p| p.0.map(|c| c as f64 / 65535.0))
                .collect();
            to_grayscale(w, h, &px)
        }
        other => {
            let rgb = other.to_rgb8();
            let px: Vec<[f64; 3]> = rgb.pixels().map(|p| p.0.map(|c| c as f64 / 255.0)).collect();
            to_grayscale(w, h, &px)
        }
    }
}

/// Encode as an 8-bit grayscale PNG.
pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let raw: Vec<u8> = img
        .pixels()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw)
            .ok_or(RasterError::Dimension {
                expected: img.width() * img.height(),
                actual: img.len(),
            })?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| RasterError::Decode(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn save_png(img: &GrayImage, path: &Path) -> Result<()> {
    let bytes = encode_png(img)?;
    crate::fsutil::write_atomic(path, &bytes)?;
    Ok(())
}

pub fn save_binary_png(mask: &BinaryImage, path: &Path) -> Result<()> {
    save_png(&mask.to_gray(), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_8bit() {
        let img = GrayImage::from_fn(7, 5, |r, c| ((r * 7 + c) * 7) as f64 / 255.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.width(), 7);
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rgb_and_16bit_decode() {
        let rgb = image::RgbImage::from_pixel(2, 2, image::Rgb([255, 0, 0]));
        let mut bytes = std::io::Cursor::new(Vec::new());
        rgb.write_to(&mut bytes, image::ImageFormat::Png).unwrap();
        let g = decode_png(bytes.get_ref()).unwrap();
        assert!((g.get(1, 1) - 0.2989).abs() < 1e-12);

        let l16: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_pixel(3, 1, Luma([65535]));
        let mut bytes = std::io::Cursor::new(Vec::new());
        l16.write_to(&mut bytes, image::ImageFormat::Png).unwrap();
        let g = decode_png(bytes.get_ref()).unwrap();
        assert_eq!(g.get(0, 2), 1.0);
    }

    #[test]
    fn garbage_is_decode_error() {
        assert!(matches!(decode_png(b"not a png"), Err(RasterError::Decode(_))));
    }
}

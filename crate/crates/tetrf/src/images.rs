//! Raster IO: 8-bit RGB(A) images and 16-bit accumulation maps.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb, Rgba};

/// `[0, 1]` to 8-bit with round-to-nearest; out-of-range values are clamped.
pub fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn quantize_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// The value an 8-bit channel decodes to.
pub fn dequantize_u8(q: u8) -> f32 {
    q as f32 / 255.0
}

/// Rounds an image through 8-bit storage, as if saved and reloaded.
pub fn quantized(rgb: &[[f64; 3]]) -> Vec<[f32; 3]> {
    rgb.iter().map(|p| p.map(|c| dequantize_u8(quantize_u8(c)))).collect()
}

pub fn rgb8_bytes(rgb: &[[f64; 3]]) -> Vec<u8> {
    rgb.iter().flat_map(|p| p.map(quantize_u8)).collect()
}

pub fn save_rgb8(path: &Path, width: u32, height: u32, rgb: &[[f64; 3]]) -> image::ImageResult<()> {
    let buf: ImageBuffer<Rgb<u8>, _> = ImageBuffer::from_raw(width, height, rgb8_bytes(rgb)).expect("pixel count matches dimensions");
    buf.save(path)
}

pub fn save_gray16(path: &Path, width: u32, height: u32, values: &[f64]) -> image::ImageResult<()> {
    let data: Vec<u16> = values.iter().map(|&v| quantize_u16(v)).collect();
    let buf: ImageBuffer<Luma<u16>, _> = ImageBuffer::from_raw(width, height, data).expect("pixel count matches dimensions");
    buf.save(path)
}

/// Writes straight (non-premultiplied) color with an alpha channel.
pub fn save_rgba8(path: &Path, width: u32, height: u32, rgb: &[[f64; 3]], alpha: &[f64]) -> image::ImageResult<()> {
    let bytes: Vec<u8> = rgb.iter().zip(alpha).flat_map(|(p, &a)| [p[0], p[1], p[2], a].map(quantize_u8)).collect();
    let buf: ImageBuffer<Rgba<u8>, _> = ImageBuffer::from_raw(width, height, bytes).expect("pixel count matches dimensions");
    buf.save(path)
}

/// A decoded image composited onto a background.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<[f32; 3]>,
    /// Present when the file has an alpha channel.
    pub alpha: Option<Vec<f32>>,
}

/// Loads an RGB or RGBA image, compositing alpha onto `background`.
pub fn load_composited(path: &Path, background: [f64; 3]) -> image::ImageResult<LoadedImage> {
    let img = image::open(path)?;
    let (width, height) = (img.width(), img.height());
    let has_alpha = img.color().has_alpha();
    let rgba: Vec<[f32; 4]> = if img.color().bytes_per_pixel() > img.color().channel_count() {
        img.to_rgba16().pixels().map(|p| p.0.map(|c| c as f32 / 65535.0)).collect()
    } else {
        img.to_rgba8().pixels().map(|p| p.0.map(dequantize_u8)).collect()
    };
    let bg = background.map(|c| c as f32);
    let pixels = rgba.iter().map(|p| core::array::from_fn(|c| p[c] * p[3] + bg[c] * (1.0 - p[3]))).collect();
    let alpha = has_alpha.then(|| rgba.iter().map(|p| p[3]).collect());
    Ok(LoadedImage { width, height, pixels, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rounds_and_clamps() {
        assert_eq!(quantize_u8(-0.1), 0);
        assert_eq!(quantize_u8(1.5), 255);
        assert_eq!(quantize_u8(0.5), 128);
        assert_eq!(quantize_u16(1.0), 65535);
        for q in 0..=255u8 {
            assert_eq!(quantize_u8(dequantize_u8(q) as f64), q);
        }
    }

    #[test]
    fn png_roundtrip_matches_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let rgb: Vec<[f64; 3]> = (0..12).map(|i| [i as f64 / 11.0, 0.3, 1.0 - i as f64 / 11.0]).collect();
        save_rgb8(&path, 4, 3, &rgb).unwrap();
        let img = load_composited(&path, [0.0; 3]).unwrap();
        assert_eq!((img.width, img.height, img.alpha), (4, 3, None));
        assert_eq!(img.pixels, quantized(&rgb));
    }

    #[test]
    fn accumulation_map_is_sixteen_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("acc.png");
        save_gray16(&path, 2, 1, &[0.0, 0.25]).unwrap();
        let img = image::open(&path).unwrap().to_luma16();
        assert_eq!(img.as_raw(), &vec![0, quantize_u16(0.25)]);
    }

    #[test]
    fn rgba_roundtrip_keeps_alpha() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        save_rgba8(&path, 2, 1, &[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], &[1.0, 0.0]).unwrap();
        let img = load_composited(&path, [0.0, 1.0, 0.0]).unwrap();
        assert_eq!(img.alpha, Some(vec![1.0, 0.0]));
        assert_eq!(img.pixels, vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    }
}

//! PNG input/output: 8-bit and 16-bit grayscale, 8-bit RGB.

use std::path::Path;

use dagf_core::image::{Image, ValueRange};
use dagf_core::Image32;
use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{HarnessError, Result};

/// Load a PNG scaled into the unit range ([0,1]); grayscale stays single
/// channel, color becomes 3-channel (alpha dropped).
pub fn load_png(path: &Path) -> Result<Image32> {
    let img = image::open(path)?;
    Ok(match img {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf.pixels().map(|p| p.0[0] as f32 / 255.0).collect();
            Image::from_vec(h as usize, w as usize, 1, ValueRange::Unit, data)?
        }
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf.pixels().map(|p| p.0[0] as f32 / 65535.0).collect();
            Image::from_vec(h as usize, w as usize, 1, ValueRange::Unit, data)?
        }
        other => {
            let buf = other.into_rgb8();
            let (w, h) = buf.dimensions();
            let mut data = Vec::with_capacity((w * h * 3) as usize);
            for p in buf.pixels() {
                data.extend(p.0.iter().map(|v| *v as f32 / 255.0));
            }
            Image::from_vec(h as usize, w as usize, 3, ValueRange::Unit, data)?
        }
    })
}

/// Load a 16-bit (or 8-bit) grayscale PNG keeping the raw sample values,
/// tagged metric. Depth evaluation uses this together with a unit scale.
pub fn load_png_raw_gray(path: &Path) -> Result<Image32> {
    let img = image::open(path)?;
    Ok(match img {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf.pixels().map(|p| p.0[0] as f32).collect();
            Image::from_vec(h as usize, w as usize, 1, ValueRange::Metric, data)?
        }
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf.pixels().map(|p| p.0[0] as f32).collect();
            Image::from_vec(h as usize, w as usize, 1, ValueRange::Metric, data)?
        }
        _ => {
            return Err(HarnessError::Image(format!(
                "{}: raw grayscale load requires a grayscale PNG",
                path.display()
            )))
        }
    })
}

/// Save as PNG: single channel becomes 16-bit grayscale, three channels
/// 8-bit RGB. Unit-range values are scaled; byte-range divided by 255 first;
/// metric images are rejected (no portable mapping).
pub fn save_png(img: &Image32, path: &Path) -> Result<()> {
    let to_unit = |v: f32| -> f32 {
        match img.range {
            ValueRange::Unit => v,
            ValueRange::Byte => v / 255.0,
            ValueRange::Metric => v, // rejected below
        }
    };
    if img.range == ValueRange::Metric {
        return Err(HarnessError::Image(
            "cannot save a metric-range image as PNG; rescale it first".into(),
        ));
    }
    match img.channels {
        1 => {
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_fn(img.width as u32, img.height as u32, |x, y| {
                    let v = to_unit(img.get(y as usize, x as usize, 0)).clamp(0.0, 1.0);
                    Luma([(v * 65535.0).round() as u16])
                });
            buf.save(path)?;
        }
        3 => {
            let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
                ImageBuffer::from_fn(img.width as u32, img.height as u32, |x, y| {
                    let px = |c: usize| {
                        let v = to_unit(img.get(y as usize, x as usize, c)).clamp(0.0, 1.0);
                        (v * 255.0).round() as u8
                    };
                    Rgb([px(0), px(1), px(2)])
                });
            buf.save(path)?;
        }
        c => {
            return Err(HarnessError::Image(format!(
                "PNG output supports 1 or 3 channels, image has {c}"
            )))
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray16_round_trip_is_lossless_at_16_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.png");
        let mut img = Image32::new(4, 5, 1, ValueRange::Unit);
        for y in 0..4 {
            for x in 0..5 {
                img.set(y, x, 0, ((y * 5 + x) as f32 * 1000.0) / 65535.0);
            }
        }
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!((back.height, back.width, back.channels), (4, 5, 1));
        assert!(back.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn rgb_round_trip_is_lossless_at_8_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        let mut img = Image32::new(3, 3, 3, ValueRange::Unit);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = ((i * 9) % 256) as f32 / 255.0;
        }
        save_png(&img, &path).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.channels, 3);
        assert!(back.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn metric_images_refuse_png() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image32::new(2, 2, 1, ValueRange::Metric);
        assert!(save_png(&img, &dir.path().join("m.png")).is_err());
    }
}

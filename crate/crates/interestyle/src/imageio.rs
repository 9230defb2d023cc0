//! 8-bit PNG storage for images (RGB) and masks (grayscale, 0 or 255).

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};
use interestyle_core::{ImageBuffer, RegionMask};

use crate::error::{format_err, Error, Result};
use crate::fsutil::{atomic_write, read};

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode_png(img: image::DynamicImage, path: &Path) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(out.into_inner())
}

/// PNG bytes of an RGB image; values are clamped to `[0, 1]` and rounded.
pub fn image_png_bytes(img: &ImageBuffer, path: &Path) -> Result<Vec<u8>> {
    let (c, h, w) = img.shape();
    if c != 3 {
        return Err(format_err(path, format!("expected 3 channels, got {c}")));
    }
    let mut rgb = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [0, 1, 2].map(|ch| quantize(img.get(ch, y, x)));
            rgb.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    encode_png(rgb.into(), path)
}

pub fn mask_png_bytes(mask: &RegionMask, path: &Path) -> Result<Vec<u8>> {
    let (h, w) = (mask.height(), mask.width());
    let raw = mask.data().iter().map(|&v| quantize(v)).collect();
    let gray = GrayImage::from_raw(w as u32, h as u32, raw).expect("buffer size matches");
    encode_png(gray.into(), path)
}

pub fn save_image(img: &ImageBuffer, path: &Path) -> Result<()> {
    atomic_write(path, &image_png_bytes(img, path)?)
}

pub fn save_mask(mask: &RegionMask, path: &Path) -> Result<()> {
    atomic_write(path, &mask_png_bytes(mask, path)?)
}

fn decode(path: &Path) -> Result<image::DynamicImage> {
    image::load_from_memory_with_format(&read(path)?, ImageFormat::Png).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let rgb = decode(path)?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut img = ImageBuffer::zeros(3, h, w);
    for (x, y, p) in rgb.enumerate_pixels() {
        for ch in 0..3 {
            img.set(ch, y as usize, x as usize, p.0[ch] as f64 / 255.0);
        }
    }
    Ok(img)
}

pub fn load_mask(path: &Path) -> Result<RegionMask> {
    let gray = decode(path)?.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let data = gray.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
    Ok(RegionMask::from_vec(h, w, data)?)
}

/// Side-by-side strip of equally sized images.
pub fn hstack(images: &[&ImageBuffer]) -> Result<ImageBuffer> {
    let first = images.first().ok_or_else(|| Error::Invalid("nothing to stack".into()))?;
    let (c, h, w) = first.shape();
    let mut out = ImageBuffer::zeros(c, h, w * images.len());
    for (k, img) in images.iter().enumerate() {
        if img.shape() != (c, h, w) {
            return Err(Error::Invalid("stacked images differ in shape".into()));
        }
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out.set(ch, y, k * w + x, img.get(ch, y, x));
                }
            }
        }
    }
    Ok(out)
}

//! Image ingestion (binary PGM and PNG) and PGM output.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::DynamicImage;

use crate::error::Result;
use crate::imgproc::GrayImage;

/// ITU-R BT.601 luma weights.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Loads an 8-bit PGM (P5) or PNG file as normalised luminance. Colour inputs
/// are reduced with the BT.601 weights.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_gray(&bytes)
}

pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    let img = image::load_from_memory(bytes)?;
    to_gray(&img)
}

fn to_gray(img: &DynamicImage) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => GrayImage::from_u8(w, h, buf.as_raw()),
        DynamicImage::ImageLumaA8(buf) => {
            let luma: Vec<u8> = buf.pixels().map(|p| p.0[0]).collect();
            GrayImage::from_u8(w, h, &luma)
        }
        DynamicImage::ImageLuma16(buf) => GrayImage::new(
            w,
            h,
            buf.as_raw().iter().map(|&v| f64::from(v) / 65535.0).collect(),
        ),
        other => {
            let rgb = other.to_rgb8();
            let samples = rgb
                .pixels()
                .map(|p| {
                    (LUMA[0] * f64::from(p.0[0]) + LUMA[1] * f64::from(p.0[1]) + LUMA[2] * f64::from(p.0[2]))
                        / 255.0
                })
                .collect();
            GrayImage::new(w, h, samples)
        }
    }
}

/// Quantises to 8 bits (clamping to `[0, 1]`) and writes a binary PGM.
pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let mut out = fs::File::create(path)?;
    out.write_all(&encode_pgm(img))?;
    Ok(())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut buf = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    buf.extend(
        img.samples()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    buf
}

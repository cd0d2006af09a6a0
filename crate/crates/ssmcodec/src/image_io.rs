//! 8-bit RGB images on disk as `[H, W, 3]` tensors in `[0, 1]`.

use std::io::Cursor;
use std::path::Path;

use clap::ValueEnum;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ImageEncoder, ImageFormat, RgbImage};
use ssmcodec_core::Tensor;

use crate::error::{CodecError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Png,
    Ppm,
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "png" => Some(Format::Png),
            "ppm" | "pnm" => Some(Format::Ppm),
            _ => None,
        }
    }
}

pub fn rgb_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    Tensor::new([h as usize, w as usize, 3], data).expect("RGB buffer matches its dimensions")
}

/// Rounds `[0, 1]` samples to 8 bits (values outside are clamped).
pub fn tensor_to_rgb(t: &Tensor) -> Result<RgbImage> {
    let (h, w, c) = t.dims3("tensor_to_rgb")?;
    if c != 3 {
        return Err(CodecError::format("image", format!("expected 3 channels, got {c}")));
    }
    let raw = t
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    Ok(RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer matches dimensions"))
}

pub fn load(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(CodecError::io(path))?;
    decode_bytes(&bytes).map_err(|source| CodecError::Image {
        path: path.to_owned(),
        source,
    })
}

pub fn decode_bytes(bytes: &[u8]) -> std::result::Result<Tensor, image::ImageError> {
    let img = image::load_from_memory(bytes)?.to_rgb8();
    Ok(rgb_to_tensor(&img))
}

pub fn encode_bytes(img: &RgbImage, format: Format) -> std::result::Result<Vec<u8>, image::ImageError> {
    let mut out = Vec::new();
    match format {
        Format::Png => img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)?,
        Format::Ppm => PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)?,
    }
    Ok(out)
}

pub fn save(path: &Path, t: &Tensor, format: Format) -> Result<()> {
    let img = tensor_to_rgb(t)?;
    let bytes = encode_bytes(&img, format).map_err(|source| CodecError::Image {
        path: path.to_owned(),
        source,
    })?;
    std::fs::write(path, bytes).map_err(CodecError::io(path))
}

/// Binary 8-bit PGM of `[0, 1]` values, row-major.
pub fn save_pgm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    std::fs::write(path, out).map_err(CodecError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_round_trip_both_formats() {
        let t = Tensor::from_fn([5, 7, 3], |i| ((i * 37) % 256) as f32 / 255.0);
        let img = tensor_to_rgb(&t).unwrap();
        for f in [Format::Png, Format::Ppm] {
            let bytes = encode_bytes(&img, f).unwrap();
            assert_eq!(decode_bytes(&bytes).unwrap(), t);
        }
        let ppm = encode_bytes(&img, Format::Ppm).unwrap();
        assert!(ppm.starts_with(b"P6"));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(Format::from_path(Path::new("a.PNG")), Some(Format::Png));
        assert_eq!(Format::from_path(Path::new("a.ppm")), Some(Format::Ppm));
        assert_eq!(Format::from_path(Path::new("a.jpg")), None);
    }
}

//! Raw image/sinogram files and PNG export.
//!
//! A raw image `name` is stored as `name.img.json` (header) plus
//! `name.img.bin` (little-endian `f64` payload, row-major). Sinograms use
//! `name.sino.json` / `name.sino.bin`, one row of bins per angle.

use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use tomo_core::error::{Error, Result};
use tomo_core::image::{Image, Sinogram};

#[derive(Serialize, Deserialize)]
struct ImageHeader {
    width: usize,
    height: usize,
    dtype: String,
}

#[derive(Serialize, Deserialize)]
struct SinogramHeader {
    angles: Vec<f64>,
    detector_count: usize,
    dtype: String,
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let s = base.to_string_lossy();
    let stem = s
        .strip_suffix(".img.json")
        .or_else(|| s.strip_suffix(".img.bin"))
        .or_else(|| s.strip_suffix(".sino.json"))
        .or_else(|| s.strip_suffix(".sino.bin"))
        .unwrap_or(&s);
    PathBuf::from(format!("{stem}{suffix}"))
}

fn encode_f64(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn decode_f64(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<f64>> {
    if bytes.len()
        != expected
            .checked_mul(8)
            .ok_or_else(|| Error::malformed(path, "size overflow"))?
    {
        return Err(Error::malformed(
            path,
            format!(
                "payload has {} bytes, header implies {}",
                bytes.len(),
                expected * 8
            ),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Writes `base.img.json` and `base.img.bin`.
pub fn write_image_raw(img: &Image, base: &Path) -> Result<()> {
    let header = ImageHeader {
        width: img.width(),
        height: img.height(),
        dtype: "f64".into(),
    };
    std::fs::write(
        with_suffix(base, ".img.json"),
        serde_json::to_vec_pretty(&header)?,
    )?;
    std::fs::write(with_suffix(base, ".img.bin"), encode_f64(img.pixels()))?;
    Ok(())
}

pub fn read_image_raw(base: &Path) -> Result<Image> {
    let hpath = with_suffix(base, ".img.json");
    let header: ImageHeader = serde_json::from_slice(&std::fs::read(&hpath)?)
        .map_err(|e| Error::malformed(&hpath, e.to_string()))?;
    if header.dtype != "f64" {
        return Err(Error::malformed(
            &hpath,
            format!("unsupported dtype {}", header.dtype),
        ));
    }
    let n = header
        .width
        .checked_mul(header.height)
        .ok_or_else(|| Error::malformed(&hpath, "dimension overflow"))?;
    let bpath = with_suffix(base, ".img.bin");
    let pixels = decode_f64(&bpath, &std::fs::read(&bpath)?, n)?;
    Image::new(header.width, header.height, pixels)
}

pub fn write_sinogram_raw(p: &Sinogram, base: &Path) -> Result<()> {
    let header = SinogramHeader {
        angles: p.angles().to_vec(),
        detector_count: p.detector_count(),
        dtype: "f64".into(),
    };
    std::fs::write(
        with_suffix(base, ".sino.json"),
        serde_json::to_vec_pretty(&header)?,
    )?;
    std::fs::write(with_suffix(base, ".sino.bin"), encode_f64(p.values()))?;
    Ok(())
}

pub fn read_sinogram_raw(base: &Path) -> Result<Sinogram> {
    let hpath = with_suffix(base, ".sino.json");
    let header: SinogramHeader = serde_json::from_slice(&std::fs::read(&hpath)?)
        .map_err(|e| Error::malformed(&hpath, e.to_string()))?;
    if header.dtype != "f64" {
        return Err(Error::malformed(
            &hpath,
            format!("unsupported dtype {}", header.dtype),
        ));
    }
    let m = header
        .angles
        .len()
        .checked_mul(header.detector_count)
        .ok_or_else(|| Error::malformed(&hpath, "dimension overflow"))?;
    let bpath = with_suffix(base, ".sino.bin");
    let values = decode_f64(&bpath, &std::fs::read(&bpath)?, m)?;
    Sinogram::new(header.angles, header.detector_count, values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Grayscale PNG with the image maximum mapped to the top of the bit range.
pub fn export_png(img: &Image, path: &Path, depth: BitDepth) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let max = img.max();
    let scale = |v: f64, top: f64| {
        if max > 0.0 {
            (v / max * top).round()
        } else {
            0.0
        }
    };
    match depth {
        BitDepth::Eight => {
            let buf: Vec<u8> = img
                .pixels()
                .iter()
                .map(|&v| scale(v, 255.0) as u8)
                .collect();
            let out = GrayImage::from_raw(w, h, buf).expect("buffer matches dimensions");
            out.save(path).map_err(|e| Error::Png(e.to_string()))?;
        }
        BitDepth::Sixteen => {
            let buf: Vec<u16> = img
                .pixels()
                .iter()
                .map(|&v| scale(v, 65535.0) as u16)
                .collect();
            let out: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(w, h, buf).expect("buffer matches dimensions");
            out.save(path).map_err(|e| Error::Png(e.to_string()))?;
        }
    }
    Ok(())
}

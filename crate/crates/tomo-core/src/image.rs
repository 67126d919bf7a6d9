use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major grid of nonnegative intensities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::InvalidArgument("image dimensions overflow".into()))?;
        if pixels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} image needs {n} pixels, got {}",
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "pixel values must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from solver output, clamping tiny negatives to zero.
    pub fn from_clamped(width: usize, height: usize, mut pixels: Vec<f64>) -> Result<Self> {
        for v in &mut pixels {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Image::new(width, height, pixels)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(value >= 0.0);
        Image {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(value >= 0.0 && value.is_finite());
        self.pixels[row * self.width + col] = value;
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(0.0, f64::max)
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Copies the `rows x cols` block whose top-left corner is `(row, col)`.
    pub fn window(&self, row: usize, col: usize, rows: usize, cols: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows * cols);
        for r in row..row + rows {
            out.extend_from_slice(&self.pixels[r * self.width + col..r * self.width + col + cols]);
        }
        out
    }
}

/// Projection data: one row of detector bins per angle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sinogram {
    angles: Vec<f64>,
    detector_count: usize,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn new(angles: Vec<f64>, detector_count: usize, values: Vec<f64>) -> Result<Self> {
        let m = angles
            .len()
            .checked_mul(detector_count)
            .ok_or_else(|| Error::InvalidArgument("sinogram dimensions overflow".into()))?;
        if values.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} angles x {detector_count} bins needs {m} values, got {}",
                angles.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sinogram values must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Sinogram {
            angles,
            detector_count,
            values,
        })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn detector_count(&self) -> usize {
        self.detector_count
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, angle_index: usize) -> &[f64] {
        let d = self.detector_count;
        &self.values[angle_index * d..(angle_index + 1) * d]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Expected intensity of the single homogeneous material.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    omega: f64,
}

impl MaterialParams {
    pub fn new(omega: f64) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "material intensity must be positive, got {omega}"
            )));
        }
        Ok(MaterialParams { omega })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams { omega: 255.0 }
    }
}

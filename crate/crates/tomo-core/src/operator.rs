//! Sparse linear operator mapping images to sinograms.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::image::{Image, Sinogram};
use crate::sparse::CsrMatrix;

/// Discretized Radon transform with strictly positive stored weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    matrix: CsrMatrix,
    angles: Vec<f64>,
    detector_count: usize,
    image_width: usize,
    image_height: usize,
}

impl SparseOperator {
    pub fn new(
        matrix: CsrMatrix,
        angles: Vec<f64>,
        detector_count: usize,
        image_width: usize,
        image_height: usize,
    ) -> Result<Self> {
        if matrix.rows() != angles.len() * detector_count {
            return Err(Error::DimensionMismatch(format!(
                "{} rows for {} angles x {detector_count} bins",
                matrix.rows(),
                angles.len()
            )));
        }
        if matrix.cols() != image_width * image_height {
            return Err(Error::DimensionMismatch(format!(
                "{} columns for a {image_width}x{image_height} image",
                matrix.cols()
            )));
        }
        if let Some((r, c, w)) = matrix.triples().find(|t| !(t.2 > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "operator weight ({r}, {c}) = {w} is not positive"
            )));
        }
        Ok(SparseOperator {
            matrix,
            angles,
            detector_count,
            image_width,
            image_height,
        })
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn detector_count(&self) -> usize {
        self.detector_count
    }

    pub fn image_width(&self) -> usize {
        self.image_width
    }

    pub fn image_height(&self) -> usize {
        self.image_height
    }

    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.matrix.triples()
    }

    /// `p = R f`
    pub fn forward(&self, f: &Image, exec: Exec) -> Result<Sinogram> {
        if f.width() != self.image_width || f.height() != self.image_height {
            return Err(Error::DimensionMismatch(format!(
                "operator expects a {}x{} image, got {}x{}",
                self.image_width,
                self.image_height,
                f.width(),
                f.height()
            )));
        }
        let values = self.matrix.mul(f.pixels(), exec);
        Sinogram::new(self.angles.clone(), self.detector_count, values)
    }

    /// `Rᵀ p`
    pub fn back(&self, p: &Sinogram, exec: Exec) -> Result<Image> {
        if p.len() != self.rows() {
            return Err(Error::DimensionMismatch(format!(
                "operator has {} rays, sinogram has {} values",
                self.rows(),
                p.len()
            )));
        }
        let values = self.matrix.mul_t(p.values(), exec);
        Image::new(self.image_width, self.image_height, values)
    }

    /// Keeps the rays of the listed angle indices, in order.
    pub fn restrict_angles(&self, angle_indices: &[usize]) -> Self {
        let d = self.detector_count;
        let rows: Vec<usize> = angle_indices
            .iter()
            .flat_map(|&a| a * d..(a + 1) * d)
            .collect();
        SparseOperator {
            matrix: self.matrix.select_rows(&rows),
            angles: angle_indices.iter().map(|&a| self.angles[a]).collect(),
            detector_count: d,
            image_width: self.image_width,
            image_height: self.image_height,
        }
    }
}

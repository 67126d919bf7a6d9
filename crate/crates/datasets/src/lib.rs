//! Synthetic data: phantoms, shot noise, angle subsampling and file I/O.

mod io;
mod noise;
mod phantom;

pub use io::{
    export_png, read_image_raw, read_sinogram_raw, write_image_raw, write_sinogram_raw, BitDepth,
};
pub use noise::{apply_poisson_noise, NoiseSpec};
pub use phantom::{generate_phantom, Circle, PhantomSpec};

use tomo_core::error::{Error, Result};
use tomo_core::image::Sinogram;
use projector::ProjectionGeometry;

const ANGLE_MATCH_TOL: f64 = 1e-9;

/// Indices into `full_angles` of each target angle, in target order.
pub fn angle_indices(full_angles: &[f64], target: &[f64]) -> Result<Vec<usize>> {
    target
        .iter()
        .map(|&a| {
            full_angles
                .iter()
                .position(|&b| (a - b).abs() <= ANGLE_MATCH_TOL)
                .ok_or(Error::MissingAngle(a))
        })
        .collect()
}

/// Keeps the rows of `full` whose angles appear in `target`.
pub fn subsample_angles(full: &Sinogram, target: &ProjectionGeometry) -> Result<Sinogram> {
    if target.detector_count() != full.detector_count() {
        return Err(Error::DimensionMismatch(format!(
            "target has {} bins, source has {}",
            target.detector_count(),
            full.detector_count()
        )));
    }
    let idx = angle_indices(full.angles(), target.angles_deg())?;
    let mut values = Vec::with_capacity(idx.len() * full.detector_count());
    for &i in &idx {
        values.extend_from_slice(full.row(i));
    }
    Sinogram::new(target.angles_deg().to_vec(), full.detector_count(), values)
}

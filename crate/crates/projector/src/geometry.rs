use serde::{Deserialize, Serialize};

use tomo_core::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionGeometry {
    angles_deg: Vec<f64>,
    detector_count: usize,
    detector_spacing: f64,
    image_side: usize,
}

impl ProjectionGeometry {
    pub fn new(
        angles_deg: Vec<f64>,
        detector_count: usize,
        detector_spacing: f64,
        image_side: usize,
    ) -> Result<Self> {
        if angles_deg.is_empty() {
            return Err(Error::InvalidGeometry("no projection angles".into()));
        }
        if image_side == 0 {
            return Err(Error::InvalidGeometry("image side must be positive".into()));
        }
        if angles_deg.iter().any(|a| !(0.0..180.0).contains(a)) {
            return Err(Error::InvalidGeometry("angles must lie in [0, 180)".into()));
        }
        if angles_deg.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGeometry(
                "angles must be strictly increasing".into(),
            ));
        }
        if !(detector_spacing > 0.0) {
            return Err(Error::InvalidGeometry(
                "detector spacing must be positive".into(),
            ));
        }
        let diagonal = std::f64::consts::SQRT_2 * image_side as f64;
        if (detector_count as f64) * detector_spacing < diagonal - 1e-9 {
            return Err(Error::InvalidGeometry(format!(
                "{detector_count} bins of width {detector_spacing} do not cover the image diagonal {diagonal:.3}"
            )));
        }
        Ok(ProjectionGeometry {
            angles_deg,
            detector_count,
            detector_spacing,
            image_side,
        })
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn detector_count(&self) -> usize {
        self.detector_count
    }

    pub fn detector_spacing(&self) -> f64 {
        self.detector_spacing
    }

    pub fn image_side(&self) -> usize {
        self.image_side
    }

    pub fn ray_count(&self) -> usize {
        self.angles_deg.len() * self.detector_count
    }

    /// Signed offset of a bin center from the rotation axis, in pixels.
    pub fn bin_center(&self, bin: usize) -> f64 {
        (bin as f64 - (self.detector_count as f64 - 1.0) / 2.0) * self.detector_spacing
    }
}

/// Unit-spaced detector wide enough for the image diagonal. The count has
/// the parity of `side` so that axis-aligned rays pass through pixel
/// centers rather than along pixel edges.
pub fn default_detector_count(side: usize) -> usize {
    let mut d = (std::f64::consts::SQRT_2 * side as f64).ceil() as usize;
    if d % 2 != side % 2 {
        d += 1;
    }
    d
}

/// Equidistant angles. Without a missing wedge the angles start at 0° with
/// spacing `180 / n_angles`; with a wedge of `w` degrees they run from
/// `w/2` to `180 - w/2`, both ends included.
pub fn build_geometry(
    n_angles: usize,
    missing_wedge_deg: f64,
    image_side: usize,
) -> Result<ProjectionGeometry> {
    if n_angles == 0 {
        return Err(Error::InvalidGeometry(
            "at least one angle is required".into(),
        ));
    }
    if !(0.0..180.0).contains(&missing_wedge_deg) {
        return Err(Error::InvalidGeometry(format!(
            "missing wedge must lie in [0, 180), got {missing_wedge_deg}"
        )));
    }
    let angles = if missing_wedge_deg == 0.0 {
        (0..n_angles)
            .map(|k| k as f64 * 180.0 / n_angles as f64)
            .collect()
    } else {
        let start = missing_wedge_deg / 2.0;
        let end = 180.0 - missing_wedge_deg / 2.0;
        if n_angles == 1 {
            vec![start]
        } else {
            let step = (end - start) / (n_angles - 1) as f64;
            (0..n_angles).map(|k| start + k as f64 * step).collect()
        }
    };
    ProjectionGeometry::new(angles, default_detector_count(image_side), 1.0, image_side)
}

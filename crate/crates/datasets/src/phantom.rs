use serde::{Deserialize, Serialize};

use tomo_core::error::{Error, Result};
use tomo_core::image::Image;

/// Circle in image-fraction coordinates (`x` along columns, `y` along rows).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

/// Ellipse with two circular holes. All lengths are fractions of `side`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub side: usize,
    pub ellipse_center: (f64, f64),
    pub ellipse_semi_axes: (f64, f64),
    pub holes: [Circle; 2],
    pub material_value: f64,
}

impl PhantomSpec {
    pub fn with_side(side: usize) -> Self {
        PhantomSpec {
            side,
            ellipse_center: (0.5, 0.5),
            ellipse_semi_axes: (0.35, 0.25),
            holes: [
                Circle {
                    cx: 0.38,
                    cy: 0.46,
                    radius: 0.06,
                },
                Circle {
                    cx: 0.62,
                    cy: 0.55,
                    radius: 0.06,
                },
            ],
            material_value: 255.0,
        }
    }

    fn in_ellipse(&self, x: f64, y: f64) -> bool {
        let (cx, cy) = self.ellipse_center;
        let (a, b) = self.ellipse_semi_axes;
        ((x - cx) / a).powi(2) + ((y - cy) / b).powi(2) <= 1.0
    }

    /// Material membership of a point given in image fractions.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.in_ellipse(x, y)
            && self
                .holes
                .iter()
                .all(|h| (x - h.cx).powi(2) + (y - h.cy).powi(2) > h.radius * h.radius)
    }

    pub fn validate(&self) -> Result<()> {
        if self.side == 0 {
            return Err(Error::InvalidArgument(
                "phantom side must be positive".into(),
            ));
        }
        if !(self.material_value > 0.0) {
            return Err(Error::InvalidArgument(
                "material value must be positive".into(),
            ));
        }
        let (a, b) = self.ellipse_semi_axes;
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidArgument(
                "ellipse semi-axes must be positive".into(),
            ));
        }
        for h in &self.holes {
            if !(h.radius > 0.0) {
                return Err(Error::InvalidArgument(
                    "hole radius must be positive".into(),
                ));
            }
            // every point of the hole boundary must be strictly inside the ellipse
            let (cx, cy) = self.ellipse_center;
            let inside = (0..720).all(|k| {
                let t = k as f64 * std::f64::consts::PI / 360.0;
                let (x, y) = (h.cx + h.radius * t.cos(), h.cy + h.radius * t.sin());
                ((x - cx) / a).powi(2) + ((y - cy) / b).powi(2) < 1.0
            });
            if !inside {
                return Err(Error::InvalidArgument(format!(
                    "hole at ({}, {}) is not strictly inside the ellipse",
                    h.cx, h.cy
                )));
            }
        }
        Ok(())
    }
}

/// Binary phantom: `material_value` at pixel centers inside the ellipse and
/// outside both holes, zero elsewhere.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Image> {
    spec.validate()?;
    let n = spec.side;
    let mut px = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let x = (col as f64 + 0.5) / n as f64;
            let y = (row as f64 + 0.5) / n as f64;
            px.push(if spec.contains(x, y) {
                spec.material_value
            } else {
                0.0
            });
        }
    }
    Image::new(n, n, px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tomo_core::metrics::{bms, mc};

    #[test]
    fn center_is_material_and_corner_is_void() {
        let spec = PhantomSpec::with_side(64);
        let img = generate_phantom(&spec).unwrap();
        assert_eq!(img.get(32, 32), 255.0);
        assert_eq!(img.get(0, 0), 0.0);
        assert_eq!(img.get(63, 63), 0.0);
    }

    #[test]
    fn holes_are_empty() {
        let spec = PhantomSpec::with_side(64);
        let img = generate_phantom(&spec).unwrap();
        for h in &spec.holes {
            let row = (h.cy * 64.0) as usize;
            let col = (h.cx * 64.0) as usize;
            assert_eq!(img.get(row, col), 0.0);
        }
    }

    #[test]
    fn material_count_matches_membership_oracle() {
        for side in [16, 37, 64] {
            let spec = PhantomSpec::with_side(side);
            let img = generate_phantom(&spec).unwrap();
            // independent membership test written out longhand
            let s = side as f64;
            let mut count = 0;
            for r in 0..side {
                for c in 0..side {
                    let (x, y) = ((c as f64 + 0.5) / s, (r as f64 + 0.5) / s);
                    let e = (x - 0.5) * (x - 0.5) / (0.35 * 0.35)
                        + (y - 0.5) * (y - 0.5) / (0.25 * 0.25);
                    let h1 = (x - 0.38).powi(2) + (y - 0.46).powi(2) <= 0.0036;
                    let h2 = (x - 0.62).powi(2) + (y - 0.55).powi(2) <= 0.0036;
                    if e <= 1.0 && !h1 && !h2 {
                        count += 1;
                    }
                }
            }
            assert_eq!(mc(&img), count);
        }
    }

    #[test]
    fn phantom_is_two_valued() {
        let mut spec = PhantomSpec::with_side(48);
        spec.material_value = 3.5;
        let img = generate_phantom(&spec).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 0.0 || v == 3.5));
        assert_eq!(bms(&img, 10.0).unwrap(), 1.0);
    }

    #[test]
    fn rejects_hole_outside_ellipse() {
        let mut spec = PhantomSpec::with_side(32);
        spec.holes[0].cx = 0.83;
        assert!(generate_phantom(&spec).is_err());
        let mut spec = PhantomSpec::with_side(32);
        spec.material_value = 0.0;
        assert!(generate_phantom(&spec).is_err());
    }
}

//! The 9-9-9-1 ReLU network that approximates the Sobel edge response of a
//! 3×3 subregion, its training data and its serialized form.

mod corpus;
mod net;
mod train;

pub use corpus::{synthetic_corpus, CorpusSpec};
pub use net::{EdgeNet, Layer};
pub use train::{train_edge_net, TrainConfig, TrainReport};

use tomo_core::error::{Error, Result};
use tomo_core::image::Image;

/// Horizontal Sobel kernel.
pub const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
/// Vertical Sobel kernel.
pub const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// A 3×3 window of pixel values in `[0, ω]`, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Subregion([f64; 9]);

impl Subregion {
    pub fn new(values: [f64; 9], omega: f64) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && **v <= omega)) {
            return Err(Error::InvalidArgument(format!(
                "subregion value {v} outside [0, {omega}]"
            )));
        }
        Ok(Subregion(values))
    }

    pub fn values(&self) -> &[f64; 9] {
        &self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[row * 3 + col]
    }
}

/// `(k ∗ f)` at the centre of a 3×3 window: `Σ_{k,l} f[1−k, 1−l]·g[k, l]`
/// with kernel offsets `k, l ∈ {−1, 0, 1}`.
fn convolve_center(f: &[f64; 9], g: &[[f64; 3]; 3]) -> f64 {
    let mut s = 0.0;
    for (gi, grow) in g.iter().enumerate() {
        for (gj, &w) in grow.iter().enumerate() {
            // offsets k = gi − 1, l = gj − 1; sample at (1 − k, 1 − l)
            s += f[(2 - gi) * 3 + (2 - gj)] * w;
        }
    }
    s
}

/// Sobel gradient magnitude at the window centre.
pub fn sobel(a: &Subregion) -> f64 {
    let gx = convolve_center(&a.0, &SOBEL_X);
    let gy = convolve_center(&a.0, &SOBEL_Y);
    (gx * gx + gy * gy).sqrt()
}

/// Input/target pairs for the edge network.
#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub omega: f64,
    pub inputs: Vec<Subregion>,
    pub targets: Vec<f64>,
    /// Divisor applied to the raw Sobel values (1 when not normalized).
    pub normalization: f64,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// One sample per interior pixel of `img` after rescaling it to `[0, ω]`.
/// With `normalize`, targets are divided by their maximum.
pub fn build_training_set(img: &Image, omega: f64, normalize: bool) -> Result<TrainingSet> {
    build_training_set_multi(std::slice::from_ref(img), omega, normalize)
}

/// [`build_training_set`] over several images sharing one normalization.
pub fn build_training_set_multi(
    images: &[Image],
    omega: f64,
    normalize: bool,
) -> Result<TrainingSet> {
    if !(omega > 0.0) {
        return Err(Error::InvalidArgument(format!("omega = {omega}")));
    }
    let mut set = TrainingSet {
        omega,
        normalization: 1.0,
        ..Default::default()
    };
    for img in images {
        let (w, h) = (img.width(), img.height());
        if w < 3 || h < 3 {
            return Err(Error::InvalidArgument(format!(
                "training image is {w}x{h}, needs at least 3x3"
            )));
        }
        let max = img.max();
        let scale = if max > 0.0 { omega / max } else { 0.0 };
        for r in 1..h - 1 {
            for c in 1..w - 1 {
                let mut v = [0.0; 9];
                for dr in 0..3 {
                    for dc in 0..3 {
                        v[dr * 3 + dc] = (img.get(r + dr - 1, c + dc - 1) * scale).min(omega);
                    }
                }
                let a = Subregion(v);
                set.targets.push(sobel(&a));
                set.inputs.push(a);
            }
        }
    }
    if normalize {
        let max = set.targets.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            set.normalization = max;
            set.targets.iter_mut().for_each(|t| *t /= max);
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_and_constant() {
        let w = 255.0;
        let step = Subregion::new([0.0, 0.0, w, 0.0, 0.0, w, 0.0, 0.0, w], w).unwrap();
        assert_eq!(sobel(&step), 4.0 * w);
        let flat = Subregion::new([7.0; 9], w).unwrap();
        assert_eq!(sobel(&flat), 0.0);
    }

    #[test]
    fn subregion_domain() {
        assert!(Subregion::new([256.0; 9], 255.0).is_err());
        assert!(Subregion::new([-1.0; 9], 255.0).is_err());
    }

    #[test]
    fn training_set_sizes() {
        let img = Image::filled(3, 3, 5.0);
        assert_eq!(build_training_set(&img, 255.0, true).unwrap().len(), 1);
        let img = Image::filled(7, 5, 5.0);
        let set = build_training_set(&img, 255.0, true).unwrap();
        assert_eq!(set.len(), 5 * 3);
        assert!(set.targets.iter().all(|&t| t == 0.0));
        assert_eq!(set.normalization, 1.0);
        assert!(build_training_set(&Image::zeros(2, 5), 255.0, true).is_err());
    }

    #[test]
    fn normalized_targets_peak_at_one() {
        let mut px = vec![0.0; 25];
        for r in 0..5 {
            for c in 3..5 {
                px[r * 5 + c] = 100.0;
            }
        }
        let set = build_training_set(&Image::new(5, 5, px).unwrap(), 255.0, true).unwrap();
        assert!((set.normalization - 4.0 * 255.0).abs() < 1e-9);
        assert_eq!(set.targets.iter().cloned().fold(0.0, f64::max), 1.0);
    }
}

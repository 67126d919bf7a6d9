use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use tomo_core::error::{Error, Result};
use tomo_core::exec::Exec;
use tomo_core::image::Sinogram;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Expected photon/electron count at the brightest bin.
    pub dose: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { dose: 1e4, seed: 0 }
    }
}

/// Replaces each bin by `Poisson(dose·pᵢ/p_ref)·p_ref/dose`, `p_ref = max p`.
///
/// Bin `i` draws from ChaCha8 stream `i` of the seed, so the result does not
/// depend on how bins are distributed over threads.
pub fn apply_poisson_noise(p: &Sinogram, spec: &NoiseSpec) -> Result<Sinogram> {
    if !(spec.dose > 0.0) || !spec.dose.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "dose must be positive, got {}",
            spec.dose
        )));
    }
    let p_ref = p.max();
    if p_ref == 0.0 {
        return Ok(p.clone());
    }
    let values = p.values();
    let noisy = Exec::Parallel.map(values.len(), |i| {
        let lambda = spec.dose * values[i] / p_ref;
        if lambda <= 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let counts: f64 = Poisson::new(lambda)
            .expect("positive finite rate")
            .sample(&mut rng);
        counts * p_ref / spec.dose
    });
    Sinogram::new(p.angles().to_vec(), p.detector_count(), noisy)
}

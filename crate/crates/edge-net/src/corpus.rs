use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use tomo_core::error::{Error, Result};
use tomo_core::image::Image;

/// Procedural training images: ellipses, oriented steps, gradients and
/// noise textures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub images: usize,
    pub side: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            images: 30,
            side: 32,
            seed: 7,
        }
    }
}

const TOP: f64 = 255.0;

pub fn synthetic_corpus(spec: &CorpusSpec) -> Result<Vec<Image>> {
    if spec.side < 3 || spec.images == 0 {
        return Err(Error::InvalidArgument(format!(
            "corpus needs images >= 1 and side >= 3, got {} x {}",
            spec.images, spec.side
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.images)
        .map(|k| {
            let n = spec.side;
            let px = match k % 5 {
                0 => ellipses(&mut rng, n),
                1 => step(&mut rng, n),
                2 => gradient(&mut rng, n),
                3 => texture(&mut rng, n),
                _ => {
                    let a = ellipses(&mut rng, n);
                    let b = gradient(&mut rng, n);
                    let noise: f64 = rng.random_range(0.0..20.0);
                    a.iter()
                        .zip(&b)
                        .map(|(x, y)| 0.7 * x + 0.3 * y + rng.random_range(-noise..=noise))
                        .collect()
                }
            };
            Image::from_clamped(n, n, px.into_iter().map(|v| v.min(TOP)).collect())
        })
        .collect()
}

fn coords(n: usize) -> impl Iterator<Item = (f64, f64)> {
    (0..n * n).map(move |k| ((k % n) as f64 + 0.5, (k / n) as f64 + 0.5))
}

fn two_levels(rng: &mut ChaCha8Rng) -> (f64, f64) {
    if rng.random_bool(0.5) {
        (0.0, TOP)
    } else {
        (rng.random_range(0.0..TOP), rng.random_range(0.0..TOP))
    }
}

fn ellipses(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let (bg, _) = two_levels(rng);
    let mut px = vec![bg; n * n];
    let count = rng.random_range(1..=4);
    let nf = n as f64;
    for _ in 0..count {
        let (cx, cy) = (rng.random_range(0.0..nf), rng.random_range(0.0..nf));
        let (a, b) = (
            rng.random_range(2.0..nf / 2.0),
            rng.random_range(2.0..nf / 2.0),
        );
        let t: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let v = if rng.random_bool(0.5) {
            TOP
        } else {
            rng.random_range(0.0..TOP)
        };
        for (k, (x, y)) in coords(n).enumerate() {
            let (dx, dy) = (x - cx, y - cy);
            let u = dx * t.cos() + dy * t.sin();
            let w = -dx * t.sin() + dy * t.cos();
            if (u / a).powi(2) + (w / b).powi(2) <= 1.0 {
                px[k] = v;
            }
        }
    }
    px
}

fn step(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let (lo, hi) = two_levels(rng);
    let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let off = rng.random_range(-0.3..0.3) * n as f64;
    let c = n as f64 / 2.0;
    coords(n)
        .map(|(x, y)| {
            if (x - c) * t.cos() + (y - c) * t.sin() > off {
                hi
            } else {
                lo
            }
        })
        .collect()
}

fn gradient(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let slope = rng.random_range(1.0..4.0) * TOP / n as f64;
    let c = n as f64 / 2.0;
    coords(n)
        .map(|(x, y)| TOP / 2.0 + slope * ((x - c) * t.cos() + (y - c) * t.sin()))
        .map(|v| v.clamp(0.0, TOP))
        .collect()
}

fn texture(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let block = rng.random_range(1..=4usize);
    let cells = n.div_ceil(block);
    let vals: Vec<f64> = (0..cells * cells)
        .map(|_| {
            if rng.random_bool(0.5) {
                if rng.random_bool(0.5) {
                    TOP
                } else {
                    0.0
                }
            } else {
                rng.random_range(0.0..TOP)
            }
        })
        .collect();
    (0..n * n)
        .map(|k| vals[(k / n / block) * cells + (k % n) / block])
        .collect()
}

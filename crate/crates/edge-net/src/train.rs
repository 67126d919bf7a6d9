use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::net::{EdgeNet, Layer};
use super::TrainingSet;
use tomo_core::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![9, 9],
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 64,
            epochs: 200,
            seed: 0,
            holdout_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub train_rmse: f64,
    pub holdout_rmse: f64,
    pub holdout_samples: usize,
}

impl TrainReport {
    pub fn loss_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (e, l) in self.epoch_losses.iter().enumerate() {
            s.push_str(&format!("{},{}\n", e + 1, l));
        }
        s
    }
}

/// Mini-batch SGD with momentum on the mean squared error. Inputs are fed
/// as `x/ω`; the returned network has that scaling folded into its first
/// layer so it accepts raw pixel values.
pub fn train_edge_net(set: &TrainingSet, cfg: &TrainConfig) -> Result<(EdgeNet, TrainReport)> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::InvalidArgument(format!(
            "bad training config {cfg:?}"
        )));
    }
    if !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return Err(Error::InvalidArgument(
            "holdout_fraction must be in [0, 1)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let omega = set.omega;
    let xs: Vec<[f64; 9]> = set
        .inputs
        .iter()
        .map(|a| a.values().map(|v| v / omega))
        .collect();

    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut rng);
    let holdout = ((set.len() as f64) * cfg.holdout_fraction) as usize;
    let holdout = holdout.min(set.len() - 1);
    let (held, train_idx) = order.split_at(holdout);
    let held = held.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut sizes = vec![9];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut layers: Vec<Layer> = sizes
        .windows(2)
        .map(|w| {
            let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).unwrap();
            Layer {
                inputs: w[0],
                outputs: w[1],
                weights: (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect(),
                bias: vec![0.01; w[1]],
            }
        })
        .collect();
    let mut vel: Vec<(Vec<f64>, Vec<f64>)> = layers
        .iter()
        .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
        .collect();
    let mut grads = vel.clone();

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            for g in grads.iter_mut() {
                g.0.iter_mut().for_each(|v| *v = 0.0);
                g.1.iter_mut().for_each(|v| *v = 0.0);
            }
            let scale = 2.0 / batch.len() as f64;
            for &i in batch {
                total += backprop(&layers, &xs[i], set.targets[i], scale, &mut grads);
            }
            for ((layer, v), g) in layers.iter_mut().zip(vel.iter_mut()).zip(&grads) {
                for k in 0..layer.weights.len() {
                    v.0[k] = cfg.momentum * v.0[k] - cfg.learning_rate * g.0[k];
                    layer.weights[k] += v.0[k];
                }
                for k in 0..layer.bias.len() {
                    v.1[k] = cfg.momentum * v.1[k] - cfg.learning_rate * g.1[k];
                    layer.bias[k] += v.1[k];
                }
            }
        }
        let loss = total / train_idx.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        epoch_losses.push(loss);
    }

    // fold the 1/ω input scaling into the first layer
    layers[0].weights.iter_mut().for_each(|w| *w /= omega);
    let net = EdgeNet::new(layers, omega, set.normalization)?;
    let rmse = |idx: &[usize]| {
        if idx.is_empty() {
            return 0.0;
        }
        let se: f64 = idx
            .iter()
            .map(|&i| (net.forward(set.inputs[i].values()) - set.targets[i]).powi(2))
            .sum();
        (se / idx.len() as f64).sqrt()
    };
    let report = TrainReport {
        train_rmse: rmse(&train_idx),
        holdout_rmse: rmse(&held),
        holdout_samples: held.len(),
        epoch_losses,
    };
    Ok((net, report))
}

/// Accumulates `scale·(out − t)·∂out/∂θ` into `grads`; returns `(out − t)²`.
fn backprop(
    layers: &[Layer],
    x: &[f64; 9],
    target: f64,
    scale: f64,
    grads: &mut [(Vec<f64>, Vec<f64>)],
) -> f64 {
    let mut acts: Vec<Vec<f64>> = vec![x.to_vec()];
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    for layer in layers {
        let mut z = vec![0.0; layer.outputs];
        layer.pre_activation(acts.last().unwrap(), &mut z);
        acts.push(z.iter().map(|v| v.max(0.0)).collect());
        pre.push(z);
    }
    let err = acts.last().unwrap()[0] - target;
    let mut delta = vec![if pre.last().unwrap()[0] > 0.0 {
        scale * err
    } else {
        0.0
    }];
    for k in (0..layers.len()).rev() {
        let layer = &layers[k];
        let input = &acts[k];
        let g = &mut grads[k];
        for o in 0..layer.outputs {
            if delta[o] == 0.0 {
                continue;
            }
            g.1[o] += delta[o];
            for (i, &a) in input.iter().enumerate() {
                g.0[o * layer.inputs + i] += delta[o] * a;
            }
        }
        if k > 0 {
            delta = (0..layer.inputs)
                .map(|i| {
                    if pre[k - 1][i] <= 0.0 {
                        return 0.0;
                    }
                    (0..layer.outputs)
                        .map(|o| delta[o] * layer.weight(o, i))
                        .sum()
                })
                .collect();
        }
    }
    err * err
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{build_training_set, Subregion};
    use tomo_core::image::Image;

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 0.7).unwrap();
        let sizes = [9, 4, 3, 1];
        let layers: Vec<Layer> = sizes
            .windows(2)
            .map(|w| Layer {
                inputs: w[0],
                outputs: w[1],
                weights: (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect(),
                bias: (0..w[1])
                    .map(|_| 0.3 + normal.sample(&mut rng).abs())
                    .collect(),
            })
            .collect();
        let x = [0.1, 0.9, 0.4, 0.3, 0.7, 0.2, 0.5, 0.8, 0.6];
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
            .collect();
        backprop(&layers, &x, 0.25, 1.0, &mut grads);
        let loss = |ls: &[Layer]| {
            let mut g: Vec<(Vec<f64>, Vec<f64>)> = ls
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect();
            backprop(ls, &x, 0.25, 1.0, &mut g)
        };
        let h = 1e-6;
        for k in 0..layers.len() {
            for w in 0..layers[k].weights.len() {
                let mut a = layers.clone();
                a[k].weights[w] += h;
                let mut b = layers.clone();
                b[k].weights[w] -= h;
                // grads hold err·∂out, half the derivative of err²
                let fd = (loss(&a) - loss(&b)) / (2.0 * h) / 2.0;
                assert!((fd - grads[k].0[w]).abs() < 1e-6, "layer {k} weight {w}");
            }
        }
    }

    #[test]
    fn constant_samples_give_near_zero_output() {
        let set = build_training_set(&Image::filled(12, 12, 80.0), 255.0, true).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            ..Default::default()
        };
        let (net, report) = train_edge_net(&set, &cfg).unwrap();
        assert!(report.epoch_losses.iter().all(|l| l.is_finite()));
        for v in [0.0, 80.0, 255.0] {
            assert!(net.forward(&[v; 9]).abs() <= 1e-2 * 255.0);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let w = 255.0;
        let set = TrainingSet {
            omega: w,
            inputs: vec![Subregion::new([w; 9], w).unwrap(); 64],
            targets: vec![1e200; 64],
            normalization: 1.0,
        };
        let cfg = TrainConfig {
            learning_rate: 0.5,
            epochs: 5,
            ..Default::default()
        };
        assert!(matches!(
            train_edge_net(&set, &cfg),
            Err(Error::Diverged { .. })
        ));
    }
}

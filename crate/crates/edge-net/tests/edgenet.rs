use edge_net::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tomo_core::Image;

const OMEGA: f64 = 255.0;

/// Textbook 2-D convolution `(g ∗ f)(1,1) = Σ_{u,v} g[u][v]·f[2−u][2−v]`.
fn brute_sobel(f: &[f64; 9]) -> f64 {
    let mut gx = 0.0;
    let mut gy = 0.0;
    for u in 0..3 {
        for v in 0..3 {
            let px = f[(2 - u) * 3 + (2 - v)];
            gx += SOBEL_X[u][v] * px;
            gy += SOBEL_Y[u][v] * px;
        }
    }
    (gx * gx + gy * gy).sqrt()
}

fn reference_forward(net: &EdgeNet, x: &[f64]) -> f64 {
    let mut cur = x.to_vec();
    for layer in net.layers() {
        cur = (0..layer.outputs)
            .map(|o| {
                let z = layer.bias[o]
                    + (0..layer.inputs)
                        .map(|i| layer.weights[o * layer.inputs + i] * cur[i])
                        .sum::<f64>();
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            })
            .collect();
    }
    cur[0]
}

fn random_window(rng: &mut ChaCha8Rng) -> [f64; 9] {
    std::array::from_fn(|_| rng.random_range(0.0..=OMEGA))
}

fn trained() -> (EdgeNet, TrainReport) {
    let set = build_training_set_multi(&synthetic_corpus(&CorpusSpec::default()).unwrap(), OMEGA, true)
        .unwrap();
    train_edge_net(&set, &TrainConfig::default()).unwrap()
}

#[test]
fn sobel_trivial_cases() {
    for c in [0.0, 17.0, OMEGA] {
        assert_eq!(sobel(&Subregion::new([c; 9], OMEGA).unwrap()), 0.0);
    }
    let step = [0.0, 0.0, OMEGA, 0.0, 0.0, OMEGA, 0.0, 0.0, OMEGA];
    assert_eq!(sobel(&Subregion::new(step, OMEGA).unwrap()), 4.0 * OMEGA);
}

#[test]
fn sobel_matches_brute_force_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let w = random_window(&mut rng);
        let got = sobel(&Subregion::new(w, OMEGA).unwrap());
        assert!((got - brute_sobel(&w)).abs() <= 1e-12, "{w:?}");
    }
}

#[test]
fn subregion_rejects_out_of_range_values() {
    let mut v = [1.0; 9];
    v[4] = OMEGA + 1.0;
    assert!(Subregion::new(v, OMEGA).is_err());
    v[4] = -0.5;
    assert!(Subregion::new(v, OMEGA).is_err());
    v[4] = f64::NAN;
    assert!(Subregion::new(v, OMEGA).is_err());
}

#[test]
fn training_set_counts() {
    let img = Image::new(3, 3, (0..9).map(f64::from).collect()).unwrap();
    assert_eq!(build_training_set(&img, OMEGA, false).unwrap().len(), 1);
    let img = Image::new(7, 5, (0..35).map(f64::from).collect()).unwrap();
    assert_eq!(build_training_set(&img, OMEGA, true).unwrap().len(), 5 * 3);
    let flat = build_training_set(&Image::filled(6, 6, 40.0), OMEGA, true).unwrap();
    assert!(flat.targets.iter().all(|&t| t == 0.0));
    assert!(build_training_set(&Image::zeros(2, 5), OMEGA, true).is_err());
}

#[test]
fn normalized_targets_peak_at_one() {
    let set = build_training_set_multi(&synthetic_corpus(&CorpusSpec::default()).unwrap(), OMEGA, true)
        .unwrap();
    let max = set.targets.iter().cloned().fold(0.0, f64::max);
    assert_eq!(max, 1.0);
    for (a, t) in set.inputs.iter().zip(&set.targets).take(500) {
        assert!((t * set.normalization - brute_sobel(a.values())).abs() <= 1e-9);
    }
}

#[test]
fn training_reaches_holdout_accuracy_and_is_deterministic() {
    let (net, report) = trained();
    // targets are normalized to a maximum of 1
    assert!(report.holdout_rmse <= 0.05, "held-out RMSE {}", report.holdout_rmse);
    assert!(report.holdout_samples > 0);
    let (again, _) = trained();
    assert_eq!(net.to_json().unwrap(), again.to_json().unwrap());
}

#[test]
fn constant_targets_train_to_zero() {
    let images: Vec<Image> = [0.0, 60.0, 200.0]
        .iter()
        .map(|&c| Image::filled(12, 12, c))
        .collect();
    let set = build_training_set_multi(&images, OMEGA, true).unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        ..TrainConfig::default()
    };
    let (net, _) = train_edge_net(&set, &cfg).unwrap();
    for c in [0.0, 60.0, 128.0, 200.0] {
        assert!(net.forward(&[c; 9]).abs() <= 1e-2 * OMEGA);
    }
}

#[test]
fn trivial_networks() {
    let zero = EdgeNet::zeros(&[9, 9, 9, 1], OMEGA).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        assert_eq!(zero.forward(&random_window(&mut rng)), 0.0);
    }
    let id = || Layer::new(1, 1, vec![1.0], vec![0.0]).unwrap();
    let chain = EdgeNet::new(vec![id(), id(), id()], 10.0, 1.0).unwrap();
    for x in [-3.0, 0.0, 2.5, 10.0] {
        assert_eq!(chain.forward(&[x]), f64::max(0.0, x));
    }
}

#[test]
fn forward_matches_independent_evaluator() {
    let (net, _) = trained();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let x = random_window(&mut rng);
        assert!((net.forward(&x) - reference_forward(&net, &x)).abs() <= 1e-12);
    }
}

#[test]
fn saved_network_round_trips() {
    let (net, _) = trained();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.edgenet.json");
    net.save(&path).unwrap();
    let back = EdgeNet::load(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let x = random_window(&mut rng);
        assert!((net.forward(&x) - back.forward(&x)).abs() <= 1e-12);
    }
    assert_eq!(net.normalization(), back.normalization());
    std::fs::write(&path, "{\"layers\": 3}").unwrap();
    assert!(EdgeNet::load(&path).is_err());
}

#[test]
fn layer_shape_errors() {
    assert!(Layer::new(2, 2, vec![1.0; 3], vec![0.0; 2]).is_err());
    assert!(Layer::new(2, 1, vec![1.0; 2], vec![0.0; 2]).is_err());
    let a = Layer::new(2, 3, vec![1.0; 6], vec![0.0; 3]).unwrap();
    let b = Layer::new(2, 1, vec![1.0; 2], vec![0.0; 1]).unwrap();
    assert!(EdgeNet::new(vec![a, b], OMEGA, 1.0).is_err());
}

proptest! {
    #[test]
    fn sobel_transpose_and_shift_invariance(
        w in prop::array::uniform9(0.0f64..200.0),
        c in 0.0f64..55.0,
    ) {
        let base = sobel(&Subregion::new(w, OMEGA).unwrap());
        let t: [f64; 9] = std::array::from_fn(|k| w[(k % 3) * 3 + k / 3]);
        let shifted = w.map(|v| v + c);
        prop_assert!((sobel(&Subregion::new(t, OMEGA).unwrap()) - base).abs() <= 1e-9);
        prop_assert!((sobel(&Subregion::new(shifted, OMEGA).unwrap()) - base).abs() <= 1e-9);
    }

    #[test]
    fn forward_is_lipschitz(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = [9, 9, 9, 1];
        let layers = sizes
            .windows(2)
            .map(|s| {
                let w = (0..s[0] * s[1]).map(|_| rng.random_range(-0.2..0.2)).collect();
                let b = (0..s[1]).map(|_| rng.random_range(-1.0..1.0)).collect();
                Layer::new(s[0], s[1], w, b).unwrap()
            })
            .collect();
        let net = EdgeNet::new(layers, OMEGA, 1.0).unwrap();
        let l = net.lipschitz_bound();
        for _ in 0..50 {
            let x = random_window(&mut rng);
            let y = random_window(&mut rng);
            let d = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!((net.forward(&x) - net.forward(&y)).abs() <= l * d * (1.0 + 1e-12) + 1e-12);
        }
    }
}

//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use edge_net::{EdgeNet, Layer};

/// Two-phase dense tableau simplex with Bland's rule:
/// `max c·x  s.t.  A x ≤ b,  x ≥ 0`. `None` when infeasible.
pub fn tableau_max(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<(f64, Vec<f64>)> {
    let n = c.len();
    let m = a.len();
    let n_art = b.iter().filter(|v| **v < 0.0).count();
    // columns: x (n), slack (m), artificial (n_art), rhs
    let width = n + m + n_art + 1;
    let mut t = vec![vec![0.0; width]; m];
    let mut basis = vec![0; m];
    let mut art = 0;
    for i in 0..m {
        let sgn = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sgn * a[i][j];
        }
        t[i][n + i] = sgn;
        t[i][width - 1] = sgn * b[i];
        if b[i] < 0.0 {
            t[i][n + m + art] = 1.0;
            basis[i] = n + m + art;
            art += 1;
        } else {
            basis[i] = n + i;
        }
    }
    let eps = 1e-11;
    let pivot = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, r: usize, q: usize| {
        let p = t[r][q];
        for v in t[r].iter_mut() {
            *v /= p;
        }
        for i in 0..t.len() {
            if i != r {
                let f = t[i][q];
                if f != 0.0 {
                    for k in 0..width {
                        t[i][k] -= f * t[r][k];
                    }
                }
            }
        }
        basis[r] = q;
    };
    // maximize `obj` over the allowed columns with Bland's rule
    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, obj: &[f64], allowed: usize| loop {
        let q = (0..allowed).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let red = obj[j] - (0..m).map(|i| obj[basis[i]] * t[i][j]).sum::<f64>();
            red > 1e-10
        });
        let Some(q) = q else { return true };
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..m {
            if t[i][q] > eps {
                let ratio = t[i][width - 1] / t[i][q];
                let better = match best {
                    None => true,
                    Some((r0, _, b0)) => {
                        ratio < r0 - 1e-12 || (ratio <= r0 + 1e-12 && basis[i] < b0)
                    }
                };
                if better {
                    best = Some((ratio, i, basis[i]));
                }
            }
        }
        let Some((_, r, _)) = best else { return false };
        pivot(t, basis, r, q);
    };
    if n_art > 0 {
        let mut obj1 = vec![0.0; width - 1];
        for k in 0..n_art {
            obj1[n + m + k] = -1.0;
        }
        run(&mut t, &mut basis, &obj1, width - 1);
        let infeas: f64 = (0..m)
            .filter(|&i| basis[i] >= n + m)
            .map(|i| t[i][width - 1])
            .sum();
        if infeas > 1e-7 {
            return None;
        }
        for i in 0..m {
            if basis[i] >= n + m {
                if let Some(q) = (0..n + m).find(|&j| t[i][j].abs() > 1e-9) {
                    pivot(&mut t, &mut basis, i, q);
                }
            }
        }
    }
    let mut obj2 = vec![0.0; width - 1];
    obj2[..n].copy_from_slice(c);
    let bounded = run(&mut t, &mut basis, &obj2, n + m);
    assert!(bounded, "oracle LP unbounded");
    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[i][width - 1];
        }
    }
    let val = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Some((val, x))
}

/// Random fully connected ReLU network with inputs on `[0, omega]`.
pub fn random_net(seed: u64, sizes: &[usize], omega: f64) -> EdgeNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = sizes
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let scale = if k == 0 { 1.0 / omega } else { 1.0 };
            let normal = Normal::new(0.0, scale * (2.0 / w[0] as f64).sqrt()).unwrap();
            let weights = (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect();
            let bias = (0..w[1]).map(|_| rng.random_range(-0.5..0.5)).collect();
            Layer::new(w[0], w[1], weights, bias).unwrap()
        })
        .collect();
    EdgeNet::new(layers, omega, 1.0).unwrap()
}

/// Matrix-free forward pass written independently of `EdgeNet::forward`.
pub fn reference_forward(net: &EdgeNet, x: &[f64]) -> f64 {
    let mut cur = x.to_vec();
    for layer in net.layers() {
        let mut next = Vec::new();
        for o in 0..layer.outputs {
            let mut acc = layer.bias[o];
            for i in 0..layer.inputs {
                acc += layer.weights[o * layer.inputs + i] * cur[i];
            }
            next.push(if acc > 0.0 { acc } else { 0.0 });
        }
        cur = next;
    }
    cur[0]
}

/// Maximizes an affine function of the input, built from the affine form
/// `g·x + h` of the network output on each activation pattern, by solving
/// one LP per pattern.
pub fn enumerate_patterns(
    net: &EdgeNet,
    objective: &dyn Fn(&[f64], f64) -> (Vec<f64>, f64),
) -> f64 {
    let n = net.inputs();
    let omega = net.omega();
    let neurons: usize = net.layers().iter().map(|l| l.outputs).sum();
    assert!(neurons <= 16, "too many neurons for enumeration");
    let mut best = f64::NEG_INFINITY;
    for pattern in 0u32..(1 << neurons) {
        // affine map of the current layer values: value = g·x + h
        let mut g: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
        let mut h = vec![0.0; n];
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        let mut bit = 0;
        for layer in net.layers() {
            let mut ng = Vec::new();
            let mut nh = Vec::new();
            for o in 0..layer.outputs {
                let mut pg = vec![0.0; n];
                let mut ph = layer.bias[o];
                for i in 0..layer.inputs {
                    let w = layer.weights[o * layer.inputs + i];
                    for k in 0..n {
                        pg[k] += w * g[i][k];
                    }
                    ph += w * h[i];
                }
                let active = pattern >> bit & 1 == 1;
                bit += 1;
                if active {
                    // −(pg·x + ph) ≤ 0
                    rows.push(pg.iter().map(|v| -v).collect::<Vec<f64>>());
                    rhs.push(ph);
                    ng.push(pg);
                    nh.push(ph);
                } else {
                    rows.push(pg.clone());
                    rhs.push(-ph);
                    ng.push(vec![0.0; n]);
                    nh.push(0.0);
                }
            }
            g = ng;
            h = nh;
        }
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            rows.push(e);
            rhs.push(omega);
        }
        let (c, constant) = objective(&g[0], h[0]);
        if let Some((v, _)) = tableau_max(&c, &rows, &rhs) {
            best = best.max(v + constant);
        }
    }
    best
}

/// `max_{x ∈ [0,ω]ⁿ} net(x)` by pattern enumeration.
pub fn enumerate_max_output(net: &EdgeNet) -> f64 {
    enumerate_patterns(net, &|g, h| (g.to_vec(), h))
}

/// `min_{x ∈ [0,ω]ⁿ} net(x)` by pattern enumeration.
pub fn enumerate_min_output(net: &EdgeNet) -> f64 {
    -enumerate_patterns(net, &|g, h| (g.iter().map(|v| -v).collect(), -h))
}

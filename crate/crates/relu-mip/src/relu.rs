use super::bnb::{solve_mip_with, MipLimits, MipSolution, SolveHints};
use super::model::{MipModel, Sense, VarKind};
use edge_net::EdgeNet;
use tomo_core::error::{Error, Result};

/// Pre-activation interval of every neuron for a given input box.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuronBounds {
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
    pub layers: Vec<Vec<(f64, f64)>>,
}

impl NeuronBounds {
    pub fn output(&self) -> (f64, f64) {
        self.layers.last().unwrap()[0]
    }
}

/// Interval propagation through `W x + b` and the ReLU.
pub fn compute_neuron_bounds(net: &EdgeNet, lower: &[f64], upper: &[f64]) -> Result<NeuronBounds> {
    let n = net.inputs();
    if lower.len() != n || upper.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "input box has {} / {} entries, network takes {n}",
            lower.len(),
            upper.len()
        )));
    }
    if lower
        .iter()
        .zip(upper)
        .any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite())
    {
        return Err(Error::InvalidArgument(
            "input box must be finite with lower <= upper".into(),
        ));
    }
    let mut lo = lower.to_vec();
    let mut hi = upper.to_vec();
    let mut layers = Vec::with_capacity(net.layers().len());
    for layer in net.layers() {
        let mut pre = Vec::with_capacity(layer.outputs);
        for o in 0..layer.outputs {
            let (mut a, mut b) = (layer.bias[o], layer.bias[o]);
            for (i, &w) in layer.row(o).iter().enumerate() {
                if w >= 0.0 {
                    a += w * lo[i];
                    b += w * hi[i];
                } else {
                    a += w * hi[i];
                    b += w * lo[i];
                }
            }
            pre.push((a, b));
        }
        lo = pre.iter().map(|p| p.0.max(0.0)).collect();
        hi = pre.iter().map(|p| p.1.max(0.0)).collect();
        layers.push(pre);
    }
    Ok(NeuronBounds {
        input_lower: lower.to_vec(),
        input_upper: upper.to_vec(),
        layers,
    })
}

/// Model variables of one neuron: output `x`, negative part `s` and
/// activation indicator `z` (the latter two absent for neurons whose sign
/// is fixed by the bounds).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NeuronVars {
    pub x: usize,
    pub s: Option<usize>,
    pub z: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkVars {
    pub inputs: Vec<usize>,
    pub layers: Vec<Vec<NeuronVars>>,
    pub output: usize,
}

impl NetworkVars {
    /// Sets every network variable in `assignment` from a forward pass on
    /// the values already stored at the input variables.
    pub fn fill_forward(&self, net: &EdgeNet, assignment: &mut [f64]) {
        let mut cur: Vec<f64> = self.inputs.iter().map(|&j| assignment[j]).collect();
        for (layer, vars) in net.layers().iter().zip(&self.layers) {
            let mut pre = vec![0.0; layer.outputs];
            layer.pre_activation(&cur, &mut pre);
            for (p, v) in pre.iter().zip(vars) {
                assignment[v.x] = p.max(0.0);
                if let Some(s) = v.s {
                    assignment[s] = (-p).max(0.0);
                }
                if let Some(z) = v.z {
                    assignment[z] = if *p > 0.0 { 1.0 } else { 0.0 };
                }
            }
            cur = pre.iter().map(|p| p.max(0.0)).collect();
        }
    }
}

/// Appends the network constraints to `model`, reading the network input
/// from `inputs`. Each neuron with pre-activation range `[lo, hi]` becomes
///
/// * `hi ≤ 0`: `x = 0`
/// * `lo ≥ 0`: `w·y + b = x`
/// * otherwise `w·y + b = x − s`, `x ≤ hi·z`, `s ≤ −lo·(1 − z)`, `z ∈ {0,1}`
pub fn encode_network_into(
    model: &mut MipModel,
    net: &EdgeNet,
    bounds: &NeuronBounds,
    inputs: &[usize],
    prefix: &str,
) -> NetworkVars {
    assert_eq!(inputs.len(), net.inputs());
    let mut prev: Vec<usize> = inputs.to_vec();
    let mut layers = Vec::with_capacity(net.layers().len());
    for (k, (layer, pre)) in net.layers().iter().zip(&bounds.layers).enumerate() {
        let mut vars = Vec::with_capacity(layer.outputs);
        for o in 0..layer.outputs {
            let (lo, hi) = pre[o];
            let name = |t: &str| format!("{prefix}{t}_{k}_{o}");
            let mut terms: Vec<(usize, f64)> = layer
                .row(o)
                .iter()
                .zip(&prev)
                .filter(|(w, _)| **w != 0.0)
                .map(|(w, &j)| (j, *w))
                .collect();
            let b = layer.bias[o];
            let nv = if hi <= 0.0 {
                let x = model.add_var(name("x"), 0.0, 0.0, VarKind::Continuous);
                NeuronVars {
                    x,
                    s: None,
                    z: None,
                }
            } else if lo >= 0.0 {
                let x = model.add_var(name("x"), lo, hi, VarKind::Continuous);
                terms.push((x, -1.0));
                model.add_row(name("lin"), terms, -b, -b);
                NeuronVars {
                    x,
                    s: None,
                    z: None,
                }
            } else {
                let x = model.add_var(name("x"), 0.0, hi, VarKind::Continuous);
                let s = model.add_var(name("s"), 0.0, -lo, VarKind::Continuous);
                let z = model.add_var(name("z"), 0.0, 1.0, VarKind::Binary);
                terms.push((x, -1.0));
                terms.push((s, 1.0));
                model.add_row(name("lin"), terms, -b, -b);
                model.add_row(name("on"), vec![(x, 1.0), (z, -hi)], f64::NEG_INFINITY, 0.0);
                model.add_row(
                    name("off"),
                    vec![(s, 1.0), (z, -lo)],
                    f64::NEG_INFINITY,
                    -lo,
                );
                NeuronVars {
                    x,
                    s: Some(s),
                    z: Some(z),
                }
            };
            vars.push(nv);
        }
        prev = vars.iter().map(|v| v.x).collect();
        layers.push(vars);
    }
    NetworkVars {
        inputs: inputs.to_vec(),
        output: prev[0],
        layers,
    }
}

/// Network constraints over the input box of `bounds`, with a zero
/// objective in maximization sense.
pub fn encode_network(net: &EdgeNet, bounds: &NeuronBounds) -> (MipModel, NetworkVars) {
    let mut model = MipModel::new(Sense::Maximize);
    let inputs: Vec<usize> = (0..net.inputs())
        .map(|i| {
            model.add_var(
                format!("in_{i}"),
                bounds.input_lower[i],
                bounds.input_upper[i],
                VarKind::Continuous,
            )
        })
        .collect();
    let vars = encode_network_into(&mut model, net, bounds, &inputs, "");
    (model, vars)
}

/// `max_{x ∈ [0, ω]ⁿ} forward(x)` solved to zero gap.
pub fn max_output(net: &EdgeNet) -> Result<f64> {
    Ok(max_output_solution(
        net,
        &MipLimits {
            gap_tol: 0.0,
            ..MipLimits::default()
        },
    )?
    .objective)
}

pub fn max_output_solution(net: &EdgeNet, limits: &MipLimits) -> Result<MipSolution> {
    let n = net.inputs();
    let bounds = compute_neuron_bounds(net, &vec![0.0; n], &vec![net.omega(); n])?;
    let (mut model, vars) = encode_network(net, &bounds);
    model.objective[vars.output] = 1.0;
    let complete = |x: &[f64]| {
        let mut a = x.to_vec();
        vars.fill_forward(net, &mut a);
        Some(a)
    };
    let mut corner = vec![0.0; model.num_vars()];
    for &j in &vars.inputs {
        corner[j] = net.omega();
    }
    vars.fill_forward(net, &mut corner);
    let hints = SolveHints {
        starts: vec![corner],
        completion: Some(&complete),
    };
    solve_mip_with(&model, limits, &hints)
}

use serde::{Deserialize, Serialize};

use super::bnb::{solve_mip_with, MipLimits, MipSolution, SolveHints};
use super::model::{MipModel, QuadTerm, Sense, VarKind};
use super::relu::{compute_neuron_bounds, encode_network_into, NetworkVars};
use edge_net::{EdgeNet, Subregion};
use tomo_core::error::{Error, Result};

/// How the pixel terms `−α Σ(ω − f)f − β Σ(f − f*)²` enter the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// Per-pixel coefficients are merged; with `α = β` the terms are affine.
    #[default]
    Auto,
    /// Deviation and loss terms are kept as separate quadratic entries.
    Quadratic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubregionParams {
    /// Edge threshold `T` on the network's output scale.
    pub threshold: f64,
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub formulation: Formulation,
}

/// The edge-decision MIP of one 3×3 window:
///
/// ```text
/// max  e·y + (1 − e)(T − y) − α Σ(ω − f)f − β Σ(f − f*)²
/// s.t. y = net(f),  f ∈ [0, ω]⁹,  e ∈ {0, 1}
/// ```
///
/// with `e·y` replaced by `w` and its exact product rows for `y ∈ [0, ū]`.
#[derive(Clone, Debug)]
pub struct SubregionMip {
    pub model: MipModel,
    pub pixels: Vec<usize>,
    pub network: NetworkVars,
    pub edge: usize,
    pub product: usize,
    pub params: SubregionParams,
    reference: Option<[f64; 9]>,
}

pub fn build_subregion_mip(
    net: &EdgeNet,
    params: &SubregionParams,
    reference: Option<&Subregion>,
) -> Result<SubregionMip> {
    let SubregionParams {
        threshold: t,
        alpha,
        beta,
        omega,
        formulation,
    } = *params;
    if !(t >= 0.0) || !(alpha >= 0.0) || !(beta >= 0.0) || !(omega > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bad subregion parameters {params:?}"
        )));
    }
    if net.inputs() != 9 {
        return Err(Error::DimensionMismatch(format!(
            "network takes {} inputs, need 9",
            net.inputs()
        )));
    }
    if beta > 0.0 && reference.is_none() {
        return Err(Error::InvalidArgument(
            "beta > 0 needs a reference subregion".into(),
        ));
    }
    let f_star = reference.map(|r| *r.values());

    let bounds = compute_neuron_bounds(net, &[0.0; 9], &[omega; 9])?;
    let mut m = MipModel::new(Sense::Maximize);
    let pixels: Vec<usize> = (0..9)
        .map(|i| m.add_var(format!("f_{i}"), 0.0, omega, VarKind::Continuous))
        .collect();
    let network = encode_network_into(&mut m, net, &bounds, &pixels, "n");
    let y = network.output;
    let hi = m.vars[y].upper;
    let u_bar = match net.max_output() {
        Some(u) => u.min(hi),
        None => hi,
    };
    m.vars[y].upper = m.vars[y].upper.min(u_bar + 1e-9 * u_bar.max(1.0));
    let u_bar = m.vars[y].upper;
    let e = m.add_var("e", 0.0, 1.0, VarKind::Binary);
    let w = m.add_var("w", 0.0, u_bar, VarKind::Continuous);
    m.add_row(
        "w_le_ue",
        vec![(w, 1.0), (e, -u_bar)],
        f64::NEG_INFINITY,
        0.0,
    );
    m.add_row("w_le_y", vec![(w, 1.0), (y, -1.0)], f64::NEG_INFINITY, 0.0);
    m.add_row(
        "w_ge",
        vec![(w, 1.0), (y, -1.0), (e, -u_bar)],
        -u_bar,
        f64::INFINITY,
    );

    // e·y + (1 − e)(T − y) = 2w − y − T·e + T
    m.objective[w] += 2.0;
    m.objective[y] -= 1.0;
    m.objective[e] -= t;
    m.constant += t;

    for (i, &j) in pixels.iter().enumerate() {
        let fs = f_star.map_or(0.0, |f| f[i]);
        match formulation {
            Formulation::Auto => {
                // (α − β)f² + (2βf* − αω)f − βf*²
                let q = alpha - beta;
                if q != 0.0 {
                    m.quad.push(QuadTerm { var: j, coef: q });
                }
                m.objective[j] += 2.0 * beta * fs - alpha * omega;
                m.constant -= beta * fs * fs;
            }
            Formulation::Quadratic => {
                if alpha != 0.0 {
                    m.objective[j] -= alpha * omega;
                    m.quad.push(QuadTerm {
                        var: j,
                        coef: alpha,
                    });
                }
                if beta != 0.0 {
                    m.quad.push(QuadTerm {
                        var: j,
                        coef: -beta,
                    });
                    m.objective[j] += 2.0 * beta * fs;
                    m.constant -= beta * fs * fs;
                }
            }
        }
    }
    Ok(SubregionMip {
        model: m,
        pixels,
        network,
        edge: e,
        product: w,
        params: *params,
        reference: f_star,
    })
}

impl SubregionMip {
    /// Feasible assignment for the given pixel values: forward pass plus the
    /// better edge decision.
    pub fn assignment(&self, net: &EdgeNet, pixels: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; self.model.num_vars()];
        for (&j, &v) in self.pixels.iter().zip(pixels) {
            a[j] = v.clamp(0.0, self.params.omega);
        }
        self.network.fill_forward(net, &mut a);
        let y = a[self.network.output].min(self.model.vars[self.network.output].upper);
        a[self.network.output] = y;
        let e = if 2.0 * y > self.params.threshold {
            1.0
        } else {
            0.0
        };
        a[self.edge] = e;
        a[self.product] = e * y;
        a
    }

    pub fn pixel_values(&self, x: &[f64]) -> [f64; 9] {
        let mut out = [0.0; 9];
        for (o, &j) in out.iter_mut().zip(&self.pixels) {
            *o = x[j];
        }
        out
    }

    /// Objective of the reference subregion itself.
    pub fn reference_objective(&self, net: &EdgeNet) -> Option<f64> {
        self.reference
            .map(|r| self.model.evaluate(&self.assignment(net, &r)))
    }

    /// Branch-and-bound seeded with the reference and the binary-rounded
    /// reference, completing every node relaxation by a forward pass.
    pub fn solve(&self, net: &EdgeNet, limits: &MipLimits) -> Result<MipSolution> {
        let complete = |x: &[f64]| Some(self.assignment(net, &self.pixel_values(x)));
        let mut starts = Vec::new();
        if let Some(r) = self.reference {
            starts.push(self.assignment(net, &r));
            let omega = self.params.omega;
            let snapped: Vec<f64> = r
                .iter()
                .map(|&v| if 2.0 * v >= omega { omega } else { 0.0 })
                .collect();
            starts.push(self.assignment(net, &snapped));
        }
        let hints = SolveHints {
            starts,
            completion: Some(&complete),
        };
        solve_mip_with(&self.model, limits, &hints)
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use tomo_core::error::{Error, Result};

/// Fully connected layer `x ↦ max(0, W x + b)`; `weights` is row-major
/// `outputs × inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::DimensionMismatch(format!(
                "layer {inputs}->{outputs} has {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite layer parameter".into()));
        }
        Ok(Layer {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    pub fn row(&self, out: usize) -> &[f64] {
        &self.weights[out * self.inputs..(out + 1) * self.inputs]
    }

    /// `W x + b`
    pub fn pre_activation(&self, x: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            *slot = self.bias[o] + self.row(o).iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

/// ReLU network with a ReLU on every layer, output included. Inputs are raw
/// pixel values in `[0, ω]`; the output lives on the normalized Sobel scale
/// (raw Sobel divided by `normalization`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeNet {
    layer_sizes: Vec<usize>,
    layers: Vec<Layer>,
    omega: f64,
    normalization: f64,
    #[serde(rename = "u_bar", default, skip_serializing_if = "Option::is_none")]
    max_output: Option<f64>,
}

impl EdgeNet {
    pub fn new(layers: Vec<Layer>, omega: f64, normalization: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::DimensionMismatch(format!(
                    "layer with {} outputs feeds layer with {} inputs",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        if layers.last().unwrap().outputs != 1 {
            return Err(Error::DimensionMismatch(
                "network must have one output".into(),
            ));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidArgument(format!("omega = {omega}")));
        }
        if !(normalization > 0.0 && normalization.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "normalization = {normalization}"
            )));
        }
        let mut layer_sizes = vec![layers[0].inputs];
        layer_sizes.extend(layers.iter().map(|l| l.outputs));
        Ok(EdgeNet {
            layer_sizes,
            layers,
            omega,
            normalization,
            max_output: None,
        })
    }

    /// A network of the given shape with all parameters zero.
    pub fn zeros(sizes: &[usize], omega: f64) -> Result<Self> {
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self::new(layers, omega, 1.0)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Stored `max_{x ∈ [0,ω]ⁿ} forward(x)`, if computed.
    pub fn max_output(&self) -> Option<f64> {
        self.max_output
    }

    pub fn set_max_output(&mut self, u_bar: f64) {
        self.max_output = Some(u_bar);
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.inputs(), "input length");
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut next = vec![0.0; layer.outputs];
            layer.pre_activation(&cur, &mut next);
            next.iter_mut().for_each(|v| *v = v.max(0.0));
            cur = next;
        }
        cur[0]
    }

    /// Pre-activations of every layer for input `x`.
    pub fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut cur = x.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut z = vec![0.0; layer.outputs];
            layer.pre_activation(&cur, &mut z);
            cur = z.iter().map(|v| v.max(0.0)).collect();
            out.push(z);
        }
        out
    }

    /// Upper bound on the Lipschitz constant (product of Frobenius norms).
    pub fn lipschitz_bound(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>().sqrt())
            .product()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: EdgeNet = serde_json::from_str(s)?;
        let u_bar = raw.max_output;
        let sizes = raw.layer_sizes.clone();
        let mut net = EdgeNet::new(raw.layers, raw.omega, raw.normalization)?;
        if net.layer_sizes != sizes {
            return Err(Error::DimensionMismatch(format!(
                "declared layer sizes {sizes:?} do not match weights {:?}",
                net.layer_sizes
            )));
        }
        net.max_output = u_bar;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::malformed(path, e.to_string()))
    }
}

//! Reconstruction quality descriptors: relative mean error (RME), raw data
//! coverage (RDC), bimodal contrast score (BMS) and material coverage (MC).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::image::{Image, Sinogram};
use crate::operator::SparseOperator;

/// Default BMS threshold on the 8-bit scale.
pub const BMS_EPSILON: f64 = 10.0;

/// Σ|f − f̂| / Σ|f̂|
pub fn rme(recon: &Image, ground_truth: &Image) -> Result<f64> {
    if !recon.same_shape(ground_truth) {
        return Err(Error::DimensionMismatch(format!(
            "reconstruction is {}x{}, ground truth is {}x{}",
            recon.width(),
            recon.height(),
            ground_truth.width(),
            ground_truth.height()
        )));
    }
    relative_l1(
        recon.pixels(),
        ground_truth.pixels(),
        "ground truth is identically zero",
    )
}

/// Σ|(Rf)ᵢ − p̂ᵢ| / Σ|p̂ᵢ|
pub fn rdc(op: &SparseOperator, recon: &Image, measured: &Sinogram) -> Result<f64> {
    let projected = op.forward(recon, Exec::Parallel)?;
    if projected.len() != measured.len() {
        return Err(Error::DimensionMismatch(format!(
            "operator produces {} values, measured sinogram has {}",
            projected.len(),
            measured.len()
        )));
    }
    relative_l1(
        projected.values(),
        measured.values(),
        "measured sinogram is identically zero",
    )
}

fn relative_l1(a: &[f64], reference: &[f64], zero_msg: &'static str) -> Result<f64> {
    let denom: f64 = reference.iter().map(|v| v.abs()).sum();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric(zero_msg));
    }
    let num: f64 = a.iter().zip(reference).map(|(x, y)| (x - y).abs()).sum();
    Ok(num / denom)
}

/// How BMS maps intensities onto the 8-bit range before thresholding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BmsScale {
    /// `f ↦ 255·f / max f`
    PerImage,
    /// `f ↦ 255·f / full_scale`, values above the full scale saturate.
    Fixed(f64),
}

/// Fraction of pixels within `epsilon` of either extreme of the 8-bit range,
/// after rescaling each image so that its maximum maps to 255.
pub fn bms(recon: &Image, epsilon: f64) -> Result<f64> {
    bms_with_scale(recon, epsilon, BmsScale::PerImage)
}

pub fn bms_with_scale(recon: &Image, epsilon: f64, scale: BmsScale) -> Result<f64> {
    if recon.is_empty() {
        return Err(Error::UndefinedMetric("BMS of an empty image"));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be >= 0, got {epsilon}"
        )));
    }
    let full = match scale {
        BmsScale::PerImage => recon.max(),
        BmsScale::Fixed(v) => v,
    };
    // an all-zero image sits entirely on the lower extreme
    if full <= 0.0 {
        return Ok(1.0);
    }
    let hits = recon
        .pixels()
        .iter()
        .filter(|&&f| {
            let v = (255.0 * f / full).min(255.0);
            v <= epsilon || v >= 255.0 - epsilon
        })
        .count();
    Ok(hits as f64 / recon.len() as f64)
}

/// Number of strictly positive pixels.
pub fn mc(recon: &Image) -> usize {
    mc_with_tolerance(recon, 0.0)
}

/// Number of pixels above `zero_tol`.
pub fn mc_with_tolerance(recon: &Image, zero_tol: f64) -> usize {
    recon.pixels().iter().filter(|&&f| f > zero_tol).count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rme: Option<f64>,
    pub rdc: Option<f64>,
    pub bms: f64,
    pub mc: usize,
    pub runtime_seconds: f64,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "dataset,algorithm,params,rme,rdc,bms,mc,runtime_seconds";

    /// One CSV row. Missing metrics are left empty so that every row has
    /// the same columns.
    pub fn csv_row(&self, dataset: &str, algorithm: &str, params: &str) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{:.6},{},{:.3}",
            csv_field(dataset),
            csv_field(algorithm),
            csv_field(params),
            opt(self.rme),
            opt(self.rdc),
            self.bms,
            self.mc,
            self.runtime_seconds
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

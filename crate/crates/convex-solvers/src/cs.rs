use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::primal_dual::{Block, BlockKind, PdOptions, PdProblem, PdResult, Separable, TracePoint};
use tomo_core::error::{Error, Result};
use tomo_core::exec::Exec;
use tomo_core::image::{Image, Sinogram};
use tomo_core::SparseOperator;
use tomo_core::sparse::CsrMatrix;

/// Image side the published regularization weights refer to.
pub const REFERENCE_SIDE: usize = 512;

/// Rescales a weight tuned for a `REFERENCE_SIDE`² image to `side`².
pub fn scaled_weight(weight: f64, side: usize) -> f64 {
    weight * side as f64 / REFERENCE_SIDE as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsConfig {
    pub lambda_tv: f64,
    pub max_iters: usize,
    /// Relative objective change between checkpoints that ends the run.
    pub tol: f64,
    /// Keep the per-checkpoint trace in the result.
    pub trace: bool,
}

impl Default for CsConfig {
    fn default() -> Self {
        CsConfig {
            lambda_tv: 1.0,
            max_iters: 20_000,
            tol: 1e-6,
            trace: false,
        }
    }
}

impl CsConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda_tv >= 0.0) || !self.lambda_tv.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda_tv = {}",
                self.lambda_tv
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol = {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters = 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CshmConfig {
    #[serde(flatten)]
    pub cs: CsConfig,
    pub mu: f64,
    pub omega: f64,
    /// Enforce `f_j ≤ b_j` from [`pixel_upper_bounds`].
    pub pixel_bounds: bool,
}

impl Default for CshmConfig {
    fn default() -> Self {
        CshmConfig {
            cs: CsConfig::default(),
            mu: 1.0,
            omega: 255.0,
            pixel_bounds: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub image: Image,
    pub objective: f64,
    /// Lower bound on the optimal value (−∞ when none is available).
    pub dual_bound: f64,
    pub iterations: usize,
    /// False when `max_iters` ran out; `image` is then the best iterate.
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

#[derive(Clone, Debug)]
pub struct CshmReconstruction {
    pub recon: Reconstruction,
    /// `d_j = max(0, f_j − ω)`
    pub slack: Vec<f64>,
}

/// Forward differences, horizontal pairs first, then vertical pairs.
/// Differences across the border are omitted.
pub fn tv_operator(width: usize, height: usize) -> CsrMatrix {
    let mut rows = Vec::with_capacity(2 * width * height);
    for r in 0..height {
        for c in 0..width.saturating_sub(1) {
            let j = r * width + c;
            rows.push(vec![(j, -1.0), (j + 1, 1.0)]);
        }
    }
    for r in 0..height.saturating_sub(1) {
        for c in 0..width {
            let j = r * width + c;
            rows.push(vec![(j, -1.0), (j + width, 1.0)]);
        }
    }
    CsrMatrix::from_rows(width * height, rows)
}

/// Anisotropic total variation `Σ |∂ₓf| + |∂ᵧf|`.
pub fn tv_norm(f: &Image) -> f64 {
    tv_of(f.pixels(), f.width(), f.height())
}

fn tv_of(f: &[f64], width: usize, height: usize) -> f64 {
    let mut s = 0.0;
    for r in 0..height {
        for c in 0..width {
            let v = f[r * width + c];
            if c + 1 < width {
                s += (f[r * width + c + 1] - v).abs();
            }
            if r + 1 < height {
                s += (f[(r + 1) * width + c] - v).abs();
            }
        }
    }
    s
}

/// `b_j = min_{i: R_ij > 0} p_i / R_ij`, or +∞ for pixels no ray touches.
pub fn pixel_upper_bounds(op: &SparseOperator, p: &Sinogram) -> Result<Vec<f64>> {
    check_dims(op, p)?;
    let r = op.matrix();
    let p = p.values();
    Ok((0..op.cols())
        .map(|j| {
            r.col(j)
                .filter(|&(_, v)| v > 0.0)
                .map(|(i, v)| p[i] / v)
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

fn check_dims(op: &SparseOperator, p: &Sinogram) -> Result<()> {
    if p.len() != op.rows() {
        return Err(Error::DimensionMismatch(format!(
            "sinogram has {} values, operator has {} rows",
            p.len(),
            op.rows()
        )));
    }
    Ok(())
}

fn residual_sq(op: &SparseOperator, p: &Sinogram, f: &[f64]) -> f64 {
    op.matrix()
        .mul(f, Exec::default())
        .iter()
        .zip(p.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// `‖Rf − p‖² + λ‖f‖_TV`
pub fn cs_objective(op: &SparseOperator, p: &Sinogram, f: &Image, lambda_tv: f64) -> f64 {
    residual_sq(op, p, f.pixels()) + lambda_tv * tv_norm(f)
}

/// `‖Rf − p‖² + λ‖f‖_TV + μ Σ max(0, f_j − ω)²`
pub fn cshm_objective(op: &SparseOperator, p: &Sinogram, f: &Image, cfg: &CshmConfig) -> f64 {
    let hinge: f64 = f
        .pixels()
        .iter()
        .map(|&v| (v - cfg.omega).max(0.0).powi(2))
        .sum();
    cs_objective(op, p, f, cfg.cs.lambda_tv) + cfg.mu * hinge
}

fn problem(op: &SparseOperator, p: &Sinogram, lambda: f64, g: Separable) -> PdProblem {
    let mut blocks = vec![Block::new(
        op.matrix().clone(),
        p.values().to_vec(),
        BlockKind::LeastSquares { weight: 1.0 },
    )];
    if lambda > 0.0 {
        let d = tv_operator(op.image_width(), op.image_height());
        let rows = d.rows();
        blocks.push(Block::new(
            d,
            vec![0.0; rows],
            BlockKind::L1 { weight: lambda },
        ));
    }
    PdProblem { blocks, g }
}

fn options(cfg: &CsConfig, exec: Exec) -> PdOptions {
    PdOptions {
        max_iters: cfg.max_iters,
        tol: cfg.tol,
        min_iters: 200.min(cfg.max_iters),
        check_every: 10,
        exec,
        trace: cfg.trace,
        ..PdOptions::default()
    }
}

fn finish(op: &SparseOperator, r: PdResult) -> Result<Reconstruction> {
    Ok(Reconstruction {
        image: Image::from_clamped(op.image_width(), op.image_height(), r.x)?,
        objective: r.objective,
        dual_bound: r.dual_bound,
        iterations: r.iterations,
        converged: r.converged,
        trace: r.trace,
    })
}

/// `min ‖Rf − p‖² + λ‖f‖_TV` over `f ≥ 0`.
pub fn solve_cs(op: &SparseOperator, p: &Sinogram, cfg: &CsConfig) -> Result<Reconstruction> {
    solve_cs_with(op, p, cfg, Exec::default())
}

pub fn solve_cs_with(
    op: &SparseOperator,
    p: &Sinogram,
    cfg: &CsConfig,
    exec: Exec,
) -> Result<Reconstruction> {
    cfg.validate()?;
    check_dims(op, p)?;
    let n = op.cols();
    let g = Separable::boxed(vec![0.0; n], vec![f64::INFINITY; n]);
    let r = problem(op, p, cfg.lambda_tv, g).solve(&options(cfg, exec), None);
    finish(op, r)
}

/// CS with a quadratic penalty on density above `ω`, optionally bounded by
/// the per-pixel upper bounds. The slack `d` is eliminated analytically.
pub fn solve_cshm(
    op: &SparseOperator,
    p: &Sinogram,
    cfg: &CshmConfig,
) -> Result<CshmReconstruction> {
    solve_cshm_with(op, p, cfg, Exec::default())
}

pub fn solve_cshm_with(
    op: &SparseOperator,
    p: &Sinogram,
    cfg: &CshmConfig,
    exec: Exec,
) -> Result<CshmReconstruction> {
    cfg.cs.validate()?;
    check_dims(op, p)?;
    if !(cfg.mu >= 0.0) || !cfg.mu.is_finite() {
        return Err(Error::InvalidArgument(format!("mu = {}", cfg.mu)));
    }
    if !(cfg.omega > 0.0) {
        return Err(Error::InvalidArgument(format!("omega = {}", cfg.omega)));
    }
    let n = op.cols();
    let upper = if cfg.pixel_bounds {
        pixel_upper_bounds(op, p)?
    } else {
        vec![f64::INFINITY; n]
    };
    let mut g = Separable::boxed(vec![0.0; n], upper);
    if cfg.mu > 0.0 {
        g.hinge_weight = vec![cfg.mu; n];
        g.hinge_at = vec![cfg.omega; n];
    }
    let r = problem(op, p, cfg.cs.lambda_tv, g).solve(&options(&cfg.cs, exec), None);
    let recon = finish(op, r)?;
    let slack = recon
        .image
        .pixels()
        .iter()
        .map(|&v| (v - cfg.omega).max(0.0))
        .collect();
    Ok(CshmReconstruction { recon, slack })
}

/// Writes `iteration,objective,best_objective,dual_bound,residual` rows.
pub fn write_trace_csv(trace: &[TracePoint], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "iteration,objective,best_objective,dual_bound,residual"
    )?;
    for t in trace {
        writeln!(
            out,
            "{},{},{},{},{}",
            t.iteration, t.objective, t.best_objective, t.dual_bound, t.residual
        )?;
    }
    out.flush()?;
    Ok(())
}

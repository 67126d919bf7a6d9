//! Sliding-window re-optimization of a reconstruction: every 3×3 window of
//! the rescaled reference is replaced by the optimum of its edge-decision
//! MIP, and overlapping results are merged per pixel.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use edge_net::{EdgeNet, Subregion};
use tomo_core::error::{Error, Result};
use tomo_core::exec::Exec;
use tomo_core::image::Image;
use relu_mip::{build_subregion_mip, Formulation, MipLimits, MipStatus, SubregionParams};

/// Maximum network output the published threshold values refer to.
pub const REFERENCE_U_BAR: f64 = 550.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    #[default]
    Mean,
    Max,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdScale {
    /// `T` is given relative to `REFERENCE_U_BAR` and rescaled by `ū/550`.
    #[default]
    Reference,
    /// `T` is already on the network's output scale.
    Net,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MipRoConfig {
    pub spacing: usize,
    pub threshold: f64,
    pub threshold_scale: ThresholdScale,
    pub alpha: f64,
    pub beta: f64,
    pub merge: MergeMode,
    pub formulation: Formulation,
    pub gap_tol: f64,
    pub node_limit: usize,
    /// Per-window time limit in seconds.
    pub time_limit: Option<f64>,
}

impl Default for MipRoConfig {
    fn default() -> Self {
        MipRoConfig {
            spacing: 1,
            threshold: 800.0,
            threshold_scale: ThresholdScale::Reference,
            alpha: 1.0 / 50.0,
            beta: 1.0 / 50.0,
            merge: MergeMode::Mean,
            formulation: Formulation::Auto,
            gap_tol: 1e-6,
            node_limit: 100_000,
            time_limit: None,
        }
    }
}

impl MipRoConfig {
    /// `T` on the network's output scale.
    pub fn net_threshold(&self, u_bar: f64) -> f64 {
        match self.threshold_scale {
            ThresholdScale::Reference => self.threshold * u_bar / REFERENCE_U_BAR,
            ThresholdScale::Net => self.threshold,
        }
    }

    fn limits(&self) -> MipLimits {
        MipLimits {
            gap_tol: self.gap_tol,
            node_limit: self.node_limit,
            time_limit: self.time_limit.map(std::time::Duration::from_secs_f64),
        }
    }
}

/// `ω·f/max f`
pub fn rescale_reference(f_star: &Image, omega: f64) -> Result<Image> {
    let max = f_star.max();
    if !(max > 0.0) {
        return Err(Error::InvalidArgument(
            "reference image has no positive pixel".into(),
        ));
    }
    let px = f_star
        .pixels()
        .iter()
        .map(|&v| {
            if v == max {
                omega
            } else {
                (omega * v / max).min(omega)
            }
        })
        .collect();
    Image::new(f_star.width(), f_star.height(), px)
}

/// Candidate values per pixel, in the order they were contributed.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelVotes {
    width: usize,
    height: usize,
    votes: Vec<Vec<f64>>,
}

impl PixelVotes {
    pub fn new(width: usize, height: usize) -> Self {
        PixelVotes {
            width,
            height,
            votes: vec![Vec::new(); width * height],
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.votes[row * self.width + col].push(value);
    }

    pub fn get(&self, row: usize, col: usize) -> &[f64] {
        &self.votes[row * self.width + col]
    }

    pub fn count(&self, row: usize, col: usize) -> usize {
        self.get(row, col).len()
    }
}

pub fn merge_pixel_votes(votes: &PixelVotes, mode: MergeMode) -> Result<Image> {
    let mut px = Vec::with_capacity(votes.votes.len());
    for (k, v) in votes.votes.iter().enumerate() {
        if v.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "pixel ({}, {}) received no votes",
                k / votes.width,
                k % votes.width
            )));
        }
        px.push(match mode {
            MergeMode::Mean => v.iter().sum::<f64>() / v.len() as f64,
            MergeMode::Max => v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    Image::new(votes.width, votes.height, px)
}

/// `0, s, 2s, …` up to `len − 3`, plus a final window flush with the end.
pub fn window_starts(len: usize, spacing: usize) -> Vec<usize> {
    if len < 3 {
        return Vec::new();
    }
    let last = len - 3;
    let mut v: Vec<usize> = (0..=last).step_by(spacing.max(1)).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowReport {
    pub row: usize,
    pub col: usize,
    pub objective: f64,
    pub reference_objective: f64,
    pub nodes: usize,
    pub gap: f64,
    pub status: MipStatus,
    pub edge: bool,
}

#[derive(Clone, Debug)]
pub struct MipRoOutput {
    pub image: Image,
    pub votes: PixelVotes,
    pub windows: Vec<WindowReport>,
    /// Distinct windows actually solved.
    pub unique_windows: usize,
    /// `T` on the network's scale.
    pub threshold: f64,
}

pub fn sliding_window_reoptimize(
    f_star: &Image,
    net: &EdgeNet,
    cfg: &MipRoConfig,
) -> Result<MipRoOutput> {
    sliding_window_reoptimize_with(f_star, net, cfg, Exec::default())
}

struct Solved {
    pixels: [f64; 9],
    objective: f64,
    reference_objective: f64,
    nodes: usize,
    gap: f64,
    status: MipStatus,
    edge: bool,
}

pub fn sliding_window_reoptimize_with(
    f_star: &Image,
    net: &EdgeNet,
    cfg: &MipRoConfig,
    exec: Exec,
) -> Result<MipRoOutput> {
    let (w, h) = (f_star.width(), f_star.height());
    if w < 3 || h < 3 {
        return Err(Error::InvalidArgument(format!(
            "image is {w}x{h}, needs at least 3x3"
        )));
    }
    if cfg.spacing != 1 && cfg.spacing != 3 {
        return Err(Error::InvalidArgument(format!(
            "spacing must be 1 or 3, got {}",
            cfg.spacing
        )));
    }
    let u_bar = net
        .max_output()
        .ok_or_else(|| Error::InvalidArgument("network has no stored maximum output".into()))?;
    let t = cfg.net_threshold(u_bar);
    if !(t >= 0.0 && t < 2.0 * u_bar) {
        return Err(Error::InvalidArgument(format!(
            "threshold {t} outside [0, 2·{u_bar}) on the network scale"
        )));
    }
    let omega = net.omega();
    let reference = rescale_reference(f_star, omega)?;
    let params = SubregionParams {
        threshold: t,
        alpha: cfg.alpha,
        beta: cfg.beta,
        omega,
        formulation: cfg.formulation,
    };

    let positions: Vec<(usize, usize)> = window_starts(h, cfg.spacing)
        .into_iter()
        .flat_map(|r| {
            window_starts(w, cfg.spacing)
                .into_iter()
                .map(move |c| (r, c))
        })
        .collect();
    // identical windows share one solve
    let mut unique: Vec<(usize, usize, [f64; 9])> = Vec::new();
    let mut index: HashMap<[u64; 9], usize> = HashMap::new();
    let mut slot = Vec::with_capacity(positions.len());
    for &(r, c) in &positions {
        let vals: [f64; 9] = reference.window(r, c, 3, 3).try_into().unwrap();
        let key = vals.map(f64::to_bits);
        let k = *index.entry(key).or_insert_with(|| {
            unique.push((r, c, vals));
            unique.len() - 1
        });
        slot.push(k);
    }

    let limits = cfg.limits();
    let solved = exec.try_map(unique.len(), |k| {
        let (r, c, vals) = unique[k];
        let fail = |e: Error| Error::Window {
            row: r,
            col: c,
            reason: e.to_string(),
        };
        let sub = Subregion::new(vals, omega).map_err(fail)?;
        let mip = build_subregion_mip(net, &params, Some(&sub)).map_err(fail)?;
        let sol = mip.solve(net, &limits).map_err(fail)?;
        Ok::<_, Error>(Solved {
            pixels: mip.pixel_values(&sol.x),
            objective: sol.objective,
            reference_objective: mip.reference_objective(net).unwrap_or(f64::NAN),
            nodes: sol.nodes,
            gap: sol.gap,
            status: sol.status,
            edge: sol.x[mip.edge] > 0.5,
        })
    })?;

    let mut votes = PixelVotes::new(w, h);
    let mut windows = Vec::with_capacity(positions.len());
    for (&(r, c), &k) in positions.iter().zip(&slot) {
        let s = &solved[k];
        for dr in 0..3 {
            for dc in 0..3 {
                votes.push(r + dr, c + dc, s.pixels[dr * 3 + dc].clamp(0.0, omega));
            }
        }
        windows.push(WindowReport {
            row: r,
            col: c,
            objective: s.objective,
            reference_objective: s.reference_objective,
            nodes: s.nodes,
            gap: s.gap,
            status: s.status,
            edge: s.edge,
        });
    }
    let image = merge_pixel_votes(&votes, cfg.merge)?;
    Ok(MipRoOutput {
        image,
        votes,
        windows,
        unique_windows: unique.len(),
        threshold: t,
    })
}

/// Per-window log: position, nodes, gap, status and objectives.
pub fn write_progress_csv(windows: &[WindowReport], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "window,row,col,nodes,gap,status,edge,objective,reference_objective"
    )?;
    for (k, r) in windows.iter().enumerate() {
        writeln!(
            out,
            "{k},{},{},{},{},{:?},{},{},{}",
            r.row,
            r.col,
            r.nodes,
            r.gap,
            r.status,
            r.edge as u8,
            r.objective,
            r.reference_objective
        )?;
    }
    out.flush()?;
    Ok(())
}

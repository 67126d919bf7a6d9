//! The integrated model on a region of interest:
//!
//! ```text
//! min  CSHM(f̃) − φ·Σ_a [e_a·y_a + (1 − e_a)(T − y_a)]
//! s.t. f = ω·f̃ / f_max,  y_a = net(f_a),  0 ≤ f̃ ≤ b,  e_a ∈ {0, 1}
//! ```
//!
//! Pixels outside the ROI keep the values of a prior CSHM solution, which
//! also supplies `f_max`. Branch-and-bound runs over the ReLU indicators and
//! edge flags; each node relaxation is a convex problem handed to the
//! primal-dual engine, whose dual value is the node bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use edge_net::EdgeNet;
use tomo_core::error::{Error, Result};
use tomo_core::exec::Exec;
use tomo_core::image::{Image, Sinogram};
use relu_mip::{
    compute_neuron_bounds, encode_network_into, relative_gap, BnbLogEntry, MipModel, MipStatus,
    NetworkVars, Sense, VarKind,
};
use tomo_core::SparseOperator;
use convex_solvers::primal_dual::{Block, BlockKind, PdOptions, PdProblem, Separable};
use convex_solvers::{cshm_objective, pixel_upper_bounds, tv_operator, CshmConfig};
use tomo_core::sparse::CsrMatrix;

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Roi {
    /// `size × size` square centred in a `side × side` image.
    pub fn centered(side: usize, size: usize) -> Roi {
        let off = side.saturating_sub(size) / 2;
        Roi {
            row: off,
            col: off,
            height: size,
            width: size,
        }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row && row < self.row + self.height && col >= self.col && col < self.col + self.width
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubregionMode {
    /// Every 3×3 window inside the ROI.
    Overlapping,
    /// Disjoint windows on a stride-3 grid; a strip narrower than 3 pixels
    /// at the bottom or right edge stays uncovered.
    #[default]
    NonOverlapping,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratedConfig {
    /// Weight of the edge objective.
    pub phi: f64,
    pub roi: Roi,
    pub mode: SubregionMode,
    pub gap_tol: f64,
    /// Seconds.
    pub time_limit: Option<f64>,
    pub node_limit: usize,
    /// Largest admissible number of windows.
    pub max_windows: usize,
    /// Primal-dual iterations per node relaxation.
    pub node_iters: usize,
}

impl Default for IntegratedConfig {
    fn default() -> Self {
        IntegratedConfig {
            phi: 1e8,
            roi: Roi::centered(64, 16),
            mode: SubregionMode::NonOverlapping,
            gap_tol: 0.15,
            time_limit: Some(600.0),
            node_limit: 10_000,
            max_windows: 25,
            node_iters: 2000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IntegratedOutput {
    /// Full image: the incumbent inside the ROI, the prior elsewhere.
    pub image: Image,
    pub objective: f64,
    /// Lower bound on the optimal objective.
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub status: MipStatus,
    /// Objective of the prior CSHM image with its best edge decisions.
    pub baseline_objective: f64,
    /// Edge objective `Σ_a max(y_a, T − y_a)` of the incumbent.
    pub edge_objective: f64,
    pub windows: Vec<(usize, usize)>,
    pub edges: Vec<bool>,
    /// Largest violation of the encoded constraints at the incumbent.
    pub max_violation: f64,
    pub log: Vec<BnbLogEntry>,
}

/// Top-left corners of the windows placed in `roi`.
pub fn roi_windows(roi: &Roi, mode: SubregionMode) -> Vec<(usize, usize)> {
    let stride = match mode {
        SubregionMode::Overlapping => 1,
        SubregionMode::NonOverlapping => 3,
    };
    let starts = |len: usize| (0..).map(move |k| k * stride).take_while(move |&s| s + 3 <= len);
    starts(roi.height)
        .flat_map(|r| starts(roi.width).map(move |c| (roi.row + r, roi.col + c)))
        .collect()
}

/// The encoded edge objective over all windows, sharing the ROI pixel
/// variables `0..roi_len`.
struct EdgeModel {
    model: MipModel,
    net: EdgeNet,
    networks: Vec<NetworkVars>,
    edges: Vec<usize>,
    products: Vec<usize>,
    threshold: f64,
}

impl EdgeModel {
    fn assignment(&self, roi_pixels: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; self.model.num_vars()];
        for (j, &v) in roi_pixels.iter().enumerate() {
            let var = &self.model.vars[j];
            a[j] = v.clamp(var.lower, var.upper);
        }
        for ((nv, &e), &w) in self.networks.iter().zip(&self.edges).zip(&self.products) {
            nv.fill_forward(&self.net, &mut a);
            let y = a[nv.output].min(self.model.vars[nv.output].upper);
            a[nv.output] = y;
            let on = 2.0 * y > self.threshold;
            a[e] = if on { 1.0 } else { 0.0 };
            a[w] = if on { y } else { 0.0 };
        }
        a
    }
}

fn input_scaled(net: &EdgeNet, factor: f64, omega: f64) -> Result<EdgeNet> {
    let mut layers = net.layers().to_vec();
    layers[0].weights.iter_mut().for_each(|w| *w *= factor);
    let mut out = EdgeNet::new(layers, omega, net.normalization())?;
    if let Some(u) = net.max_output() {
        out.set_max_output(u);
    }
    Ok(out)
}

struct Node {
    id: usize,
    bound: f64,
    // per binary: None free, Some(v) fixed
    fixed: Vec<Option<bool>>,
    warm: Option<Arc<(Vec<f64>, Vec<Vec<f64>>)>>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // max-heap on the reversed key: smallest bound first, then smallest id
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then_with(|| o.id.cmp(&self.id))
    }
}

/// Solves the integrated model with edge threshold `threshold` on the
/// network's output scale. `prior` is a completed CSHM reconstruction for
/// the same data.
pub fn solve_integrated(
    op: &SparseOperator,
    p: &Sinogram,
    cshm: &CshmConfig,
    prior: &Image,
    net: &EdgeNet,
    threshold: f64,
    cfg: &IntegratedConfig,
) -> Result<IntegratedOutput> {
    solve_integrated_with(op, p, cshm, prior, net, threshold, cfg, Exec::default())
}

#[allow(clippy::too_many_arguments)]
pub fn solve_integrated_with(
    op: &SparseOperator,
    p: &Sinogram,
    cshm: &CshmConfig,
    prior: &Image,
    net: &EdgeNet,
    threshold: f64,
    cfg: &IntegratedConfig,
    exec: Exec,
) -> Result<IntegratedOutput> {
    let start = Instant::now();
    let (width, height) = (op.image_width(), op.image_height());
    if prior.width() != width || prior.height() != height {
        return Err(Error::DimensionMismatch(format!(
            "prior is {}×{}, operator expects {width}×{height}",
            prior.width(),
            prior.height()
        )));
    }
    if p.len() != op.rows() {
        return Err(Error::DimensionMismatch(format!(
            "sinogram has {} values, operator has {} rows",
            p.len(),
            op.rows()
        )));
    }
    let f_max = prior.max();
    if !(f_max > 0.0) {
        return Err(Error::InvalidArgument(
            "prior CSHM solution has no positive pixel".into(),
        ));
    }
    if !(cfg.phi >= 0.0) || !cfg.phi.is_finite() {
        return Err(Error::InvalidArgument(format!("phi = {}", cfg.phi)));
    }
    if !(cfg.gap_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("gap_tol = {}", cfg.gap_tol)));
    }
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold = {threshold}")));
    }
    let roi = cfg.roi;
    if roi.height == 0 || roi.width == 0 || roi.row + roi.height > height || roi.col + roi.width > width {
        return Err(Error::InvalidArgument(format!(
            "ROI {roi:?} outside the {width}×{height} image"
        )));
    }
    let windows = roi_windows(&roi, cfg.mode);
    if windows.is_empty() {
        return Err(Error::InvalidArgument(format!("ROI {roi:?} holds no 3×3 window")));
    }
    if windows.len() > cfg.max_windows {
        return Err(Error::InvalidArgument(format!(
            "ROI {roi:?} yields {} windows, cap is {}",
            windows.len(),
            cfg.max_windows
        )));
    }
    if net.inputs() != 9 {
        return Err(Error::DimensionMismatch(format!(
            "network takes {} inputs, need 9",
            net.inputs()
        )));
    }

    // ROI pixel k ↔ image index roi_pixels[k] ↔ variable k
    let roi_pixels: Vec<usize> = (0..roi.height)
        .flat_map(|r| (0..roi.width).map(move |c| (roi.row + r) * width + roi.col + c))
        .collect();
    let mut var_of = vec![usize::MAX; width * height];
    for (k, &i) in roi_pixels.iter().enumerate() {
        var_of[i] = k;
    }
    let upper: Vec<f64> = if cshm.pixel_bounds {
        let b = pixel_upper_bounds(op, p)?;
        roi_pixels.iter().map(|&i| b[i].min(f_max)).collect()
    } else {
        vec![f_max; roi_pixels.len()]
    };

    // edge model: network input f = ω·f̃/f_max folded into the first layer
    let omega = net.omega();
    let scaled = input_scaled(net, omega / f_max, f_max)?;
    let mut model = MipModel::new(Sense::Maximize);
    for (k, &u) in upper.iter().enumerate() {
        model.add_var(format!("f_{k}"), 0.0, u.max(0.0), VarKind::Continuous);
    }
    let mut networks = Vec::with_capacity(windows.len());
    let mut edges = Vec::with_capacity(windows.len());
    let mut products = Vec::with_capacity(windows.len());
    for (a, &(r0, c0)) in windows.iter().enumerate() {
        let inputs: Vec<usize> = (0..3)
            .flat_map(|dr| (0..3).map(move |dc| (r0 + dr) * width + c0 + dc))
            .map(|i| var_of[i])
            .collect();
        let lo = vec![0.0; 9];
        let hi: Vec<f64> = inputs.iter().map(|&j| model.vars[j].upper).collect();
        let bounds = compute_neuron_bounds(&scaled, &lo, &hi)?;
        let nv = encode_network_into(&mut model, &scaled, &bounds, &inputs, &format!("a{a}_"));
        let y = nv.output;
        let hi_y = model.vars[y].upper;
        let u_bar = scaled.max_output().map_or(hi_y, |u| u.min(hi_y));
        let u_bar = model.vars[y].upper.min(u_bar + 1e-9 * u_bar.max(1.0));
        model.vars[y].upper = u_bar;
        let e = model.add_var(format!("e_{a}"), 0.0, 1.0, VarKind::Binary);
        let w = model.add_var(format!("w_{a}"), 0.0, u_bar, VarKind::Continuous);
        model.add_row(format!("w_le_ue_{a}"), vec![(w, 1.0), (e, -u_bar)], f64::NEG_INFINITY, 0.0);
        model.add_row(format!("w_le_y_{a}"), vec![(w, 1.0), (y, -1.0)], f64::NEG_INFINITY, 0.0);
        model.add_row(
            format!("w_ge_{a}"),
            vec![(w, 1.0), (y, -1.0), (e, -u_bar)],
            -u_bar,
            f64::INFINITY,
        );
        // e·y + (1 − e)(T − y) = 2w − y − T·e + T
        model.objective[w] += 2.0;
        model.objective[y] -= 1.0;
        model.objective[e] -= threshold;
        model.constant += threshold;
        networks.push(nv);
        edges.push(e);
        products.push(w);
    }
    let em = EdgeModel {
        model,
        net: scaled,
        networks,
        edges,
        products,
        threshold,
    };
    let model = &em.model;
    let n = model.num_vars();
    let binaries: Vec<usize> = model.binaries().collect();

    // exact objective of a full image
    let full_image = |roi_vals: &[f64]| -> Result<Image> {
        let mut px = prior.pixels().to_vec();
        for (&i, &v) in roi_pixels.iter().zip(roi_vals) {
            px[i] = v;
        }
        Image::new(width, height, px)
    };
    let exact = |roi_vals: &[f64]| -> Result<(f64, Vec<f64>)> {
        let a = em.assignment(roi_vals);
        let img = full_image(&a[..roi_pixels.len()])?;
        let value = cshm_objective(op, p, &img, cshm) - cfg.phi * model.evaluate(&a);
        Ok((value, a))
    };

    // relaxation data; objective scaled by s so that the edge part is O(1)
    let s = 1.0 / cfg.phi.max(1.0);
    let prior_px = prior.pixels();
    let mut constant = 0.0;
    let r = op.matrix();
    let mut ls_rows = Vec::new();
    let mut ls_offset = Vec::new();
    for i in 0..r.rows() {
        let mut row = Vec::new();
        let mut fixed = 0.0;
        for (j, v) in r.row(i) {
            if var_of[j] != usize::MAX {
                row.push((var_of[j], v));
            } else {
                fixed += v * prior_px[j];
            }
        }
        let target = p.values()[i] - fixed;
        if row.is_empty() {
            constant += s * target * target;
        } else {
            ls_rows.push(row);
            ls_offset.push(target);
        }
    }
    let mut blocks = vec![Block::new(
        CsrMatrix::from_rows(n, ls_rows),
        ls_offset,
        BlockKind::LeastSquares { weight: s },
    )];
    let lambda = cshm.cs.lambda_tv;
    if lambda > 0.0 {
        let d = tv_operator(width, height);
        let (mut rows, mut offset) = (Vec::new(), Vec::new());
        for i in 0..d.rows() {
            let mut row = Vec::new();
            let mut fixed = 0.0;
            for (j, v) in d.row(i) {
                if var_of[j] != usize::MAX {
                    row.push((var_of[j], v));
                } else {
                    fixed += v * prior_px[j];
                }
            }
            if row.is_empty() {
                constant += s * lambda * fixed.abs();
            } else {
                rows.push(row);
                offset.push(-fixed);
            }
        }
        blocks.push(Block::new(CsrMatrix::from_rows(n, rows), offset, BlockKind::L1 { weight: s * lambda }));
    }
    let (mut eq_rows, mut eq_off, mut le_rows, mut le_off) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for row in &model.rows {
        if row.lower == row.upper {
            eq_rows.push(row.terms.clone());
            eq_off.push(row.upper);
            continue;
        }
        if row.upper.is_finite() {
            le_rows.push(row.terms.clone());
            le_off.push(row.upper);
        }
        if row.lower.is_finite() {
            le_rows.push(row.terms.iter().map(|&(j, v)| (j, -v)).collect());
            le_off.push(-row.lower);
        }
    }
    if !eq_rows.is_empty() {
        blocks.push(Block::new(CsrMatrix::from_rows(n, eq_rows), eq_off, BlockKind::Equal));
    }
    if !le_rows.is_empty() {
        blocks.push(Block::new(CsrMatrix::from_rows(n, le_rows), le_off, BlockKind::LessEqual));
    }
    let mut g = Separable::boxed(
        model.vars.iter().map(|v| v.lower).collect(),
        model.vars.iter().map(|v| v.upper).collect(),
    );
    for j in 0..n {
        g.linear[j] = -cfg.phi * s * model.objective[j];
    }
    if cshm.mu > 0.0 {
        for k in 0..roi_pixels.len() {
            g.hinge_weight[k] = s * cshm.mu;
            g.hinge_at[k] = cshm.omega;
        }
        constant += s
            * cshm.mu
            * (0..width * height)
                .filter(|&i| var_of[i] == usize::MAX)
                .map(|i| (prior_px[i] - cshm.omega).max(0.0).powi(2))
                .sum::<f64>();
    }
    constant -= cfg.phi * s * model.constant;
    let base = PdProblem { blocks, g };
    let pd_opts = PdOptions {
        max_iters: cfg.node_iters.max(1),
        tol: 1e-7,
        min_iters: 100.min(cfg.node_iters),
        check_every: 10,
        exec,
        ..PdOptions::default()
    };

    // incumbents
    let prior_roi: Vec<f64> = roi_pixels.iter().map(|&i| prior_px[i]).collect();
    let (baseline, baseline_a) = exact(&prior_roi)?;
    let mut incumbent = (baseline, baseline_a);
    let consider = |cand: (f64, Vec<f64>), inc: &mut (f64, Vec<f64>)| -> bool {
        if cand.0 < inc.0 && model.max_violation(&cand.1) <= 1e-6 {
            *inc = cand;
            true
        } else {
            false
        }
    };
    let var_ref = &var_of;
    let flatten = |from: &[f64], inc: &mut (f64, Vec<f64>)| -> Result<()> {
        // greedily replace windows by their mean
        let mut cur: Vec<f64> = from.to_vec();
        let mut cur_val = exact(&cur)?.0;
        for &(r0, c0) in &windows {
            let idx: Vec<usize> = (0..3)
                .flat_map(|dr| (0..3).map(move |dc| var_ref[(r0 + dr) * width + c0 + dc]))
                .collect();
            let mean = idx.iter().map(|&k| cur[k]).sum::<f64>() / 9.0;
            let mut trial = cur.clone();
            for &k in &idx {
                trial[k] = mean.clamp(0.0, model.vars[k].upper);
            }
            let (v, _) = exact(&trial)?;
            if v < cur_val {
                cur = trial;
                cur_val = v;
            }
        }
        let cand = exact(&cur)?;
        consider(cand, inc);
        Ok(())
    };
    flatten(&prior_roi, &mut incumbent)?;

    let limit = cfg.time_limit.map(Duration::from_secs_f64);
    let mut heap = BinaryHeap::new();
    let root_x = {
        let mut a = em.assignment(&prior_roi);
        for &b in &binaries {
            a[b] = a[b].clamp(0.0, 1.0);
        }
        a
    };
    heap.push(Node {
        id: 0,
        bound: f64::NEG_INFINITY,
        fixed: vec![None; binaries.len()],
        warm: Some(Arc::new((root_x, Vec::new()))),
    });
    let mut next_id = 1;
    let mut nodes = 0;
    let mut status = MipStatus::Optimal;
    // smallest bound among pruned or closed nodes
    let mut closed_min = f64::INFINITY;
    let mut log = Vec::new();
    let unscale = |v: f64| v / s;
    let global_bound = |heap: &BinaryHeap<Node>, closed_min: f64, inc: f64| -> f64 {
        heap.peek().map_or(f64::INFINITY, |n| n.bound).min(closed_min).min(inc)
    };

    loop {
        let inc_s = s * incumbent.0;
        let bound_s = global_bound(&heap, closed_min, inc_s);
        let gap = relative_gap(unscale(bound_s), incumbent.0);
        if heap.is_empty() {
            break;
        }
        if gap <= cfg.gap_tol {
            status = MipStatus::GapReached;
            break;
        }
        if nodes >= cfg.node_limit {
            status = MipStatus::NodeLimit;
            break;
        }
        if limit.is_some_and(|t| start.elapsed() >= t) {
            status = MipStatus::TimeLimit;
            break;
        }
        let node = heap.pop().unwrap();
        if node.bound >= inc_s - 1e-12 * inc_s.abs() {
            closed_min = closed_min.min(node.bound);
            continue;
        }
        nodes += 1;

        let mut problem = base.clone();
        for (k, &b) in binaries.iter().enumerate() {
            if let Some(v) = node.fixed[k] {
                let v = if v { 1.0 } else { 0.0 };
                problem.g.lower[b] = v;
                problem.g.upper[b] = v;
            }
        }
        let warm = node.warm.as_deref().map(|(x, y)| (x.as_slice(), y.as_slice()));
        let res = problem.solve(&pd_opts, warm);
        let bound = (res.dual_bound + constant).max(node.bound);

        let cand = exact(&res.x[..roi_pixels.len()])?;
        let mut improved = consider(cand, &mut incumbent);
        if nodes == 1 {
            let before = incumbent.0;
            flatten(&res.x[..roi_pixels.len()], &mut incumbent)?;
            improved |= incumbent.0 < before;
        }
        let inc_s = s * incumbent.0;
        if improved || nodes % 10 == 0 || nodes == 1 {
            let b = global_bound(&heap, closed_min, inc_s).min(bound);
            log.push(BnbLogEntry {
                nodes,
                incumbent: incumbent.0,
                bound: unscale(b),
                gap: relative_gap(unscale(b), incumbent.0),
            });
        }
        if bound >= inc_s - cfg.gap_tol.max(1e-9) * inc_s.abs().max(s) {
            closed_min = closed_min.min(bound);
            continue;
        }

        let frac = binaries
            .iter()
            .enumerate()
            .filter(|(k, _)| node.fixed[*k].is_none())
            .map(|(k, &b)| (k, res.x[b]))
            .filter(|&(_, v)| (v - v.round()).abs() > 1e-3)
            .min_by(|a, b| (a.1 - 0.5).abs().total_cmp(&(b.1 - 0.5).abs()).then(a.0.cmp(&b.0)));
        let warm = Some(Arc::new((res.x.clone(), res.y.clone())));
        match frac {
            Some((k, _)) => {
                for v in [false, true] {
                    let mut fixed = node.fixed.clone();
                    fixed[k] = Some(v);
                    heap.push(Node {
                        id: next_id,
                        bound,
                        fixed,
                        warm: warm.clone(),
                    });
                    next_id += 1;
                }
            }
            None if node.fixed.iter().any(Option::is_none) => {
                // relaxation already integral: fix everything at once
                let fixed = binaries
                    .iter()
                    .zip(&node.fixed)
                    .map(|(&b, f)| f.or(Some(res.x[b] > 0.5)))
                    .collect();
                heap.push(Node {
                    id: next_id,
                    bound,
                    fixed,
                    warm,
                });
                next_id += 1;
            }
            None => closed_min = closed_min.min(bound),
        }
    }

    let inc_s = s * incumbent.0;
    let bound = unscale(global_bound(&heap, closed_min, inc_s));
    let gap = relative_gap(bound, incumbent.0);
    if status == MipStatus::Optimal && gap > 1e-9 {
        status = MipStatus::GapReached;
    }
    log.push(BnbLogEntry {
        nodes,
        incumbent: incumbent.0,
        bound,
        gap,
    });
    let (objective, a) = incumbent;
    let image = full_image(&a[..roi_pixels.len()])?;
    let edge_objective = model.evaluate(&a);
    Ok(IntegratedOutput {
        image,
        objective,
        bound,
        gap,
        nodes,
        status,
        baseline_objective: baseline,
        edge_objective,
        windows,
        edges: em.edges.iter().map(|&e| a[e] > 0.5).collect(),
        max_violation: model.max_violation(&a),
        log,
    })
}

/// Writes `nodes,incumbent,bound,gap` rows with the ROI appended to each.
pub fn write_trace_csv(out: &IntegratedOutput, roi: &Roi, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "nodes,incumbent,bound,gap,roi_row,roi_col,roi_height,roi_width")?;
    for e in &out.log {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            e.nodes, e.incumbent, e.bound, e.gap, roi.row, roi.col, roi.height, roi.width
        )?;
    }
    f.flush()?;
    Ok(())
}

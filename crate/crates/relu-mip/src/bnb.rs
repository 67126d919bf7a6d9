//! Best-first branch-and-bound over binaries with LP relaxations.
//!
//! Quadratic objective terms get an auxiliary variable each. Inside the tree
//! every term is relaxed on its own: terms concave in the optimization
//! direction by tangent cuts (inherited by children while binding), convex
//! ones by the secant over the variable's interval. Once all binaries are
//! integral the node becomes a leaf and the terms are merged per variable,
//! so the leaf relaxation is exact for a net concave objective and is
//! refined by spatial branching otherwise.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::lp::{Basis, Lp, LpStatus};
use super::model::{MipModel, Sense};
use tomo_core::error::{Error, Result};

const INT_TOL: f64 = 1e-6;
const CUT_TOL: f64 = 1e-12;
const NODE_CUT_ROUNDS: usize = 2;
const LEAF_CUT_ROUNDS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct MipLimits {
    /// Stop once `|bound − value| / max(1, |value|)` drops to this level.
    pub gap_tol: f64,
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
}

impl Default for MipLimits {
    fn default() -> Self {
        MipLimits {
            gap_tol: 1e-6,
            node_limit: 1_000_000,
            time_limit: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MipStatus {
    /// Search tree exhausted.
    Optimal,
    /// Stopped with open nodes once the gap tolerance was met.
    GapReached,
    TimeLimit,
    NodeLimit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BnbLogEntry {
    pub nodes: usize,
    pub incumbent: f64,
    pub bound: f64,
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub struct MipSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Proven bound on the optimum (upper when maximizing).
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub status: MipStatus,
    /// False when the objective is not concave (maximization) or convex
    /// (minimization) in the continuous variables.
    pub certified: bool,
    pub log: Vec<BnbLogEntry>,
}

/// Maps a relaxation point to a feasible assignment, if it can.
pub type Completion<'a> = &'a (dyn Fn(&[f64]) -> Option<Vec<f64>> + Sync);

#[derive(Default)]
pub struct SolveHints<'a> {
    /// Candidate starting solutions; infeasible ones are ignored.
    pub starts: Vec<Vec<f64>>,
    pub completion: Option<Completion<'a>>,
}

pub fn relative_gap(bound: f64, value: f64) -> f64 {
    (bound - value).abs() / value.abs().max(1.0)
}

pub fn solve_mip(model: &MipModel, limits: &MipLimits) -> Result<MipSolution> {
    solve_mip_with(model, limits, &SolveHints::default())
}

#[derive(Clone, Copy)]
struct QTerm {
    var: usize,
    // coefficient in maximization form
    c: f64,
    aux: usize,
}

struct Node {
    id: usize,
    bound: f64,
    leaf: bool,
    lower: Vec<f64>,
    upper: Vec<f64>,
    basis: Option<Arc<Basis>>,
    cuts: Arc<Vec<(usize, f64)>>,
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
    // max-heap: larger bound first, then smaller id
    fn cmp(&self, o: &Self) -> Ordering {
        self.bound
            .total_cmp(&o.bound)
            .then_with(|| o.id.cmp(&self.id))
    }
}

fn sq_range(l: f64, u: f64) -> (f64, f64) {
    let lo = if l <= 0.0 && u >= 0.0 {
        0.0
    } else {
        (l * l).min(u * u)
    };
    (lo, (l * l).max(u * u))
}

/// One way of relaxing the quadratic part of the objective.
struct Relaxation {
    concave: Vec<QTerm>,
    convex: Vec<QTerm>,
    root_cuts: Vec<(usize, f64)>,
}

impl Relaxation {
    fn new(model: &MipModel, terms: &[(usize, f64)]) -> Self {
        let n0 = model.num_vars();
        let (mut concave, mut convex) = (Vec::new(), Vec::new());
        for &(var, c) in terms {
            if c < 0.0 {
                concave.push(QTerm { var, c, aux: 0 });
            } else if c > 0.0 {
                convex.push(QTerm { var, c, aux: 0 });
            }
        }
        for (k, q) in concave.iter_mut().chain(convex.iter_mut()).enumerate() {
            q.aux = n0 + k;
        }
        let mut root_cuts = Vec::new();
        for (k, q) in concave.iter().enumerate() {
            let v = &model.vars[q.var];
            root_cuts.push((k, v.lower));
            root_cuts.push((k, v.upper));
            root_cuts.push((k, 0.5 * (v.lower + v.upper)));
        }
        Relaxation {
            concave,
            convex,
            root_cuts,
        }
    }

    fn len(&self) -> usize {
        self.concave.len() + self.convex.len()
    }
}

struct Solver<'m> {
    model: &'m MipModel,
    sgn: f64,
    n0: usize,
    incumbent: Option<(f64, Vec<f64>)>,
    lp_iterations: usize,
}

impl<'m> Solver<'m> {
    fn objective(&self, x: &[f64]) -> f64 {
        self.sgn * self.model.evaluate(x)
    }

    fn try_incumbent(&mut self, mut x: Vec<f64>) -> bool {
        for j in self.model.binaries() {
            x[j] = x[j].round();
        }
        for (j, v) in self.model.vars.iter().enumerate() {
            x[j] = x[j].clamp(v.lower, v.upper);
        }
        if self.model.max_violation(&x) > 1e-6 {
            return false;
        }
        let val = self.objective(&x);
        if self.incumbent.as_ref().is_none_or(|(best, _)| val > *best) {
            self.incumbent = Some((val, x));
            return true;
        }
        false
    }

    fn build_lp(
        &self,
        relax: &Relaxation,
        lower: &[f64],
        upper: &[f64],
        cuts: &[(usize, f64)],
    ) -> Lp {
        let m = self.model;
        let n = self.n0 + relax.len();
        let mut cost = vec![0.0; n];
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for j in 0..self.n0 {
            cost[j] = -self.sgn * m.objective[j];
            lo[j] = lower[j];
            hi[j] = upper[j];
        }
        for q in relax.concave.iter().chain(&relax.convex) {
            cost[q.aux] = -1.0;
            let (a, b) = sq_range(lower[q.var], upper[q.var]);
            let (t0, t1) = if q.c < 0.0 {
                (q.c * b, q.c * a)
            } else {
                (q.c * a, q.c * b)
            };
            lo[q.aux] = t0;
            hi[q.aux] = t1;
        }
        let mut lp = Lp::new(cost, lo, hi);
        for row in &m.rows {
            lp.add_row(&row.terms, row.lower, row.upper);
        }
        for q in &relax.convex {
            let (l, u) = (lower[q.var], upper[q.var]);
            // t ≤ c·((l + u)x − l·u)
            lp.add_row(
                &[(q.aux, 1.0), (q.var, -q.c * (l + u))],
                f64::NEG_INFINITY,
                -q.c * l * u,
            );
        }
        for &(k, x0) in cuts {
            let q = relax.concave[k];
            // t ≤ c·(2·x0·x − x0²)
            lp.add_row(
                &[(q.aux, 1.0), (q.var, -2.0 * q.c * x0)],
                f64::NEG_INFINITY,
                -q.c * x0 * x0,
            );
        }
        lp
    }
}

/// Removes generated cuts whose row logical is basic (the row is slack at
/// the optimum), keeping the basis valid for the smaller LP.
fn drop_slack_cuts(
    cuts: Vec<(usize, f64)>,
    basis: Basis,
    n: usize,
    first_cut: usize,
    permanent: usize,
) -> (Vec<(usize, f64)>, Basis) {
    let rows = first_cut + cuts.len();
    let mut is_basic = vec![false; n + rows];
    for &j in &basis.basic {
        is_basic[j] = true;
    }
    let mut keep_row = vec![true; rows];
    let mut kept = Vec::with_capacity(cuts.len());
    for (i, c) in cuts.into_iter().enumerate() {
        let r = first_cut + i;
        if i >= permanent && is_basic[n + r] {
            keep_row[r] = false;
        } else {
            kept.push(c);
        }
    }
    let basis = basis.drop_rows(n, &keep_row);
    (kept, basis)
}

/// Branch-and-bound with optional starting points and a completion
/// heuristic applied to every node relaxation.
pub fn solve_mip_with(
    model: &MipModel,
    limits: &MipLimits,
    hints: &SolveHints,
) -> Result<MipSolution> {
    model.validate()?;
    if !(limits.gap_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gap_tol = {}",
            limits.gap_tol
        )));
    }
    let start = Instant::now();
    let sgn = match model.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let n0 = model.num_vars();
    let split_terms: Vec<(usize, f64)> = model.quad.iter().map(|q| (q.var, sgn * q.coef)).collect();
    let mut net = vec![0.0; n0];
    for q in &model.quad {
        net[q.var] += sgn * q.coef;
    }
    let mut merged_terms = Vec::new();
    for q in &model.quad {
        if net[q.var] != 0.0 && !merged_terms.iter().any(|&(v, _)| v == q.var) {
            merged_terms.push((q.var, net[q.var]));
        }
    }
    let certified = net.iter().all(|&c| c <= 0.0);
    let split = Relaxation::new(model, &split_terms);
    let merged = Relaxation::new(model, &merged_terms);
    // with at most one term per variable the two relaxations coincide
    let needs_leaf_pass = split.len() != merged.len();

    let mut s = Solver {
        model,
        sgn,
        n0,
        incumbent: None,
        lp_iterations: 0,
    };
    for x in &hints.starts {
        if x.len() == n0 {
            s.try_incumbent(x.clone());
        }
    }

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        id: 0,
        bound: f64::INFINITY,
        leaf: false,
        lower: model.vars.iter().map(|v| v.lower).collect(),
        upper: model.vars.iter().map(|v| v.upper).collect(),
        basis: None,
        cuts: Arc::new(split.root_cuts.clone()),
    });
    let mut next_id = 1;
    let mut nodes = 0;
    let mut log = Vec::new();
    let mut status = MipStatus::Optimal;
    // largest bound among nodes closed without being proven dominated
    let mut pruned_max = f64::NEG_INFINITY;
    let scale = |inc: &Option<(f64, Vec<f64>)>| inc.as_ref().map_or(1.0, |(v, _)| v.abs().max(1.0));
    let prune_tol = |inc: &Option<(f64, Vec<f64>)>| limits.gap_tol.max(1e-9) * scale(inc);

    while let Some(node) = heap.peek() {
        if let Some((inc, _)) = &s.incumbent {
            let gap = (node.bound - inc) / scale(&s.incumbent);
            if node.bound <= inc + 1e-9 * scale(&s.incumbent) {
                break;
            }
            if gap <= limits.gap_tol {
                status = MipStatus::GapReached;
                break;
            }
        }
        if nodes >= limits.node_limit {
            status = MipStatus::NodeLimit;
            break;
        }
        if limits.time_limit.is_some_and(|t| start.elapsed() >= t) {
            status = MipStatus::TimeLimit;
            break;
        }
        let node = heap.pop().unwrap();
        nodes += 1;
        let relax = if node.leaf { &merged } else { &split };
        let permanent = relax.root_cuts.len();

        let mut cuts = (*node.cuts).clone();
        let mut lp = s.build_lp(relax, &node.lower, &node.upper, &cuts);
        let mut warm = node.basis.as_deref().map(|b| lp.extend_basis(b));
        let mut sol = lp.solve(warm.as_ref());
        s.lp_iterations += sol.iterations;
        if sol.status == LpStatus::IterationLimit {
            sol = lp.solve(None);
            s.lp_iterations += sol.iterations;
        }
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::IterationLimit => {
                return Err(Error::Solver(format!(
                    "LP iteration limit at node {}",
                    node.id
                )))
            }
            LpStatus::Optimal => {}
        }
        // tangent cuts for concave terms
        let rounds = if node.leaf || !needs_leaf_pass {
            LEAF_CUT_ROUNDS
        } else {
            NODE_CUT_ROUNDS
        };
        for _ in 0..rounds {
            let mut added = false;
            for (k, q) in relax.concave.iter().enumerate() {
                let x = sol.x[q.var];
                let t = sol.x[q.aux];
                let f = q.c * x * x;
                if t > f + CUT_TOL * (1.0 + f.abs()) {
                    cuts.push((k, x));
                    lp.add_row(
                        &[(q.aux, 1.0), (q.var, -2.0 * q.c * x)],
                        f64::NEG_INFINITY,
                        -q.c * x * x,
                    );
                    added = true;
                }
            }
            if !added {
                break;
            }
            warm = Some(lp.extend_basis(&sol.basis));
            let next = lp.solve(warm.as_ref());
            s.lp_iterations += next.iterations;
            if next.status != LpStatus::Optimal {
                sol = lp.solve(None);
                s.lp_iterations += sol.iterations;
            } else {
                sol = next;
            }
            if sol.status == LpStatus::Infeasible {
                break;
            }
        }
        if sol.status != LpStatus::Optimal {
            continue;
        }
        let bound = -sol.objective + sgn * model.constant;
        debug_assert!(
            bound <= node.bound + 1e-6 * bound.abs().max(1.0),
            "child bound {bound} exceeds parent {}",
            node.bound
        );
        let bound = bound.min(node.bound);
        let x: Vec<f64> = sol.x[..n0].to_vec();

        let mut improved = false;
        if let Some(complete) = hints.completion {
            if let Some(c) = complete(&x) {
                improved |= s.try_incumbent(c);
            }
        }
        let frac = model
            .binaries()
            .filter(|&j| (x[j] - x[j].round()).abs() > INT_TOL)
            .min_by(|&a, &b| {
                let fa = (x[a] - 0.5 - x[a].floor()).abs();
                let fb = (x[b] - 0.5 - x[b].floor()).abs();
                fa.total_cmp(&fb).then(a.cmp(&b))
            });
        if frac.is_none() {
            improved |= s.try_incumbent(x.clone());
        }
        if improved || nodes % 100 == 0 {
            let inc = s.incumbent.as_ref().map_or(f64::NEG_INFINITY, |(v, _)| *v);
            let open = heap.peek().map_or(bound, |n| n.bound.max(bound));
            log.push(BnbLogEntry {
                nodes,
                incumbent: sgn * inc,
                bound: sgn * open.max(inc),
                gap: relative_gap(open.max(inc), inc),
            });
        }
        if let Some((inc, _)) = &s.incumbent {
            if bound <= inc + prune_tol(&s.incumbent) {
                pruned_max = pruned_max.max(bound);
                continue;
            }
        }

        if frac.is_none() && !node.leaf && needs_leaf_pass {
            heap.push(Node {
                id: next_id,
                bound,
                leaf: true,
                lower: node.lower,
                upper: node.upper,
                basis: None,
                cuts: Arc::new(merged.root_cuts.clone()),
            });
            next_id += 1;
            continue;
        }

        let first_cut = model.rows.len() + relax.convex.len();
        let (cuts, mut basis) = drop_slack_cuts(cuts, sol.basis, lp.cols(), first_cut, permanent);
        if frac.is_none() {
            // spatial children change secant rows
            basis = basis.without_inverse();
        }
        let (cuts, basis) = (Arc::new(cuts), Arc::new(basis));
        let leaf = node.leaf;
        let mut child = |lower: Vec<f64>, upper: Vec<f64>, heap: &mut BinaryHeap<Node>| {
            heap.push(Node {
                id: next_id,
                bound,
                leaf,
                lower,
                upper,
                basis: Some(basis.clone()),
                cuts: cuts.clone(),
            });
            next_id += 1;
        };
        if let Some(j) = frac {
            let mut up0 = node.upper.clone();
            up0[j] = 0.0;
            child(node.lower.clone(), up0, &mut heap);
            let mut lo1 = node.lower.clone();
            lo1[j] = 1.0;
            child(lo1, node.upper.clone(), &mut heap);
            continue;
        }
        // binaries integral: refine the worst secant
        let worst = relax
            .convex
            .iter()
            .map(|q| {
                let xv = sol.x[q.var];
                let f = q.c * xv * xv;
                (q.var, sol.x[q.aux] - f, f)
            })
            .filter(|&(j, g, f)| {
                g > CUT_TOL * (1.0 + f.abs()) && node.upper[j] - node.lower[j] > 1e-12
            })
            .map(|(j, g, _)| (j, g))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        if let Some((j, _)) = worst {
            let (l, u) = (node.lower[j], node.upper[j]);
            let xv = x[j];
            let margin = 1e-3 * (u - l);
            let split = if xv > l + margin && xv < u - margin {
                xv
            } else {
                0.5 * (l + u)
            };
            let mut left_up = node.upper.clone();
            left_up[j] = split;
            child(node.lower.clone(), left_up, &mut heap);
            let mut right_lo = node.lower.clone();
            right_lo[j] = split;
            child(right_lo, node.upper.clone(), &mut heap);
        } else {
            // nothing left to branch on; keep the bound honest
            pruned_max = pruned_max.max(bound);
        }
    }

    let (value, x) = s
        .incumbent
        .ok_or_else(|| Error::Solver(format!("no feasible solution after {nodes} nodes")))?;
    let open = match status {
        MipStatus::Optimal => value,
        _ => heap.peek().map_or(value, |n| n.bound.max(value)),
    };
    let open = open.max(pruned_max);
    let gap = relative_gap(open, value);
    if status == MipStatus::Optimal && gap > 1e-9 {
        status = MipStatus::GapReached;
    } else if status == MipStatus::GapReached && gap <= 1e-9 {
        status = MipStatus::Optimal;
    }
    log.push(BnbLogEntry {
        nodes,
        incumbent: sgn * value,
        bound: sgn * open,
        gap,
    });
    Ok(MipSolution {
        x,
        objective: sgn * value,
        bound: sgn * open,
        gap,
        nodes,
        lp_iterations: s.lp_iterations,
        status,
        certified,
        log,
    })
}

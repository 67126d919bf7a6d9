//! Dense bounded-variable dual simplex.
//!
//! Every row `i` gets a logical variable `r_i = a_i·x` bounded by the row
//! range (intersected with the activity range implied by the column
//! bounds), so the constraint matrix is `[A | −I]` with right-hand side 0.
//! All variables are boxed, hence any basis can be made dual feasible by
//! putting each nonbasic variable on the bound that matches the sign of its
//! reduced cost, and the dual simplex needs no phase one.

use std::sync::Arc;

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;

/// `min c·x  s.t.  row_lower ≤ A x ≤ row_upper,  col_lower ≤ x ≤ col_upper`
#[derive(Clone, Debug, PartialEq)]
pub struct Lp {
    n: usize,
    a: Vec<f64>,
    cost: Vec<f64>,
    col_lower: Vec<f64>,
    col_upper: Vec<f64>,
    row_lower: Vec<f64>,
    row_upper: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

/// Basic variable per row plus the bound each nonbasic variable sits on.
/// Indices `0..n` are columns, `n..n+m` row logicals.
///
/// A basis returned by [`Lp::solve`] also carries its inverse, which a warm
/// start reuses instead of refactoring. It is only valid for the matrix that
/// produced it; call [`Basis::without_inverse`] when the rows change.
#[derive(Clone, Debug)]
pub struct Basis {
    pub basic: Vec<usize>,
    pub at_upper: Vec<bool>,
    inverse: Option<Arc<Vec<f64>>>,
}

impl PartialEq for Basis {
    fn eq(&self, o: &Self) -> bool {
        self.basic == o.basic && self.at_upper == o.at_upper
    }
}
impl Eq for Basis {}

impl Basis {
    pub fn new(basic: Vec<usize>, at_upper: Vec<bool>) -> Self {
        Basis {
            basic,
            at_upper,
            inverse: None,
        }
    }

    pub fn without_inverse(mut self) -> Self {
        self.inverse = None;
        self
    }

    /// Removes the rows with `keep_row[i] == false`; each of them must have
    /// its logical in the basis. `n` is the number of columns.
    pub fn drop_rows(&self, n: usize, keep_row: &[bool]) -> Basis {
        let rows = keep_row.len();
        let m = self.basic.len();
        assert_eq!(m, rows);
        let mut new_index = vec![usize::MAX; n + rows];
        let mut next = 0;
        for j in 0..n + rows {
            if j < n || keep_row[j - n] {
                new_index[j] = next;
                next += 1;
            }
        }
        let keep_pos: Vec<bool> = self
            .basic
            .iter()
            .map(|&j| new_index[j] != usize::MAX)
            .collect();
        let basic: Vec<usize> = self
            .basic
            .iter()
            .filter_map(|&j| Some(new_index[j]).filter(|&k| k != usize::MAX))
            .collect();
        assert_eq!(
            basic.len(),
            keep_row.iter().filter(|&&k| k).count(),
            "dropped row with a nonbasic logical"
        );
        let at_upper = (0..n + rows)
            .filter(|&j| new_index[j] != usize::MAX)
            .map(|j| self.at_upper[j])
            .collect();
        // with the row's logical basic, the remaining block of the inverse
        // is the inverse of the remaining basis
        let inverse = self.inverse.as_ref().map(|inv| {
            let mut out = Vec::with_capacity(basic.len() * basic.len());
            for p in (0..m).filter(|&p| keep_pos[p]) {
                out.extend((0..m).filter(|&i| keep_row[i]).map(|i| inv[p * m + i]));
            }
            Arc::new(out)
        });
        Basis {
            basic,
            at_upper,
            inverse,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub basis: Basis,
    pub iterations: usize,
}

impl Lp {
    /// Panics unless the column bounds are finite with `lower ≤ upper`.
    pub fn new(cost: Vec<f64>, col_lower: Vec<f64>, col_upper: Vec<f64>) -> Self {
        let n = cost.len();
        assert!(col_lower.len() == n && col_upper.len() == n);
        for j in 0..n {
            assert!(
                col_lower[j].is_finite()
                    && col_upper[j].is_finite()
                    && col_lower[j] <= col_upper[j],
                "column {j} bounds [{}, {}]",
                col_lower[j],
                col_upper[j]
            );
        }
        Lp {
            n,
            a: Vec::new(),
            cost,
            col_lower,
            col_upper,
            row_lower: Vec::new(),
            row_upper: Vec::new(),
        }
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.row_lower.len()
    }

    pub fn add_row(&mut self, terms: &[(usize, f64)], lower: f64, upper: f64) {
        let start = self.a.len();
        self.a.resize(start + self.n, 0.0);
        for &(j, v) in terms {
            self.a[start + j] += v;
        }
        self.row_lower.push(lower);
        self.row_upper.push(upper);
    }

    /// Extends a basis of the first `b.basic.len()` rows to all rows by
    /// making the logicals of the new rows basic.
    pub fn extend_basis(&self, b: &Basis) -> Basis {
        let (n, m_old, m) = (self.n, b.basic.len(), self.rows());
        let mut basic = b.basic.clone();
        let mut at_upper = b.at_upper.clone();
        for i in m_old..m {
            basic.push(n + i);
            at_upper.push(false);
        }
        // [[B, 0], [C, −I]]⁻¹ = [[B⁻¹, 0], [C·B⁻¹, −I]]
        let inverse = b
            .inverse
            .as_ref()
            .filter(|inv| inv.len() == m_old * m_old)
            .map(|inv| {
                let mut out = vec![0.0; m * m];
                for p in 0..m_old {
                    out[p * m..p * m + m_old].copy_from_slice(&inv[p * m_old..(p + 1) * m_old]);
                }
                for i in m_old..m {
                    let row = &self.a[i * n..(i + 1) * n];
                    for (p, &j) in b.basic.iter().enumerate() {
                        let c = if j < n { row[j] } else { 0.0 };
                        if c != 0.0 {
                            for k in 0..m_old {
                                out[i * m + k] += c * inv[p * m_old + k];
                            }
                        }
                    }
                    out[i * m + i] = -1.0;
                }
                Arc::new(out)
            });
        Basis {
            basic,
            at_upper,
            inverse,
        }
    }

    pub fn set_col_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        assert!(lower.is_finite() && upper.is_finite());
        self.col_lower[j] = lower;
        self.col_upper[j] = upper;
    }

    pub fn col_bounds(&self, j: usize) -> (f64, f64) {
        (self.col_lower[j], self.col_upper[j])
    }

    pub fn solve(&self, warm: Option<&Basis>) -> LpSolution {
        let limit = 50 * (self.n + self.rows()) + 1000;
        Simplex::new(self).run(warm, limit)
    }
}

struct Simplex<'a> {
    lp: &'a Lp,
    m: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    d: Vec<f64>,
    at_upper: Vec<bool>,
    basic: Vec<usize>,
    // position of a column in `basic`, usize::MAX if nonbasic
    pos: Vec<usize>,
    binv: Vec<f64>,
    // nonzeros of each structural column as (row, value)
    cols: Vec<Vec<(usize, f64)>>,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a Lp) -> Self {
        let (n, m) = (lp.n, lp.rows());
        let mut lower = lp.col_lower.clone();
        let mut upper = lp.col_upper.clone();
        for i in 0..m {
            let row = &lp.a[i * n..(i + 1) * n];
            let (mut lo, mut hi) = (0.0, 0.0);
            for j in 0..n {
                let v = row[j];
                if v > 0.0 {
                    lo += v * lp.col_lower[j];
                    hi += v * lp.col_upper[j];
                } else if v < 0.0 {
                    lo += v * lp.col_upper[j];
                    hi += v * lp.col_lower[j];
                }
            }
            lower.push(lp.row_lower[i].max(lo));
            upper.push(lp.row_upper[i].min(hi));
        }
        let mut cost = lp.cost.clone();
        cost.resize(n + m, 0.0);
        let mut cols = vec![Vec::new(); n];
        for i in 0..m {
            for (j, &v) in lp.a[i * n..(i + 1) * n].iter().enumerate() {
                if v != 0.0 {
                    cols[j].push((i, v));
                }
            }
        }
        Simplex {
            lp,
            m,
            lower,
            upper,
            cost,
            x: vec![0.0; n + m],
            d: vec![0.0; n + m],
            at_upper: vec![false; n + m],
            basic: Vec::new(),
            pos: vec![usize::MAX; n + m],
            binv: vec![0.0; m * m],
            cols,
        }
    }

    fn total(&self) -> usize {
        self.lp.n + self.m
    }

    /// `Σ_i v_i · column_j[i]`
    fn dot_col(&self, v: &[f64], j: usize) -> f64 {
        let n = self.lp.n;
        if j < n {
            self.cols[j].iter().map(|&(i, a)| v[i] * a).sum()
        } else {
            -v[j - n]
        }
    }

    /// `B⁻¹ a_j`
    fn ftran(&self, j: usize) -> Vec<f64> {
        let (n, m) = (self.lp.n, self.m);
        let mut out = vec![0.0; m];
        if j < n {
            for &(k, a) in &self.cols[j] {
                for i in 0..m {
                    out[i] += self.binv[i * m + k] * a;
                }
            }
        } else {
            let k = j - n;
            for i in 0..m {
                out[i] = -self.binv[i * m + k];
            }
        }
        out
    }

    /// Inverts the basis matrix; false if it is numerically singular.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        let mut b = vec![0.0; m * m];
        for (c, &j) in self.basic.iter().enumerate() {
            let mut e = vec![0.0; m];
            if j < self.lp.n {
                for i in 0..m {
                    e[i] = self.lp.a[i * self.lp.n + j];
                }
            } else {
                e[j - self.lp.n] = -1.0;
            }
            for i in 0..m {
                b[i * m + c] = e[i];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&p, &q| b[p * m + col].abs().total_cmp(&b[q * m + col].abs()))
                .unwrap();
            let pv = b[piv * m + col];
            if pv.abs() < 1e-11 {
                return false;
            }
            if piv != col {
                for k in 0..m {
                    b.swap(piv * m + k, col * m + k);
                    inv.swap(piv * m + k, col * m + k);
                }
            }
            for k in 0..m {
                b[col * m + k] /= pv;
                inv[col * m + k] /= pv;
            }
            for r in 0..m {
                if r != col {
                    let f = b[r * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            b[r * m + k] -= f * b[col * m + k];
                            inv[r * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        true
    }

    /// Refactors, replacing dependent basic columns by slacks if the basis
    /// has gone singular. Every column is boxed, so the repaired basis is
    /// dual feasible once the nonbasic bounds are re-chosen.
    fn refactor_or_repair(&mut self) -> bool {
        if self.refactor() {
            return true;
        }
        let (n, m) = (self.lp.n, self.m);
        let column = |j: usize| -> Vec<f64> {
            let mut e = vec![0.0; m];
            if j < n {
                for i in 0..m {
                    e[i] = self.lp.a[i * n + j];
                }
            } else {
                e[j - n] = -1.0;
            }
            e
        };
        // eliminated copies of the kept columns with their pivot rows
        let mut kept: Vec<(usize, usize, Vec<f64>)> = Vec::new();
        let mut claimed = vec![false; m];
        for &j in &self.basic {
            let mut v = column(j);
            for (_, r, u) in &kept {
                let f = v[*r] / u[*r];
                if f != 0.0 {
                    v.iter_mut().zip(u).for_each(|(a, b)| *a -= f * b);
                }
            }
            let scale = column(j).iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let r = (0..m)
                .filter(|&i| !claimed[i])
                .max_by(|&p, &q| v[p].abs().total_cmp(&v[q].abs()));
            if let Some(r) = r {
                if v[r].abs() > 1e-9 * scale.max(1.0) {
                    claimed[r] = true;
                    kept.push((j, r, v));
                }
            }
        }
        let mut basic: Vec<usize> = kept.iter().map(|k| k.0).collect();
        basic.extend((0..m).filter(|&i| !claimed[i]).map(|i| n + i));
        self.set_basis(basic);
        self.refactor()
    }

    fn set_basis(&mut self, basic: Vec<usize>) {
        self.pos.iter_mut().for_each(|p| *p = usize::MAX);
        for (r, &j) in basic.iter().enumerate() {
            self.pos[j] = r;
        }
        self.basic = basic;
    }

    fn recompute_duals(&mut self) {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (k, &j) in self.basic.iter().enumerate() {
            let c = self.cost[j];
            if c != 0.0 {
                for i in 0..m {
                    y[i] += c * self.binv[k * m + i];
                }
            }
        }
        for j in 0..self.total() {
            self.d[j] = if self.pos[j] == usize::MAX {
                self.cost[j] - self.dot_col(&y, j)
            } else {
                0.0
            };
        }
    }

    /// Puts nonbasic variables on the bound matching their reduced cost.
    fn fix_dual_signs(&mut self) {
        for j in 0..self.total() {
            if self.pos[j] != usize::MAX {
                continue;
            }
            if self.d[j] > DUAL_TOL {
                self.at_upper[j] = false;
            } else if self.d[j] < -DUAL_TOL {
                self.at_upper[j] = true;
            }
        }
    }

    fn recompute_primal(&mut self) {
        let (n, m) = (self.lp.n, self.m);
        let mut rhs = vec![0.0; m];
        for j in 0..self.total() {
            if self.pos[j] != usize::MAX {
                continue;
            }
            let v = if self.at_upper[j] {
                self.upper[j]
            } else {
                self.lower[j]
            };
            self.x[j] = v;
            if v == 0.0 {
                continue;
            }
            if j < n {
                for i in 0..m {
                    rhs[i] -= self.lp.a[i * n + j] * v;
                }
            } else {
                rhs[j - n] += v;
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            self.x[self.basic[r]] = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
        }
    }

    /// Checks `A x_cols = x_logicals` for the current primal point.
    fn residual_ok(&self) -> bool {
        let n = self.lp.n;
        (0..self.m).all(|i| {
            let row = &self.lp.a[i * n..(i + 1) * n];
            let (mut act, mut mag) = (0.0, 0.0);
            for j in 0..n {
                let t = row[j] * self.x[j];
                act += t;
                mag += t.abs();
            }
            (act - self.x[n + i]).abs() <= 1e-11 * (1.0 + mag)
        })
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let (x, l, u) = (self.x[j], self.lower[j], self.upper[j]);
        if x < l - PRIMAL_TOL * (1.0 + l.abs()) {
            l - x
        } else if x > u + PRIMAL_TOL * (1.0 + u.abs()) {
            x - u
        } else {
            0.0
        }
    }

    fn run(mut self, warm: Option<&Basis>, limit: usize) -> LpSolution {
        let (n, m) = (self.lp.n, self.m);
        let total = n + m;
        if (0..total)
            .any(|j| self.lower[j] > self.upper[j] + PRIMAL_TOL * (1.0 + self.upper[j].abs()))
        {
            return self.finish(LpStatus::Infeasible, 0);
        }
        for j in 0..total {
            if self.lower[j] > self.upper[j] {
                self.upper[j] = self.lower[j];
            }
        }

        let slack_basis: Vec<usize> = (n..total).collect();
        let mut started = false;
        let mut reused = false;
        if let Some(b) = warm {
            if b.basic.len() == m && b.at_upper.len() == total && b.basic.iter().all(|&j| j < total)
            {
                self.set_basis(b.basic.clone());
                self.at_upper.copy_from_slice(&b.at_upper);
                started = match &b.inverse {
                    Some(inv) if inv.len() == m * m => {
                        self.binv.copy_from_slice(inv);
                        reused = true;
                        true
                    }
                    _ => self.refactor(),
                };
            }
        }
        if !started {
            self.set_basis(slack_basis);
            self.at_upper.iter_mut().for_each(|u| *u = false);
            let ok = self.refactor();
            debug_assert!(ok);
        }
        self.recompute_duals();
        self.fix_dual_signs();
        self.recompute_primal();

        let mut iters = 0;
        let mut since_refactor = 0;
        loop {
            // leaving row: largest primal infeasibility
            let mut r = usize::MAX;
            let mut worst = 0.0;
            for k in 0..m {
                let inf = self.infeasibility(self.basic[k]);
                if inf > worst {
                    worst = inf;
                    r = k;
                }
            }
            if r == usize::MAX {
                // confirm on fresh factors before declaring optimality
                if since_refactor == 0 && !reused {
                    return self.finish(LpStatus::Optimal, iters);
                }
                if since_refactor < REFACTOR_EVERY / 4 && self.residual_ok() {
                    return self.finish(LpStatus::Optimal, iters);
                }
                reused = false;
                if !self.refactor_or_repair() {
                    return self.finish(LpStatus::IterationLimit, iters);
                }
                since_refactor = 0;
                self.recompute_duals();
                self.fix_dual_signs();
                self.recompute_primal();
                continue;
            }
            if iters >= limit {
                return self.finish(LpStatus::IterationLimit, iters);
            }
            let leave = self.basic[r];
            let below = self.x[leave] < self.lower[leave];
            let target = if below {
                self.lower[leave]
            } else {
                self.upper[leave]
            };

            let rho: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let alpha_row: Vec<f64> = (0..total)
                .map(|j| {
                    if self.pos[j] == usize::MAX {
                        self.dot_col(&rho, j)
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut cand: Vec<(usize, f64, f64)> = Vec::new();
            let mut theta_max = f64::INFINITY;
            for j in 0..total {
                let alpha = alpha_row[j];
                if self.pos[j] != usize::MAX
                    || self.lower[j] == self.upper[j]
                    || alpha.abs() <= PIVOT_TOL
                {
                    continue;
                }
                let up = self.at_upper[j];
                let eligible = if below {
                    up == (alpha > 0.0)
                } else {
                    up == (alpha < 0.0)
                };
                if !eligible {
                    continue;
                }
                let dj = if up {
                    (-self.d[j]).max(0.0)
                } else {
                    self.d[j].max(0.0)
                };
                theta_max = theta_max.min((dj + DUAL_TOL) / alpha.abs());
                cand.push((j, alpha, dj));
            }
            if cand.is_empty() {
                return self.finish(LpStatus::Infeasible, iters);
            }
            let mut q = usize::MAX;
            let mut best = 0.0;
            for &(j, alpha, dj) in &cand {
                if dj / alpha.abs() <= theta_max && alpha.abs() > best {
                    best = alpha.abs();
                    q = j;
                }
            }

            let col = self.ftran(q);
            let arq = col[r];
            if arq.abs() <= PIVOT_TOL {
                // row and column disagree: factors have drifted
                if !self.refactor_or_repair() {
                    return self.finish(LpStatus::IterationLimit, iters);
                }
                since_refactor = 0;
                self.recompute_duals();
                self.fix_dual_signs();
                self.recompute_primal();
                iters += 1;
                continue;
            }

            // primal step
            let delta = (self.x[leave] - target) / arq;
            self.x[q] += delta;
            for i in 0..m {
                self.x[self.basic[i]] -= col[i] * delta;
            }
            self.x[leave] = target;
            self.at_upper[leave] = !below;

            // dual step
            let theta_d = self.d[q] / arq;
            if theta_d != 0.0 {
                for j in 0..total {
                    if self.pos[j] == usize::MAX && alpha_row[j] != 0.0 {
                        self.d[j] -= theta_d * alpha_row[j];
                    }
                }
            }
            self.d[q] = 0.0;
            self.d[leave] = -theta_d;

            // basis inverse update
            let prow: Vec<f64> = self.binv[r * m..(r + 1) * m]
                .iter()
                .map(|v| v / arq)
                .collect();
            for i in 0..m {
                if i == r {
                    continue;
                }
                let f = col[i];
                if f != 0.0 {
                    for k in 0..m {
                        self.binv[i * m + k] -= f * prow[k];
                    }
                }
            }
            self.binv[r * m..(r + 1) * m].copy_from_slice(&prow);
            self.pos[leave] = usize::MAX;
            self.pos[q] = r;
            self.basic[r] = q;

            iters += 1;
            since_refactor += 1;
            if since_refactor >= REFACTOR_EVERY {
                if !self.refactor_or_repair() {
                    return self.finish(LpStatus::IterationLimit, iters);
                }
                since_refactor = 0;
                self.recompute_duals();
                self.fix_dual_signs();
                self.recompute_primal();
            }
        }
    }

    fn finish(self, status: LpStatus, iterations: usize) -> LpSolution {
        let n = self.lp.n;
        let x: Vec<f64> = (0..n)
            .map(|j| self.x[j].clamp(self.lp.col_lower[j], self.lp.col_upper[j]))
            .collect();
        let objective = x.iter().zip(&self.lp.cost).map(|(a, b)| a * b).sum();
        LpSolution {
            status,
            x,
            objective,
            basis: Basis {
                basic: self.basic,
                at_upper: self.at_upper,
                inverse: Some(Arc::new(self.binv)),
            },
            iterations,
        }
    }
}

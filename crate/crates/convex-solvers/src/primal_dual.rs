//! First-order primal-dual (Chambolle–Pock) engine.
//!
//! Solves
//!
//! ```text
//! min_x  Σ_b F_b(K_b x − r_b) + Σ_j g_j(x_j)
//! ```
//!
//! where each block `F_b` is a weighted squared norm, a weighted ℓ1 norm, an
//! equality constraint or a `≤ 0` constraint, and every `g_j` is
//! `c x + q x² + h·max(0, x − a)²` restricted to `[l, u]`. All proximal maps
//! have closed forms, and the dual iterate always yields a valid lower
//! bound on the optimum.

use tomo_core::exec::Exec;
use tomo_core::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlockKind {
    /// `w·‖u‖²`
    LeastSquares { weight: f64 },
    /// `λ·‖u‖₁`
    L1 { weight: f64 },
    /// `u = 0`
    Equal,
    /// `u ≤ 0`
    LessEqual,
}

/// `F(K x − offset)`
#[derive(Clone, Debug)]
pub struct Block {
    pub op: CsrMatrix,
    pub offset: Vec<f64>,
    pub kind: BlockKind,
}

impl Block {
    pub fn new(op: CsrMatrix, offset: Vec<f64>, kind: BlockKind) -> Self {
        assert_eq!(op.rows(), offset.len());
        Block { op, offset, kind }
    }

    fn value(&self, kx: &[f64]) -> f64 {
        let u = kx.iter().zip(&self.offset).map(|(a, b)| a - b);
        match self.kind {
            BlockKind::LeastSquares { weight } => weight * u.map(|v| v * v).sum::<f64>(),
            BlockKind::L1 { weight } => weight * u.map(f64::abs).sum::<f64>(),
            BlockKind::Equal | BlockKind::LessEqual => 0.0,
        }
    }

    fn violation(&self, kx: &[f64]) -> f64 {
        let u = kx.iter().zip(&self.offset).map(|(a, b)| a - b);
        match self.kind {
            BlockKind::Equal => u.map(f64::abs).fold(0.0, f64::max),
            BlockKind::LessEqual => u.fold(0.0, f64::max),
            _ => 0.0,
        }
    }

    /// `F*(y) + ⟨y, offset⟩`, assuming `y` lies in the conjugate's domain
    /// (guaranteed by the proximal step).
    fn conjugate(&self, y: &[f64]) -> f64 {
        let lin: f64 = y.iter().zip(&self.offset).map(|(a, b)| a * b).sum();
        match self.kind {
            BlockKind::LeastSquares { weight } => {
                lin + y.iter().map(|v| v * v).sum::<f64>() / (4.0 * weight)
            }
            _ => lin,
        }
    }
}

/// Separable part `g_j(x) = c x + q x² + h·max(0, x − a)²` on `[l, u]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Separable {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub linear: Vec<f64>,
    pub quadratic: Vec<f64>,
    pub hinge_weight: Vec<f64>,
    pub hinge_at: Vec<f64>,
}

impl Separable {
    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let n = lower.len();
        assert_eq!(upper.len(), n);
        Separable {
            lower,
            upper,
            linear: vec![0.0; n],
            quadratic: vec![0.0; n],
            hinge_weight: vec![0.0; n],
            hinge_at: vec![f64::INFINITY; n],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (0..self.len())
            .map(|j| {
                let h = if self.hinge_weight[j] > 0.0 {
                    self.hinge_weight[j] * (x[j] - self.hinge_at[j]).max(0.0).powi(2)
                } else {
                    0.0
                };
                self.linear[j] * x[j] + self.quadratic[j] * x[j] * x[j] + h
            })
            .sum()
    }

    fn piece(&self, j: usize) -> Piece {
        Piece {
            c: self.linear[j],
            q: self.quadratic[j],
            h: self.hinge_weight[j],
            a: self.hinge_at[j],
            l: self.lower[j],
            u: self.upper[j],
        }
    }
}

#[derive(Clone, Copy)]
struct Piece {
    c: f64,
    q: f64,
    h: f64,
    a: f64,
    l: f64,
    u: f64,
}

impl Piece {
    fn eval(&self, x: f64) -> f64 {
        let hinge = if self.h > 0.0 {
            self.h * (x - self.a).max(0.0).powi(2)
        } else {
            0.0
        };
        self.c * x + self.q * x * x + hinge
    }

    /// Minimizer of `(c + shift)·x + (q + extra_q)·x² + h·max(0, x − a)²`
    /// over `[l, u]`; may be infinite when the interval is unbounded.
    fn argmin(&self, shift: f64, extra_q: f64) -> f64 {
        let c = self.c + shift;
        let q = self.q + extra_q;
        let left = if q > 0.0 {
            -c / (2.0 * q)
        } else if c > 0.0 {
            f64::NEG_INFINITY
        } else if c < 0.0 {
            f64::INFINITY
        } else {
            self.a.min(self.u).max(self.l)
        };
        let x = if left <= self.a || self.h <= 0.0 {
            left
        } else {
            (2.0 * self.h * self.a - c) / (2.0 * (q + self.h))
        };
        x.clamp(self.l, self.u)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    /// Per-row / per-column steps `σᵢ = 1/Σⱼ|Kᵢⱼ|`, `τⱼ = 1/Σᵢ|Kᵢⱼ|`.
    Diagonal,
    /// Scalar steps `τ = σ = 0.99/‖K‖` with `‖K‖` from power iteration.
    OperatorNorm { power_iters: usize },
}

#[derive(Clone, Debug)]
pub struct PdOptions {
    pub max_iters: usize,
    /// Relative objective change (or relative duality gap) that ends the run.
    pub tol: f64,
    pub min_iters: usize,
    pub check_every: usize,
    /// Largest constraint violation accepted at convergence.
    pub feas_tol: f64,
    pub steps: StepRule,
    /// Rebalance primal and dual steps from their residuals at every
    /// checkpoint, with geometrically decaying adjustments.
    pub adaptive: bool,
    pub exec: Exec,
    pub trace: bool,
}

impl Default for PdOptions {
    fn default() -> Self {
        PdOptions {
            max_iters: 20_000,
            tol: 1e-6,
            min_iters: 100,
            check_every: 10,
            feas_tol: 1e-6,
            steps: StepRule::Diagonal,
            adaptive: true,
            exec: Exec::Parallel,
            trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    pub best_objective: f64,
    pub dual_bound: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct PdResult {
    /// Best feasible iterate seen at a checkpoint.
    pub x: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub objective: f64,
    /// Best lower bound on the optimal value found along the run.
    pub dual_bound: f64,
    pub iterations: usize,
    pub converged: bool,
    pub max_violation: f64,
    pub trace: Vec<TracePoint>,
}

#[derive(Clone, Debug)]
pub struct PdProblem {
    pub blocks: Vec<Block>,
    pub g: Separable,
}

impl PdProblem {
    pub fn n(&self) -> usize {
        self.g.len()
    }

    fn apply(&self, x: &[f64], exec: Exec) -> Vec<Vec<f64>> {
        self.blocks.iter().map(|b| b.op.mul(x, exec)).collect()
    }

    fn apply_t(&self, y: &[Vec<f64>], exec: Exec) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (b, yb) in self.blocks.iter().zip(y) {
            let part = b.op.mul_t(yb, exec);
            for (o, p) in out.iter_mut().zip(part) {
                *o += p;
            }
        }
        out
    }

    /// Objective value and largest constraint violation at `x`.
    pub fn evaluate(&self, x: &[f64], exec: Exec) -> (f64, f64) {
        let kx = self.apply(x, exec);
        self.evaluate_with(x, &kx)
    }

    fn evaluate_with(&self, x: &[f64], kx: &[Vec<f64>]) -> (f64, f64) {
        let mut obj = self.g.value(x);
        let mut viol = 0.0f64;
        for (b, k) in self.blocks.iter().zip(kx) {
            obj += b.value(k);
            viol = viol.max(b.violation(k));
        }
        (obj, viol)
    }

    /// Lagrangian dual value for a dual point in the conjugate domain; a
    /// lower bound on the optimum (possibly −∞).
    pub fn dual_value(&self, y: &[Vec<f64>], kty: &[f64]) -> f64 {
        let mut d = 0.0;
        for (b, yb) in self.blocks.iter().zip(y) {
            d -= b.conjugate(yb);
        }
        // −G*(−Kᵀy) = min_x g(x) + ⟨Kᵀy, x⟩
        for (j, &v) in kty.iter().enumerate() {
            let p = self.g.piece(j);
            let x = p.argmin(v, 0.0);
            if !x.is_finite() {
                return f64::NEG_INFINITY;
            }
            d += p.eval(x) + v * x;
        }
        d
    }

    fn steps(&self, rule: StepRule, exec: Exec) -> (Vec<f64>, Vec<Vec<f64>>) {
        match rule {
            StepRule::Diagonal => {
                let mut col = vec![0.0; self.n()];
                let sigma = self
                    .blocks
                    .iter()
                    .map(|b| {
                        for (c, s) in col.iter_mut().zip(b.op.col_abs_sums()) {
                            *c += s;
                        }
                        b.op.row_abs_sums()
                            .into_iter()
                            .map(|s| if s > 0.0 { 1.0 / s } else { 1.0 })
                            .collect()
                    })
                    .collect();
                let tau = col
                    .into_iter()
                    .map(|s| if s > 0.0 { 1.0 / s } else { 1.0 })
                    .collect();
                (tau, sigma)
            }
            StepRule::OperatorNorm { power_iters } => {
                let norm = self.operator_norm(power_iters, exec).max(1e-12);
                let s = 0.99 / norm;
                (
                    vec![s; self.n()],
                    self.blocks.iter().map(|b| vec![s; b.op.rows()]).collect(),
                )
            }
        }
    }

    /// Primal and dual residuals of the last step in the step-size metric.
    #[allow(clippy::too_many_arguments)]
    fn residuals(
        &self,
        dx: &[f64],
        y_old: &[Vec<f64>],
        y: &[Vec<f64>],
        kty_old: &[f64],
        kx: &[Vec<f64>],
        kxb: &[Vec<f64>],
        tau: &[f64],
        sigma: &[Vec<f64>],
        exec: Exec,
    ) -> (f64, f64) {
        let kty = self.apply_t(y, exec);
        let p: f64 = (0..dx.len())
            .map(|j| tau[j] * (dx[j] / tau[j] - (kty_old[j] - kty[j])).powi(2))
            .sum();
        let mut d = 0.0;
        for b in 0..self.blocks.len() {
            for i in 0..y[b].len() {
                // K(x_old − x) = Kx − Kx̄
                d += sigma[b][i]
                    * ((y_old[b][i] - y[b][i]) / sigma[b][i] - (kx[b][i] - kxb[b][i])).powi(2);
            }
        }
        (p.sqrt(), d.sqrt())
    }

    /// Power iteration on `KᵀK` from a fixed start vector.
    pub fn operator_norm(&self, iters: usize, exec: Exec) -> f64 {
        let n = self.n();
        let mut v: Vec<f64> = (0..n).map(|j| 1.0 + (j % 7) as f64 * 0.1).collect();
        let mut norm = 0.0;
        for _ in 0..iters.max(1) {
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nv == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|x| *x /= nv);
            let w = self.apply_t(&self.apply(&v, exec), exec);
            norm = w
                .iter()
                .zip(&v)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .max(0.0)
                .sqrt();
            v = w;
        }
        norm
    }

    pub fn solve(&self, opts: &PdOptions, warm: Option<(&[f64], &[Vec<f64>])>) -> PdResult {
        let n = self.n();
        let exec = opts.exec;
        let (mut tau, mut sigma) = self.steps(opts.steps, exec);
        let g = &self.g;

        let mut x: Vec<f64> = match warm {
            Some((x0, _)) => x0.to_vec(),
            None => vec![0.0; n],
        };
        for j in 0..n {
            x[j] = x[j].clamp(g.lower[j], g.upper[j]);
        }
        let mut y: Vec<Vec<f64>> = match warm {
            Some((_, y0)) if y0.len() == self.blocks.len() => y0.to_vec(),
            _ => self.blocks.iter().map(|b| vec![0.0; b.op.rows()]).collect(),
        };

        let mut best_x = x.clone();
        let mut best_obj = f64::INFINITY;
        let mut best_viol = f64::INFINITY;
        let mut best_feasible = false;
        let mut dual_bound = f64::NEG_INFINITY;
        let mut prev_obj = f64::NAN;
        let mut calm_checks = 0;
        let mut converged = false;
        let mut trace = Vec::new();
        let mut iterations = 0;
        let mut x_bar = vec![0.0; n];
        let mut dx = vec![0.0; n];
        let mut adapt = 0.5;

        for it in 1..=opts.max_iters {
            iterations = it;
            let check = it % opts.check_every == 0 || it == opts.max_iters;
            let y_old = (check && opts.adaptive).then(|| y.clone());
            let kty = self.apply_t(&y, exec);
            if it > 1 && (it - 1) % opts.check_every == 0 {
                // y and kty belong to the same dual iterate here
                dual_bound = dual_bound.max(self.dual_value(&y, &kty));
            }
            for j in 0..n {
                let old = x[j];
                let v = old - tau[j] * kty[j];
                let t = tau[j];
                // prox of g at v: argmin g(x) + (x − v)²/(2τ)
                let nx = g.piece(j).argmin(-v / t, 0.5 / t);
                x[j] = nx;
                x_bar[j] = 2.0 * nx - old;
                dx[j] = old - nx;
            }
            let kxb = self.apply(&x_bar, exec);
            for (bi, b) in self.blocks.iter().enumerate() {
                let yb = &mut y[bi];
                let sb = &sigma[bi];
                for i in 0..yb.len() {
                    let s = sb[i];
                    let v = yb[i] + s * (kxb[bi][i] - b.offset[i]);
                    yb[i] = match b.kind {
                        BlockKind::LeastSquares { weight } => v / (1.0 + s / (2.0 * weight)),
                        BlockKind::L1 { weight } => v.clamp(-weight, weight),
                        BlockKind::Equal => v,
                        BlockKind::LessEqual => v.max(0.0),
                    };
                }
            }

            if check {
                let kx = self.apply(&x, exec);
                if let Some(y_old) = &y_old {
                    if adapt > 1e-3 {
                        let (p_res, d_res) =
                            self.residuals(&dx, y_old, &y, &kty, &kx, &kxb, &tau, &sigma, exec);
                        let f = if p_res > 1.5 * d_res {
                            1.0 / (1.0 - adapt)
                        } else if d_res > 1.5 * p_res {
                            1.0 - adapt
                        } else {
                            1.0
                        };
                        if f != 1.0 {
                            tau.iter_mut().for_each(|t| *t *= f);
                            sigma.iter_mut().flatten().for_each(|s| *s /= f);
                            adapt *= 0.95;
                        }
                    }
                }
                let (obj, viol) = self.evaluate_with(&x, &kx);
                let feasible = viol <= opts.feas_tol;
                let better = if feasible {
                    !best_feasible || obj < best_obj
                } else {
                    !best_feasible && viol < best_viol
                };
                if better {
                    best_obj = obj;
                    best_viol = viol;
                    best_feasible = feasible;
                    best_x.copy_from_slice(&x);
                }
                if opts.trace {
                    let residual = self
                        .blocks
                        .iter()
                        .zip(&kx)
                        .find(|(b, _)| matches!(b.kind, BlockKind::LeastSquares { .. }))
                        .map(|(b, k)| {
                            k.iter()
                                .zip(&b.offset)
                                .map(|(a, r)| (a - r) * (a - r))
                                .sum::<f64>()
                                .sqrt()
                        })
                        .unwrap_or(0.0);
                    trace.push(TracePoint {
                        iteration: it,
                        objective: obj,
                        best_objective: best_obj,
                        dual_bound,
                        residual,
                    });
                }
                let scale = obj.abs().max(1e-30);
                if prev_obj.is_finite() && (prev_obj - obj).abs() <= opts.tol * scale {
                    calm_checks += 1;
                } else {
                    calm_checks = 0;
                }
                prev_obj = obj;
                let gap_closed =
                    best_feasible && best_obj - dual_bound <= opts.tol * best_obj.abs().max(1e-30);
                if it >= opts.min_iters && feasible && (calm_checks >= 3 || gap_closed) {
                    converged = true;
                    break;
                }
            }
        }

        let kty = self.apply_t(&y, exec);
        dual_bound = dual_bound.max(self.dual_value(&y, &kty));
        if !best_obj.is_finite() {
            let (obj, viol) = self.evaluate(&best_x, exec);
            best_obj = obj;
            best_viol = viol;
        }
        PdResult {
            x: best_x,
            y,
            objective: best_obj,
            dual_bound,
            iterations,
            converged,
            max_violation: best_viol,
            trace,
        }
    }
}

use std::fmt::Write as _;

use tomo_core::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

/// `lower ≤ Σ coef·x ≤ upper`
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// Diagonal quadratic objective term `coef·x_var²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadTerm {
    pub var: usize,
    pub coef: f64,
}

/// Mixed-binary program with box-bounded variables, ranged linear rows and
/// an objective `constant + c·x + Σ q_k x_k²`.
#[derive(Clone, Debug, PartialEq)]
pub struct MipModel {
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constant: f64,
    pub quad: Vec<QuadTerm>,
}

impl MipModel {
    pub fn new(sense: Sense) -> Self {
        MipModel {
            vars: Vec::new(),
            rows: Vec::new(),
            sense,
            objective: Vec::new(),
            constant: 0.0,
            quad: Vec::new(),
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        kind: VarKind,
    ) -> usize {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            VarKind::Continuous => (lower, upper),
        };
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            kind,
        });
        self.objective.push(0.0);
        self.vars.len() - 1
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(usize, f64)>,
        lower: f64,
        upper: f64,
    ) -> usize {
        self.rows.push(Row {
            name: name.into(),
            terms,
            lower,
            upper,
        });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn binaries(&self) -> impl Iterator<Item = usize> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(j, _)| j)
    }

    pub fn has_quadratic(&self) -> bool {
        self.quad.iter().any(|q| q.coef != 0.0)
    }

    /// Objective value at `x`, quadratic terms included.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.constant
            + self
                .objective
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
            + self
                .quad
                .iter()
                .map(|q| q.coef * x[q.var] * x[q.var])
                .sum::<f64>()
    }

    /// Largest violation of bounds, rows and integrality at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v = 0.0f64;
        for (var, &xv) in self.vars.iter().zip(x) {
            v = v.max(var.lower - xv).max(xv - var.upper);
            if var.kind == VarKind::Binary {
                v = v.max((xv - xv.round()).abs());
            }
        }
        for row in &self.rows {
            let a = row.activity(x);
            v = v.max(row.lower - a).max(a - row.upper);
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        for v in &self.vars {
            if !(v.lower <= v.upper) || !v.lower.is_finite() || !v.upper.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "variable {} has bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
        }
        for r in &self.rows {
            if r.lower > r.upper
                || r.terms
                    .iter()
                    .any(|&(j, a)| j >= self.vars.len() || !a.is_finite())
            {
                return Err(Error::InvalidArgument(format!(
                    "row {} is malformed",
                    r.name
                )));
            }
        }
        if self
            .quad
            .iter()
            .any(|q| q.var >= self.vars.len() || !q.coef.is_finite())
        {
            return Err(Error::InvalidArgument("bad quadratic term".into()));
        }
        Ok(())
    }

    /// CPLEX LP-format text.
    pub fn to_lp_string(&self) -> String {
        let mut s = String::new();
        let name = |j: usize| lp_name(&self.vars[j].name, j);
        s.push_str(match self.sense {
            Sense::Maximize => "Maximize\n",
            Sense::Minimize => "Minimize\n",
        });
        s.push_str(" obj:");
        let mut any = false;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                let _ = write!(s, " {} {} {}", sign(c), c.abs(), name(j));
                any = true;
            }
        }
        if self.has_quadratic() {
            s.push_str(" + [");
            for q in &self.quad {
                let _ = write!(
                    s,
                    " {} {} {} ^ 2",
                    sign(q.coef),
                    2.0 * q.coef.abs(),
                    name(q.var)
                );
            }
            s.push_str(" ] / 2");
            any = true;
        }
        if self.constant != 0.0 || !any {
            let _ = write!(s, " {} {}", sign(self.constant), self.constant.abs());
        }
        s.push_str("\nSubject To\n");
        for (i, r) in self.rows.iter().enumerate() {
            let mut expr = String::new();
            for &(j, a) in &r.terms {
                let _ = write!(expr, " {} {} {}", sign(a), a.abs(), name(j));
            }
            if expr.is_empty() {
                expr.push_str(" 0 ");
            }
            let rn = lp_name(&r.name, i);
            if r.lower == r.upper {
                let _ = writeln!(s, " {rn}:{expr} = {}", r.lower);
            } else {
                if r.lower.is_finite() {
                    let _ = writeln!(s, " {rn}_lo:{expr} >= {}", r.lower);
                }
                if r.upper.is_finite() {
                    let _ = writeln!(s, " {rn}_hi:{expr} <= {}", r.upper);
                }
            }
        }
        s.push_str("Bounds\n");
        for (j, v) in self.vars.iter().enumerate() {
            let _ = writeln!(s, " {} <= {} <= {}", v.lower, name(j), v.upper);
        }
        let bins: Vec<String> = self.binaries().map(name).collect();
        if !bins.is_empty() {
            let _ = writeln!(s, "Binaries\n {}", bins.join(" "));
        }
        s.push_str("End\n");
        s
    }
}

fn sign(v: f64) -> char {
    if v < 0.0 {
        '-'
    } else {
        '+'
    }
}

fn lp_name(name: &str, idx: usize) -> String {
    let clean: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if clean.is_empty() || clean.starts_with(|c: char| c.is_ascii_digit()) {
        format!("v{idx}_{clean}")
    } else {
        clean
    }
}

//! Sparse nonlinear programs assembled from [`Expr`] rows.

use std::ops::Range;

use crate::error::{PlanError, Result};
use crate::expr::{Convexity, Expr, FunctionSet, HessianPattern, Sense};

/// Named contiguous slice of the decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VarBlock {
    pub name: String,
    pub range: Range<usize>,
}

/// Bookkeeping attached to every constraint row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowInfo {
    pub family: &'static str,
    pub convexity: Convexity,
    /// Knot the row belongs to, when it belongs to one.
    pub knot: Option<usize>,
}

/// Incremental builder for [`Nlp`].
#[derive(Debug, Default, Clone)]
pub struct NlpBuilder {
    blocks: Vec<VarBlock>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    initial: Vec<f64>,
    cost: Expr,
    eq: Vec<Expr>,
    eq_info: Vec<RowInfo>,
    ineq: Vec<Expr>,
    ineq_info: Vec<RowInfo>,
}

impl NlpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    /// Appends `count` variables sharing bounds and an initial value; returns the first index.
    pub fn add_vars(&mut self, name: impl Into<String>, count: usize, lower: f64, upper: f64, init: f64) -> usize {
        let start = self.lower.len();
        self.lower.extend(std::iter::repeat_n(lower, count));
        self.upper.extend(std::iter::repeat_n(upper, count));
        self.initial.extend(std::iter::repeat_n(init, count));
        let name = name.into();
        match self.blocks.last_mut() {
            Some(b) if b.name == name && b.range.end == start => b.range.end += count,
            _ => self.blocks.push(VarBlock {
                name,
                range: start..start + count,
            }),
        }
        start
    }

    pub fn set_initial(&mut self, index: usize, value: f64) {
        self.initial[index] = value;
    }

    pub fn set_bounds(&mut self, index: usize, lower: f64, upper: f64) {
        self.lower[index] = lower;
        self.upper[index] = upper;
    }

    pub fn add_cost(&mut self, e: Expr) {
        self.cost += e;
    }

    /// `e == 0`.
    pub fn add_eq(&mut self, family: &'static str, knot: Option<usize>, e: Expr) {
        let e = e.compressed();
        let convexity = e.convexity(Sense::Equal);
        self.eq_info.push(RowInfo { family, convexity, knot });
        self.eq.push(e);
    }

    /// `e <= 0`.
    pub fn add_le(&mut self, family: &'static str, knot: Option<usize>, e: Expr) {
        let e = e.compressed();
        let convexity = e.convexity(Sense::LessEqual);
        self.ineq_info.push(RowInfo { family, convexity, knot });
        self.ineq.push(e);
    }

    pub fn finish(mut self) -> Result<Nlp> {
        self.cost = self.cost.compressed();
        let n = self.lower.len();
        for (i, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo > hi || lo.is_nan() || hi.is_nan() {
                return Err(PlanError::Structure(format!("variable {i} has empty bounds [{lo}, {hi}]")));
            }
        }
        let check = |e: &Expr| e.support().last().is_none_or(|&v| v < n);
        if !check(&self.cost) || !self.eq.iter().all(check) || !self.ineq.iter().all(check) {
            return Err(PlanError::Structure("expression references an undeclared variable".into()));
        }
        let mut hessian = HessianPattern::default();
        let objective = FunctionSet::compile(std::slice::from_ref(&self.cost), &mut hessian);
        let eq = FunctionSet::compile(&self.eq, &mut hessian);
        let ineq = FunctionSet::compile(&self.ineq, &mut hessian);
        Ok(Nlp {
            n,
            blocks: self.blocks,
            lower: self.lower,
            upper: self.upper,
            initial: self.initial,
            cost_expr: self.cost,
            eq_exprs: self.eq,
            ineq_exprs: self.ineq,
            eq_info: self.eq_info,
            ineq_info: self.ineq_info,
            objective,
            eq,
            ineq,
            hessian,
        })
    }
}

/// `min f(x)  s.t.  c(x) = 0,  g(x) <= 0,  lower <= x <= upper`.
#[derive(Debug, Clone)]
pub struct Nlp {
    pub n: usize,
    pub blocks: Vec<VarBlock>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub initial: Vec<f64>,
    pub cost_expr: Expr,
    pub eq_exprs: Vec<Expr>,
    pub ineq_exprs: Vec<Expr>,
    pub eq_info: Vec<RowInfo>,
    pub ineq_info: Vec<RowInfo>,
    pub objective: FunctionSet,
    pub eq: FunctionSet,
    pub ineq: FunctionSet,
    pub hessian: HessianPattern,
}

impl Nlp {
    pub fn num_eq(&self) -> usize {
        self.eq.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq.len()
    }

    pub fn block(&self, name: &str) -> Option<Range<usize>> {
        self.blocks.iter().find(|b| b.name == name).map(|b| b.range.clone())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let mut v = [0.0];
        self.objective.eval(x, &mut v);
        v[0]
    }

    pub fn eq_values(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.num_eq()];
        self.eq.eval(x, &mut v);
        v
    }

    pub fn ineq_values(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.num_ineq()];
        self.ineq.eval(x, &mut v);
        v
    }

    /// Largest violation of equalities, inequalities and bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let eq = self.eq_values(x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let ineq = self.ineq_values(x).iter().fold(0.0f64, |m, v| m.max(*v));
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .fold(0.0f64, |m, (&v, (&lo, &hi))| m.max(lo - v).max(v - hi));
        eq.max(ineq).max(bounds)
    }

    /// Largest violation per constraint family, sorted by family name.
    pub fn violation_by_family(&self, x: &[f64]) -> Vec<(&'static str, f64)> {
        let mut out: Vec<(&'static str, f64)> = Vec::new();
        let mut record = |family: &'static str, v: f64| match out.iter_mut().find(|e| e.0 == family) {
            Some(e) => e.1 = e.1.max(v),
            None => out.push((family, v.max(0.0))),
        };
        for (info, v) in self.eq_info.iter().zip(self.eq_values(x)) {
            record(info.family, v.abs());
        }
        for (info, v) in self.ineq_info.iter().zip(self.ineq_values(x)) {
            record(info.family, v);
        }
        out.sort_by(|a, b| a.0.cmp(b.0));
        out
    }

    /// Number of rows of each convexity class, over equalities and inequalities.
    pub fn convexity_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for info in self.eq_info.iter().chain(&self.ineq_info) {
            counts[info.convexity as usize] += 1;
        }
        counts
    }
}

/// Largest relative error of exact first derivatives against central
/// differences (step `1e-6·max(1, |x_i|)`), per constraint family plus "cost".
pub fn derivative_check(nlp: &Nlp, x: &[f64]) -> Vec<(&'static str, f64)> {
    let mut out: Vec<(&'static str, f64)> = Vec::new();
    let mut record = |family: &'static str, err: f64| match out.iter_mut().find(|e| e.0 == family) {
        Some(e) => e.1 = e.1.max(err),
        None => out.push((family, err)),
    };
    let mut xp = x.to_vec();
    let mut check = |e: &Expr, family: &'static str| {
        let d = e.differentiate(x);
        let mut worst = 0.0f64;
        for (k, &i) in d.indices.iter().enumerate() {
            let h = 1e-6 * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let fp = e.eval(&xp);
            xp[i] = x[i] - h;
            let fm = e.eval(&xp);
            xp[i] = x[i];
            let fd = (fp - fm) / (2.0 * h);
            let err = (d.gradient[k] - fd).abs() / d.gradient[k].abs().max(fd.abs()).max(1.0);
            worst = worst.max(err);
        }
        record(family, worst);
    };
    check(&nlp.cost_expr, "cost");
    for (e, info) in nlp.eq_exprs.iter().zip(&nlp.eq_info) {
        check(e, info.family);
    }
    for (e, info) in nlp.ineq_exprs.iter().zip(&nlp.ineq_info) {
        check(e, info.family);
    }
    out.sort_by(|a, b| a.0.cmp(b.0));
    out
}

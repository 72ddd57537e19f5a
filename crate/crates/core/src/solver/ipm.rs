//! Primal-dual interior-point method with a filter line search.
//!
//! Inequalities `g(x) <= 0` get slacks `g(x) + s = 0, s > 0`; variable bounds
//! are handled by logarithmic barriers with their own multipliers. Each Newton
//! step solves the reduced KKT system
//!
//! ```text
//! [ W + Σx + δw   J_Eᵀ   J_Iᵀ        ] [dx ]
//! [ J_E           -δc                ] [dyE]
//! [ J_I                  -Σs⁻¹ - δc  ] [dyI]
//! ```
//!
//! with a quasi-definite LDLᵀ, raising `δw` until the inertia is correct.

use std::time::Instant;

use super::ldl::{sym_matvec, Ldl, SymbolicLdl};
use super::{IterationRecord, SolveOptions, SolveResult, SolveStatus};
use crate::error::{PlanError, Result};
use crate::nlp::Nlp;

const KAPPA_1: f64 = 1e-2;
const KAPPA_2: f64 = 1e-2;
const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const KAPPA_SIGMA: f64 = 1e10;
const S_MAX: f64 = 100.0;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const ETA_PHI: f64 = 1e-8;
const DELTA_SWITCH: f64 = 1.0;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const DELTA_C: f64 = 1e-8;
const STALL_WINDOW: usize = 40;

struct Bound {
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
}

/// Everything evaluated at one primal point.
#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    s: Vec<f64>,
    f: f64,
    c: Vec<f64>,
    g: Vec<f64>,
}

struct Solver<'a> {
    nlp: &'a Nlp,
    opts: &'a SolveOptions,
    bound: Bound,
    obj_scale: f64,
    eq_scale: Vec<f64>,
    ineq_scale: Vec<f64>,
    // KKT structure
    entries: Vec<(usize, usize)>,
    off_xdiag: usize,
    off_je: usize,
    off_ji: usize,
    off_cdiag: usize,
    ldl: Ldl,
    factor_flops: u64,
    work: u64,
    last_delta_w: f64,
}

impl<'a> Solver<'a> {
    fn new(nlp: &'a Nlp, opts: &'a SolveOptions) -> Result<Self> {
        let n = nlp.n;
        let (me, mi) = (nlp.num_eq(), nlp.num_ineq());
        let bound = Bound {
            lower: nlp.lower.iter().map(|&l| l.is_finite().then_some(l)).collect(),
            upper: nlp.upper.iter().map(|&u| u.is_finite().then_some(u)).collect(),
        };
        let mut entries = Vec::new();
        for k in 0..nlp.hessian.len() {
            entries.push((nlp.hessian.rows[k], nlp.hessian.cols[k]));
        }
        let off_xdiag = entries.len();
        entries.extend((0..n).map(|i| (i, i)));
        let off_je = entries.len();
        for r in 0..me {
            for &c in &nlp.eq.jac_cols[nlp.eq.jac_ptr[r]..nlp.eq.jac_ptr[r + 1]] {
                entries.push((n + r, c));
            }
        }
        let off_ji = entries.len();
        for r in 0..mi {
            for &c in &nlp.ineq.jac_cols[nlp.ineq.jac_ptr[r]..nlp.ineq.jac_ptr[r + 1]] {
                entries.push((n + me + r, c));
            }
        }
        let off_cdiag = entries.len();
        entries.extend((n..n + me + mi).map(|i| (i, i)));
        let symbolic = SymbolicLdl::analyze(n + me + mi, &entries)?;
        let factor_flops = symbolic.flops_estimate();
        Ok(Solver {
            nlp,
            opts,
            bound,
            obj_scale: 1.0,
            eq_scale: vec![1.0; me],
            ineq_scale: vec![1.0; mi],
            entries,
            off_xdiag,
            off_je,
            off_ji,
            off_cdiag,
            ldl: Ldl::new(symbolic),
            factor_flops,
            work: 0,
            last_delta_w: 0.0,
        })
    }

    fn n(&self) -> usize {
        self.nlp.n
    }

    fn me(&self) -> usize {
        self.nlp.num_eq()
    }

    fn mi(&self) -> usize {
        self.nlp.num_ineq()
    }

    /// Unscaled values at `x`.
    fn values(&mut self, x: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        self.work += (self.nlp.eq.jac_nnz() + self.nlp.ineq.jac_nnz() + self.nlp.objective.jac_nnz()) as u64;
        (self.nlp.objective_value(x), self.nlp.eq_values(x), self.nlp.ineq_values(x))
    }

    fn point(&mut self, x: Vec<f64>, s: Vec<f64>) -> Point {
        let (f, c, g) = self.values(&x);
        Point { x, s, f, c, g }
    }

    /// Unscaled Jacobian values and objective gradient.
    fn derivatives(&mut self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let nlp = self.nlp;
        self.work += 2 * (nlp.eq.jac_nnz() + nlp.ineq.jac_nnz() + nlp.objective.jac_nnz()) as u64;
        let mut grad = vec![0.0; nlp.n];
        let mut gv = vec![0.0; nlp.objective.jac_nnz()];
        nlp.objective.eval_with_jacobian(x, &mut [0.0], &mut gv);
        for (k, &col) in nlp.objective.jac_cols.iter().enumerate() {
            grad[col] += gv[k];
        }
        let mut je = vec![0.0; nlp.eq.jac_nnz()];
        let mut ji = vec![0.0; nlp.ineq.jac_nnz()];
        nlp.eq.eval_with_jacobian(x, &mut vec![0.0; nlp.num_eq()], &mut je);
        nlp.ineq.eval_with_jacobian(x, &mut vec![0.0; nlp.num_ineq()], &mut ji);
        (grad, je, ji)
    }

    fn scaled_c(&self, p: &Point) -> Vec<f64> {
        p.c.iter().zip(&self.eq_scale).map(|(v, d)| v * d).collect()
    }

    fn scaled_gs(&self, p: &Point) -> Vec<f64> {
        p.g.iter().zip(&self.ineq_scale).zip(&p.s).map(|((v, d), s)| v * d + s).collect()
    }

    /// ℓ1 norm of the scaled constraint residual.
    fn theta(&self, p: &Point) -> f64 {
        self.scaled_c(p).iter().map(|v| v.abs()).sum::<f64>() + self.scaled_gs(p).iter().map(|v| v.abs()).sum::<f64>()
    }

    fn barrier(&self, p: &Point, mu: f64) -> f64 {
        let mut phi = self.obj_scale * p.f;
        for &s in &p.s {
            phi -= mu * s.ln();
        }
        for i in 0..self.n() {
            if let Some(l) = self.bound.lower[i] {
                phi -= mu * (p.x[i] - l).ln();
            }
            if let Some(u) = self.bound.upper[i] {
                phi -= mu * (u - p.x[i]).ln();
            }
        }
        phi
    }

    fn unscaled_violation(&self, p: &Point) -> f64 {
        let e = p.c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        p.g.iter().fold(e, |m, v| m.max(*v))
    }

    fn jt_mul(&self, je: &[f64], ji: &[f64], ye: &[f64], yi: &[f64], out: &mut [f64]) {
        let nlp = self.nlp;
        for r in 0..self.me() {
            let w = ye[r] * self.eq_scale[r];
            for k in nlp.eq.jac_ptr[r]..nlp.eq.jac_ptr[r + 1] {
                out[nlp.eq.jac_cols[k]] += w * je[k];
            }
        }
        for r in 0..self.mi() {
            let w = yi[r] * self.ineq_scale[r];
            for k in nlp.ineq.jac_ptr[r]..nlp.ineq.jac_ptr[r + 1] {
                out[nlp.ineq.jac_cols[k]] += w * ji[k];
            }
        }
    }

    /// Initial point strictly inside the bounds.
    fn push_interior(&self, x: &mut [f64]) {
        for i in 0..self.n() {
            let (l, u) = (self.bound.lower[i], self.bound.upper[i]);
            let pl = l.map(|l| {
                let span = u.map_or(f64::INFINITY, |u| KAPPA_2 * (u - l));
                (KAPPA_1 * l.abs().max(1.0)).min(span)
            });
            let pu = u.map(|u| {
                let span = l.map_or(f64::INFINITY, |l| KAPPA_2 * (u - l));
                (KAPPA_1 * u.abs().max(1.0)).min(span)
            });
            if let (Some(l), Some(u)) = (l, u) {
                if u - l <= 0.0 {
                    // Fixed variable: keep a tiny interior so the barrier stays finite.
                    x[i] = l;
                    continue;
                }
            }
            if let (Some(l), Some(pl)) = (l, pl) {
                x[i] = x[i].max(l + pl);
            }
            if let (Some(u), Some(pu)) = (u, pu) {
                x[i] = x[i].min(u - pu);
            }
        }
    }

    fn run(&mut self) -> Result<SolveResult> {
        let start = Instant::now();
        let nlp = self.nlp;
        let opts = self.opts;
        let (n, me, mi) = (self.n(), self.me(), self.mi());
        let mut log = Vec::new();

        let mut x0 = match &opts.warm_start {
            Some(w) => {
                if w.len() != n {
                    return Err(PlanError::Dimension {
                        what: "warm start",
                        expected: n,
                        got: w.len(),
                    });
                }
                w.clone()
            }
            None => nlp.initial.clone(),
        };
        for i in 0..n {
            if let (Some(l), Some(u)) = (self.bound.lower[i], self.bound.upper[i]) {
                if u <= l {
                    return Err(PlanError::Structure(format!(
                        "variable {i} has a degenerate range; fix it through an equality instead"
                    )));
                }
            }
        }
        self.push_interior(&mut x0);

        let (f0, c0, g0) = self.values(&x0);
        let finite = f0.is_finite() && c0.iter().chain(&g0).all(|v| v.is_finite());
        if !finite {
            return Ok(SolveResult::failed(SolveStatus::Infeasible, x0, start, "non-finite evaluation at the start point"));
        }
        let (grad0, je0, ji0) = self.derivatives(&x0);
        if !grad0.iter().chain(&je0).chain(&ji0).all(|v| v.is_finite()) {
            return Ok(SolveResult::failed(SolveStatus::Infeasible, x0, start, "non-finite derivative at the start point"));
        }
        // Scaling from the start point.
        let gmax = grad0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.obj_scale = if gmax > 100.0 { 100.0 / gmax } else { 1.0 };
        let row_scale = |set: &crate::expr::FunctionSet, vals: &[f64], r: usize| {
            let norm = vals[set.jac_ptr[r]..set.jac_ptr[r + 1]].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if norm > 0.0 {
                (1.0 / norm).clamp(1e-2, 1e2)
            } else {
                1.0
            }
        };
        self.eq_scale = (0..me).map(|r| row_scale(&nlp.eq, &je0, r)).collect();
        self.ineq_scale = (0..mi).map(|r| row_scale(&nlp.ineq, &ji0, r)).collect();

        let s0: Vec<f64> = g0
            .iter()
            .zip(&self.ineq_scale)
            .map(|(g, d)| (-g * d).max(KAPPA_1 * (g * d).abs().max(1.0)))
            .collect();
        let mut p = Point { x: x0, s: s0, f: f0, c: c0, g: g0 };
        let (mut grad, mut je, mut ji) = (grad0, je0, ji0);
        let mut ye = vec![0.0; me];
        let mut v = vec![1.0; mi];
        let mut zl: Vec<f64> = self.bound.lower.iter().map(|l| if l.is_some() { 1.0 } else { 0.0 }).collect();
        let mut zu: Vec<f64> = self.bound.upper.iter().map(|u| if u.is_some() { 1.0 } else { 0.0 }).collect();
        let mut mu = opts.initial_barrier;
        let mu_min = (opts.optimality_tolerance / 10.0).min(1e-9_f64.max(opts.optimality_tolerance / 10.0));
        let mut filter: Vec<(f64, f64)> = Vec::new();
        let theta0 = self.theta(&p);
        let theta_max = 1e4 * theta0.max(1.0);
        let theta_min = 1e-4 * theta0.max(1.0);
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut viol_hist: Vec<f64> = Vec::new();
        let mut consecutive_fail = 0;
        let n_bounds = zl.iter().chain(&zu).filter(|z| **z > 0.0).count();

        let mut iter = 0;
        loop {
            // --- optimality measures ---
            let mut rx: Vec<f64> = grad.iter().map(|g| g * self.obj_scale).collect();
            self.jt_mul(&je, &ji, &ye, &v, &mut rx);
            for i in 0..n {
                rx[i] += zu[i] - zl[i];
            }
            let mult_sum: f64 = ye.iter().chain(&v).chain(&zl).chain(&zu).map(|a| a.abs()).sum();
            let s_d = (mult_sum / ((me + mi + n_bounds).max(1) as f64)).max(S_MAX) / S_MAX;
            let z_sum: f64 = v.iter().chain(&zl).chain(&zu).map(|a| a.abs()).sum();
            let s_c = (z_sum / ((mi + n_bounds).max(1) as f64)).max(S_MAX) / S_MAX;
            let dual_err = rx.iter().fold(0.0f64, |m, r| m.max(r.abs())) / s_d;
            let comp = |mu: f64| {
                let mut e = 0.0f64;
                for r in 0..mi {
                    e = e.max((p.s[r] * v[r] - mu).abs());
                }
                for i in 0..n {
                    if let Some(l) = self.bound.lower[i] {
                        e = e.max(((p.x[i] - l) * zl[i] - mu).abs());
                    }
                    if let Some(u) = self.bound.upper[i] {
                        e = e.max(((u - p.x[i]) * zu[i] - mu).abs());
                    }
                }
                e / s_c
            };
            let scaled_feas = self
                .scaled_c(&p)
                .iter()
                .chain(self.scaled_gs(&p).iter())
                .fold(0.0f64, |m, r| m.max(r.abs()));
            let viol = self.unscaled_violation(&p);
            let kkt = dual_err.max(comp(0.0));
            log.push(IterationRecord {
                iteration: iter,
                objective: p.f,
                feasibility: viol,
                optimality: kkt,
                barrier: mu,
                regularization: self.last_delta_w,
            });
            if viol <= opts.feasibility_tolerance && best.as_ref().is_none_or(|(f, _)| p.f < *f) {
                best = Some((p.f, p.x.clone()));
            }
            if viol <= opts.feasibility_tolerance && kkt <= opts.optimality_tolerance {
                return Ok(self.finish(SolveStatus::Converged, p, kkt, iter, start, log, ""));
            }
            if opts.max_wall_time.is_some_and(|t| start.elapsed().as_secs_f64() > t) {
                let x = best.map(|b| b.1).unwrap_or_else(|| p.x.clone());
                let pt = self.point(x, p.s.clone());
                return Ok(self.finish(SolveStatus::TimedOut, pt, kkt, iter, start, log, "wall-time limit"));
            }
            if iter >= opts.max_iterations {
                return Ok(self.finish(SolveStatus::MaxIterations, p, kkt, iter, start, log, "iteration limit"));
            }
            viol_hist.push(viol);
            if viol_hist.len() > 2 * STALL_WINDOW {
                let k = viol_hist.len() - STALL_WINDOW;
                let before = viol_hist[..k].iter().cloned().fold(f64::INFINITY, f64::min);
                let recent = viol_hist[k..].iter().cloned().fold(f64::INFINITY, f64::min);
                if recent > opts.feasibility_tolerance && recent > (1.0 - 1e-3) * before {
                    return Ok(self.finish(SolveStatus::Infeasible, p, kkt, iter, start, log, "constraint violation stagnated"));
                }
            }

            // --- barrier update ---
            loop {
                let e_mu = dual_err.max(scaled_feas).max(comp(mu));
                if mu > mu_min && e_mu <= KAPPA_EPS * mu {
                    mu = mu_min.max((KAPPA_MU * mu).min(mu.powf(THETA_MU)));
                    filter.clear();
                } else {
                    break;
                }
            }
            let tau = (1.0 - mu).max(0.99);

            // --- Newton system ---
            let dl: Vec<f64> = (0..n).map(|i| self.bound.lower[i].map_or(f64::INFINITY, |l| p.x[i] - l)).collect();
            let du: Vec<f64> = (0..n).map(|i| self.bound.upper[i].map_or(f64::INFINITY, |u| u - p.x[i])).collect();
            let sigma_x: Vec<f64> = (0..n).map(|i| zl[i] / dl[i] + zu[i] / du[i]).collect();
            let sigma_s: Vec<f64> = (0..mi).map(|r| v[r] / p.s[r]).collect();
            let mut vals = vec![0.0; self.entries.len()];
            {
                let h = &mut vals[..nlp.hessian.len()];
                nlp.objective.add_hessian(&p.x, &[self.obj_scale], h);
                let we: Vec<f64> = ye.iter().zip(&self.eq_scale).map(|(y, d)| y * d).collect();
                let wi: Vec<f64> = v.iter().zip(&self.ineq_scale).map(|(y, d)| y * d).collect();
                nlp.eq.add_hessian(&p.x, &we, h);
                nlp.ineq.add_hessian(&p.x, &wi, h);
            }
            for i in 0..n {
                vals[self.off_xdiag + i] = sigma_x[i];
            }
            for r in 0..me {
                for k in nlp.eq.jac_ptr[r]..nlp.eq.jac_ptr[r + 1] {
                    vals[self.off_je + k] = je[k] * self.eq_scale[r];
                }
            }
            for r in 0..mi {
                for k in nlp.ineq.jac_ptr[r]..nlp.ineq.jac_ptr[r + 1] {
                    vals[self.off_ji + k] = ji[k] * self.ineq_scale[r];
                }
                vals[self.off_cdiag + me + r] = -1.0 / sigma_s[r];
            }
            let delta_w = match self.factor_with_inertia(&mut vals) {
                Some(d) => d,
                None => {
                    return Ok(self.finish(SolveStatus::Infeasible, p, kkt, iter, start, log, "KKT matrix could not be regularized"));
                }
            };

            let mut rhs = vec![0.0; n + me + mi];
            for i in 0..n {
                let mut r = grad[i] * self.obj_scale;
                if self.bound.lower[i].is_some() {
                    r -= mu / dl[i];
                }
                if self.bound.upper[i].is_some() {
                    r += mu / du[i];
                }
                rhs[i] = r;
            }
            {
                let (rxs, _) = rhs.split_at_mut(n);
                self.jt_mul(&je, &ji, &ye, &v, rxs);
            }
            for i in 0..n {
                rhs[i] = -rhs[i];
            }
            let cs = self.scaled_c(&p);
            let gs = self.scaled_gs(&p);
            for r in 0..me {
                rhs[n + r] = -cs[r];
            }
            for r in 0..mi {
                rhs[n + me + r] = -gs[r] - (mu / p.s[r] - v[r]) / sigma_s[r];
            }
            // True system (without δc) for refinement; δw stays as the Hessian modification.
            let mut true_vals = vals.clone();
            for k in 0..me + mi {
                true_vals[self.off_cdiag + k] = if k < me { 0.0 } else { -1.0 / sigma_s[k - me] };
            }
            let sol = self.solve_refined(&true_vals, &rhs);
            let dx = &sol[..n];
            let dye = &sol[n..n + me];
            let dyi = &sol[n + me..];
            let ds: Vec<f64> = (0..mi).map(|r| (mu / p.s[r] - v[r] - dyi[r]) / sigma_s[r]).collect();
            let dzl: Vec<f64> = (0..n)
                .map(|i| if self.bound.lower[i].is_some() { mu / dl[i] - zl[i] - zl[i] / dl[i] * dx[i] } else { 0.0 })
                .collect();
            let dzu: Vec<f64> = (0..n)
                .map(|i| if self.bound.upper[i].is_some() { mu / du[i] - zu[i] + zu[i] / du[i] * dx[i] } else { 0.0 })
                .collect();

            // --- fraction to the boundary ---
            let mut alpha_pri = 1.0f64;
            for r in 0..mi {
                if ds[r] < 0.0 {
                    alpha_pri = alpha_pri.min(-tau * p.s[r] / ds[r]);
                }
            }
            for i in 0..n {
                if dx[i] < 0.0 && self.bound.lower[i].is_some() {
                    alpha_pri = alpha_pri.min(-tau * dl[i] / dx[i]);
                }
                if dx[i] > 0.0 && self.bound.upper[i].is_some() {
                    alpha_pri = alpha_pri.min(tau * du[i] / dx[i]);
                }
            }
            let mut alpha_dual = 1.0f64;
            for r in 0..mi {
                if dyi[r] < 0.0 {
                    alpha_dual = alpha_dual.min(-tau * v[r] / dyi[r]);
                }
            }
            for i in 0..n {
                if dzl[i] < 0.0 {
                    alpha_dual = alpha_dual.min(-tau * zl[i] / dzl[i]);
                }
                if dzu[i] < 0.0 {
                    alpha_dual = alpha_dual.min(-tau * zu[i] / dzu[i]);
                }
            }

            // --- filter line search ---
            let theta = self.theta(&p);
            let phi = self.barrier(&p, mu);
            let mut dphi = 0.0;
            for i in 0..n {
                let mut gi = grad[i] * self.obj_scale;
                if self.bound.lower[i].is_some() {
                    gi -= mu / dl[i];
                }
                if self.bound.upper[i].is_some() {
                    gi += mu / du[i];
                }
                dphi += gi * dx[i];
            }
            for r in 0..mi {
                dphi -= mu / p.s[r] * ds[r];
            }
            let acceptable_to_filter = |th: f64, ph: f64| filter.iter().all(|&(ft, fp)| th < ft || ph < fp);
            let alpha_min = {
                let mut a = GAMMA_THETA;
                if dphi < 0.0 {
                    a = a.min(GAMMA_PHI * theta / -dphi);
                    if theta <= theta_min {
                        a = a.min(DELTA_SWITCH * theta.powf(S_THETA) / (-dphi).powf(S_PHI));
                    }
                }
                0.05 * a
            };
            let mut alpha = alpha_pri;
            let mut accepted: Option<(Point, bool)> = None;
            while alpha >= alpha_min {
                let xt: Vec<f64> = (0..n).map(|i| p.x[i] + alpha * dx[i]).collect();
                let st: Vec<f64> = (0..mi).map(|r| p.s[r] + alpha * ds[r]).collect();
                let trial = self.point(xt, st);
                let finite = trial.f.is_finite() && trial.c.iter().chain(&trial.g).all(|v| v.is_finite());
                if finite {
                    let th = self.theta(&trial);
                    let ph = self.barrier(&trial, mu);
                    if th <= theta_max && acceptable_to_filter(th, ph) {
                        let switching = dphi < 0.0 && alpha * (-dphi).powf(S_PHI) > DELTA_SWITCH * theta.powf(S_THETA);
                        if theta <= theta_min && switching {
                            if ph <= phi + ETA_PHI * alpha * dphi {
                                accepted = Some((trial, false));
                                break;
                            }
                        } else if th <= (1.0 - GAMMA_THETA) * theta || ph <= phi - GAMMA_PHI * theta {
                            accepted = Some((trial, true));
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            let (trial, augment, alpha) = match accepted {
                Some((t, aug)) => {
                    consecutive_fail = 0;
                    (t, aug, alpha)
                }
                None => {
                    // Soft recovery: take the full fraction-to-boundary step and
                    // restart the filter from it.
                    consecutive_fail += 1;
                    if consecutive_fail > 8 {
                        return Ok(self.finish(SolveStatus::Infeasible, p, kkt, iter, start, log, "line search failed repeatedly"));
                    }
                    filter.clear();
                    let xt: Vec<f64> = (0..n).map(|i| p.x[i] + alpha_pri * dx[i]).collect();
                    let st: Vec<f64> = (0..mi).map(|r| p.s[r] + alpha_pri * ds[r]).collect();
                    let t = self.point(xt, st);
                    if !(t.f.is_finite() && t.c.iter().chain(&t.g).all(|v| v.is_finite())) {
                        return Ok(self.finish(SolveStatus::Infeasible, p, kkt, iter, start, log, "non-finite evaluation"));
                    }
                    (t, true, alpha_pri)
                }
            };
            if augment {
                filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
            }

            // --- update iterate ---
            for r in 0..me {
                ye[r] += alpha * dye[r];
            }
            for r in 0..mi {
                v[r] += alpha_dual * dyi[r];
            }
            for i in 0..n {
                zl[i] += alpha_dual * dzl[i];
                zu[i] += alpha_dual * dzu[i];
            }
            p = trial;
            // Keep bound multipliers within a band of their primal-dual values.
            for r in 0..mi {
                let target = mu / p.s[r];
                v[r] = v[r].clamp(target / KAPPA_SIGMA, target * KAPPA_SIGMA);
            }
            for i in 0..n {
                if let Some(l) = self.bound.lower[i] {
                    let target = mu / (p.x[i] - l);
                    zl[i] = zl[i].clamp(target / KAPPA_SIGMA, target * KAPPA_SIGMA);
                }
                if let Some(u) = self.bound.upper[i] {
                    let target = mu / (u - p.x[i]);
                    zu[i] = zu[i].clamp(target / KAPPA_SIGMA, target * KAPPA_SIGMA);
                }
            }
            let d = self.derivatives(&p.x);
            grad = d.0;
            je = d.1;
            ji = d.2;
            self.last_delta_w = delta_w;
            iter += 1;
        }
    }

    /// Factorizes, increasing the primal regularization until the matrix has
    /// exactly `n` positive pivots. Returns the regularization used.
    fn factor_with_inertia(&mut self, vals: &mut [f64]) -> Option<f64> {
        let n = self.n();
        let (me, mi) = (self.me(), self.mi());
        for k in 0..me + mi {
            vals[self.off_cdiag + k] -= DELTA_C;
        }
        let base: Vec<f64> = vals[self.off_xdiag..self.off_xdiag + n].to_vec();
        let mut delta_w = 0.0;
        for attempt in 0..60 {
            for i in 0..n {
                vals[self.off_xdiag + i] = base[i] + delta_w;
            }
            self.work += self.factor_flops;
            let ok = matches!(self.ldl.factor(vals), Some(pos) if pos == n);
            if ok {
                if delta_w > 0.0 {
                    self.last_delta_w = delta_w;
                }
                for k in 0..me + mi {
                    vals[self.off_cdiag + k] += DELTA_C;
                }
                return Some(delta_w);
            }
            delta_w = if attempt == 0 {
                if self.last_delta_w == 0.0 {
                    1e-4
                } else {
                    (self.last_delta_w / 3.0).max(1e-20)
                }
            } else if self.last_delta_w == 0.0 {
                delta_w * 100.0
            } else {
                delta_w * 8.0
            };
            if delta_w > 1e40 {
                break;
            }
        }
        None
    }

    /// Solves with the regularized factor and refines against `true_vals`.
    fn solve_refined(&mut self, true_vals: &[f64], rhs: &[f64]) -> Vec<f64> {
        let mut sol = rhs.to_vec();
        self.ldl.solve(&mut sol);
        let nl = self.ldl.symbolic().nnz_l() as u64;
        self.work += 2 * nl;
        let mut resid = vec![0.0; rhs.len()];
        let rnorm = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for _ in 0..3 {
            sym_matvec(&self.entries, true_vals, &sol, &mut resid);
            let mut err = 0.0f64;
            for i in 0..rhs.len() {
                resid[i] = rhs[i] - resid[i];
                err = err.max(resid[i].abs());
            }
            if err <= 1e-12 * rnorm {
                break;
            }
            self.ldl.solve(&mut resid);
            self.work += 2 * nl + self.entries.len() as u64;
            for i in 0..rhs.len() {
                sol[i] += resid[i];
            }
        }
        sol
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        status: SolveStatus,
        p: Point,
        kkt: f64,
        iterations: usize,
        start: Instant,
        log: Vec<IterationRecord>,
        message: &str,
    ) -> SolveResult {
        let max_violation = self.nlp.max_violation(&p.x);
        SolveResult {
            status,
            objective: p.f,
            solution: p.x,
            kkt_residual: kkt,
            max_violation,
            wall_time: start.elapsed().as_secs_f64(),
            iterations,
            work: self.work,
            message: message.to_string(),
            log,
        }
    }
}

/// Solves `nlp` from its initial point (or `options.warm_start`).
pub fn solve(nlp: &Nlp, options: &SolveOptions) -> Result<SolveResult> {
    options.validate()?;
    let mut solver = Solver::new(nlp, options)?;
    solver.run()
}

//! Scalar functions of the decision vector with exact sparse derivatives.
//!
//! Every cost and constraint in the transcriptions is a polynomial of degree at
//! most three, written as an affine part plus products of two or three sparse
//! affine forms. First and second derivatives of such products follow from the
//! product rule, so [`FunctionSet`] evaluates values, Jacobians and Lagrangian
//! Hessians exactly, on sparsity patterns fixed at build time.

use std::collections::HashMap;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{PlanError, Result};

/// Highest polynomial degree accepted by [`Expr`].
pub const MAX_DEGREE: usize = 3;

/// Sparse affine form `constant + sum(a_i x_i)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(index: usize) -> Self {
        Self::term(index, 1.0)
    }

    pub fn term(index: usize, coef: f64) -> Self {
        Self {
            constant: 0.0,
            terms: vec![(index, coef)],
        }
    }

    /// `sum(coefs_i * x_{start + i})`.
    pub fn dot(start: usize, coefs: &[f64]) -> Self {
        Self {
            constant: 0.0,
            terms: coefs.iter().enumerate().map(|(i, &a)| (start + i, a)).collect(),
        }
    }

    pub fn add_term(&mut self, index: usize, coef: f64) {
        self.terms.push((index, coef));
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|&(_, a)| a == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            constant: self.constant * s,
            terms: self.terms.iter().map(|&(i, a)| (i, a * s)).collect(),
        }
    }

    /// Merges duplicate indices, drops zero coefficients, sorts by index.
    pub fn compress(mut self) -> Self {
        self.terms.sort_by_key(|&(i, _)| i);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (i, a) in self.terms {
            match out.last_mut() {
                Some((j, b)) if *j == i => *b += a,
                _ => out.push((i, a)),
            }
        }
        out.retain(|&(_, a)| a != 0.0);
        self.terms = out;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, &(i, a)| acc + a * x[i])
    }
}

impl Add for Affine {
    type Output = Affine;
    fn add(mut self, rhs: Affine) -> Affine {
        self.constant += rhs.constant;
        self.terms.extend(rhs.terms);
        self
    }
}

impl Sub for Affine {
    type Output = Affine;
    fn sub(self, rhs: Affine) -> Affine {
        self + rhs.scaled(-1.0)
    }
}

impl Neg for Affine {
    type Output = Affine;
    fn neg(self) -> Affine {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for Affine {
    type Output = Affine;
    fn mul(self, s: f64) -> Affine {
        self.scaled(s)
    }
}

impl Add<f64> for Affine {
    type Output = Affine;
    fn add(mut self, c: f64) -> Affine {
        self.constant += c;
        self
    }
}

/// `coef * prod(factors)` with two or three non-constant factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Product {
    pub coef: f64,
    pub factors: Vec<Affine>,
}

impl Product {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.factors.iter().fold(self.coef, |acc, f| acc * f.eval(x))
    }
}

/// Polynomial of degree <= 3 in the decision variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Expr {
    pub affine: Affine,
    pub products: Vec<Product>,
}

/// Convexity of a constraint as emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Convexity {
    Affine,
    ConvexQuadratic,
    NonConvex,
}

/// Constraint sense: `expr == 0` or `expr <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Equal,
    LessEqual,
}

impl From<Affine> for Expr {
    fn from(affine: Affine) -> Self {
        Expr {
            affine,
            products: Vec::new(),
        }
    }
}

impl Expr {
    pub fn constant(c: f64) -> Self {
        Affine::constant(c).into()
    }

    pub fn degree(&self) -> usize {
        let prod = self.products.iter().map(|p| p.factors.len()).max().unwrap_or(0);
        if prod > 0 {
            prod
        } else if self.affine.is_constant() {
            0
        } else {
            1
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Expr {
            affine: self.affine.scaled(s),
            products: self
                .products
                .iter()
                .map(|p| Product {
                    coef: p.coef * s,
                    factors: p.factors.clone(),
                })
                .collect(),
        }
    }

    /// Product of two affine forms, folding constant factors into the coefficient.
    pub fn product(factors: &[Affine], coef: f64) -> Result<Self> {
        let mut out = Expr::constant(0.0);
        out.push_product(coef, factors.to_vec())?;
        Ok(out)
    }

    /// `a * a`.
    pub fn square(a: &Affine) -> Self {
        Self::product(&[a.clone(), a.clone()], 1.0).expect("degree 2 is supported")
    }

    fn push_product(&mut self, coef: f64, factors: Vec<Affine>) -> Result<()> {
        let mut coef = coef;
        let mut kept = Vec::with_capacity(factors.len());
        for f in factors {
            let f = f.compress();
            if f.is_constant() {
                coef *= f.constant;
            } else {
                kept.push(f);
            }
        }
        if coef == 0.0 {
            return Ok(());
        }
        match kept.len() {
            0 => self.affine.constant += coef,
            1 => {
                let f = kept.pop().unwrap().scaled(coef);
                self.affine = std::mem::take(&mut self.affine) + f;
            }
            k if k <= MAX_DEGREE => self.products.push(Product { coef, factors: kept }),
            k => {
                return Err(PlanError::UnsupportedExpression(format!(
                    "product of degree {k} exceeds the supported degree {MAX_DEGREE}"
                )))
            }
        }
        Ok(())
    }

    /// Multiplies two expressions; fails at build time if the degree exceeds three.
    pub fn try_mul(&self, rhs: &Expr) -> Result<Expr> {
        let mut out = Expr::constant(0.0);
        let lhs_terms = self.split_terms();
        let rhs_terms = rhs.split_terms();
        for (ca, fa) in &lhs_terms {
            for (cb, fb) in &rhs_terms {
                let mut factors = fa.clone();
                factors.extend(fb.iter().cloned());
                out.push_product(ca * cb, factors)?;
            }
        }
        Ok(out)
    }

    /// Affine part and products as `(coef, factors)` pairs.
    fn split_terms(&self) -> Vec<(f64, Vec<Affine>)> {
        let mut terms = vec![(1.0, vec![self.affine.clone()])];
        terms.extend(self.products.iter().map(|p| (p.coef, p.factors.clone())));
        terms
    }

    /// Merges duplicate affine terms and drops zero coefficients.
    pub fn compressed(mut self) -> Self {
        self.affine = self.affine.compress();
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.products
            .iter()
            .fold(self.affine.eval(x), |acc, p| acc + p.eval(x))
    }

    /// Sorted, de-duplicated variable indices the expression depends on.
    pub fn support(&self) -> Vec<usize> {
        let mut vars: Vec<usize> = self
            .affine
            .terms
            .iter()
            .map(|t| t.0)
            .chain(self.products.iter().flat_map(|p| p.factors.iter().flat_map(|f| f.terms.iter().map(|t| t.0))))
            .collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    /// Value and first derivative on the fixed pattern [`Expr::support`].
    pub fn differentiate(&self, x: &[f64]) -> Derivative {
        let indices = self.support();
        let pos: HashMap<usize, usize> = indices.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let mut grad = vec![0.0; indices.len()];
        for &(i, a) in &self.affine.terms {
            grad[pos[&i]] += a;
        }
        for p in &self.products {
            let vals: Vec<f64> = p.factors.iter().map(|f| f.eval(x)).collect();
            for (k, f) in p.factors.iter().enumerate() {
                let m = vals
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .fold(p.coef, |acc, (_, v)| acc * v);
                for &(i, a) in &f.terms {
                    grad[pos[&i]] += m * a;
                }
            }
        }
        Derivative {
            value: self.eval(x),
            indices,
            gradient: grad,
        }
    }

    /// Convexity of the constraint `self (sense) 0`.
    pub fn convexity(&self, sense: Sense) -> Convexity {
        if self.products.is_empty() {
            return Convexity::Affine;
        }
        let all_convex_squares = self.products.iter().all(|p| {
            p.factors.len() == 2 && p.coef > 0.0 && p.factors[0].terms == p.factors[1].terms
        });
        match sense {
            Sense::LessEqual if all_convex_squares => Convexity::ConvexQuadratic,
            _ => Convexity::NonConvex,
        }
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(mut self, rhs: Expr) -> Expr {
        self.affine = self.affine + rhs.affine;
        self.products.extend(rhs.products);
        self
    }
}

impl AddAssign for Expr {
    fn add_assign(&mut self, rhs: Expr) {
        let lhs = std::mem::take(self);
        *self = lhs + rhs;
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        self + rhs.scaled(-1.0)
    }
}

impl Add<Affine> for Expr {
    type Output = Expr;
    fn add(mut self, rhs: Affine) -> Expr {
        self.affine = self.affine + rhs;
        self
    }
}

/// Value plus sparse gradient of a scalar function.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub value: f64,
    pub indices: Vec<usize>,
    pub gradient: Vec<f64>,
}

/// Lower-triangular Hessian sparsity shared by every function of a problem.
#[derive(Debug, Clone, Default)]
pub struct HessianPattern {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    slots: HashMap<(usize, usize), usize>,
}

impl HessianPattern {
    pub fn slot(&mut self, a: usize, b: usize) -> usize {
        let key = if a >= b { (a, b) } else { (b, a) };
        if let Some(&s) = self.slots.get(&key) {
            return s;
        }
        let s = self.rows.len();
        self.rows.push(key.0);
        self.cols.push(key.1);
        self.slots.insert(key, s);
        s
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone)]
struct CompiledProduct {
    coef: f64,
    nfactors: usize,
    constants: [f64; 3],
    /// Ranges into `FunctionSet::factor_terms`.
    ranges: [(usize, usize); 3],
    hess: (usize, usize),
}

#[derive(Debug, Clone)]
struct CompiledRow {
    constant: f64,
    lin: (usize, usize),
    products: (usize, usize),
}

/// Factor pairs in the order used by `hess_terms`.
const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// A vector of compiled [`Expr`] rows with a CSR Jacobian pattern and slots into
/// a shared [`HessianPattern`].
#[derive(Debug, Clone)]
pub struct FunctionSet {
    rows: Vec<CompiledRow>,
    /// `(jacobian slot, coef)`.
    lin_terms: Vec<(usize, f64)>,
    products: Vec<CompiledProduct>,
    /// `(variable, coef, jacobian slot)`.
    factor_terms: Vec<(usize, f64, usize)>,
    /// `(hessian slot, pair index, coefficient product)`.
    hess_terms: Vec<(usize, u8, f64)>,
    pub jac_ptr: Vec<usize>,
    pub jac_cols: Vec<usize>,
}

impl FunctionSet {
    pub fn compile(exprs: &[Expr], hessian: &mut HessianPattern) -> Self {
        let mut set = FunctionSet {
            rows: Vec::with_capacity(exprs.len()),
            lin_terms: Vec::new(),
            products: Vec::new(),
            factor_terms: Vec::new(),
            hess_terms: Vec::new(),
            jac_ptr: vec![0],
            jac_cols: Vec::new(),
        };
        for e in exprs {
            let support = e.support();
            let base = set.jac_cols.len();
            let pos: HashMap<usize, usize> =
                support.iter().enumerate().map(|(k, &i)| (i, base + k)).collect();
            set.jac_cols.extend_from_slice(&support);
            set.jac_ptr.push(set.jac_cols.len());

            let lin_start = set.lin_terms.len();
            for &(i, a) in &e.affine.terms {
                set.lin_terms.push((pos[&i], a));
            }
            let prod_start = set.products.len();
            for p in &e.products {
                let mut cp = CompiledProduct {
                    coef: p.coef,
                    nfactors: p.factors.len(),
                    constants: [0.0; 3],
                    ranges: [(0, 0); 3],
                    hess: (0, 0),
                };
                for (k, f) in p.factors.iter().enumerate() {
                    cp.constants[k] = f.constant;
                    let start = set.factor_terms.len();
                    for &(i, a) in &f.terms {
                        set.factor_terms.push((i, a, pos[&i]));
                    }
                    cp.ranges[k] = (start, set.factor_terms.len());
                }
                let hstart = set.hess_terms.len();
                for (pair_idx, &(fa, fb)) in PAIRS.iter().enumerate() {
                    if fb >= cp.nfactors {
                        continue;
                    }
                    for &(u, a) in &p.factors[fa].terms {
                        for &(v, b) in &p.factors[fb].terms {
                            let dup = if u == v { 2.0 } else { 1.0 };
                            set.hess_terms.push((hessian.slot(u, v), pair_idx as u8, a * b * dup));
                        }
                    }
                }
                cp.hess = (hstart, set.hess_terms.len());
                set.products.push(cp);
            }
            set.rows.push(CompiledRow {
                constant: e.affine.constant,
                lin: (lin_start, set.lin_terms.len()),
                products: (prod_start, set.products.len()),
            });
        }
        set
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn jac_nnz(&self) -> usize {
        self.jac_cols.len()
    }

    fn factor_values(&self, p: &CompiledProduct, x: &[f64]) -> [f64; 3] {
        let mut vals = [1.0; 3];
        for (k, v) in vals.iter_mut().enumerate().take(p.nfactors) {
            let (s, e) = p.ranges[k];
            *v = self.factor_terms[s..e]
                .iter()
                .fold(p.constants[k], |acc, &(i, a, _)| acc + a * x[i]);
        }
        vals
    }

    /// Row values.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (r, row) in self.rows.iter().enumerate() {
            let mut v = row.constant;
            let (ps, pe) = self.jac_ptr_range(r);
            let _ = (ps, pe);
            for &(slot, a) in &self.lin_terms[row.lin.0..row.lin.1] {
                v += a * x[self.jac_cols[slot]];
            }
            for p in &self.products[row.products.0..row.products.1] {
                let f = self.factor_values(p, x);
                v += p.coef * f[0] * f[1] * f[2];
            }
            out[r] = v;
        }
    }

    fn jac_ptr_range(&self, r: usize) -> (usize, usize) {
        (self.jac_ptr[r], self.jac_ptr[r + 1])
    }

    /// Row values and Jacobian values in CSR order.
    pub fn eval_with_jacobian(&self, x: &[f64], values: &mut [f64], jac: &mut [f64]) {
        jac.iter_mut().for_each(|v| *v = 0.0);
        for (r, row) in self.rows.iter().enumerate() {
            let mut v = row.constant;
            for &(slot, a) in &self.lin_terms[row.lin.0..row.lin.1] {
                v += a * x[self.jac_cols[slot]];
                jac[slot] += a;
            }
            for p in &self.products[row.products.0..row.products.1] {
                let f = self.factor_values(p, x);
                v += p.coef * f[0] * f[1] * f[2];
                for k in 0..p.nfactors {
                    let m = match (p.nfactors, k) {
                        (2, 0) => p.coef * f[1],
                        (2, _) => p.coef * f[0],
                        (_, 0) => p.coef * f[1] * f[2],
                        (_, 1) => p.coef * f[0] * f[2],
                        _ => p.coef * f[0] * f[1],
                    };
                    let (s, e) = p.ranges[k];
                    for &(_, a, slot) in &self.factor_terms[s..e] {
                        jac[slot] += m * a;
                    }
                }
            }
            values[r] = v;
        }
    }

    /// Adds `sum_r weights[r] * hess(row_r)` into `hess` (lower-triangular slots).
    pub fn add_hessian(&self, x: &[f64], weights: &[f64], hess: &mut [f64]) {
        for (r, row) in self.rows.iter().enumerate() {
            let w = weights[r];
            if w == 0.0 {
                continue;
            }
            for p in &self.products[row.products.0..row.products.1] {
                let f = self.factor_values(p, x);
                let c = w * p.coef;
                let pair_mult = if p.nfactors == 2 {
                    [c, 0.0, 0.0]
                } else {
                    [c * f[2], c * f[1], c * f[0]]
                };
                for &(slot, pair, coef) in &self.hess_terms[p.hess.0..p.hess.1] {
                    hess[slot] += pair_mult[pair as usize] * coef;
                }
            }
        }
    }
}

//! Sparse LDLᵀ factorization of symmetric quasi-definite matrices without
//! pivoting, on a fill-reducing AMD ordering.
//!
//! The symbolic analysis (ordering, elimination tree, column counts) is done
//! once per sparsity pattern; numeric refactorizations reuse it.

use crate::error::{PlanError, Result};

const NONE: usize = usize::MAX;

/// Upper-triangular symmetric pattern in compressed-column form, with a map
/// from caller entries (triplets) to storage positions.
#[derive(Debug, Clone)]
pub struct SymbolicLdl {
    n: usize,
    perm: Vec<usize>,
    /// Permuted upper CSC pattern.
    ap: Vec<usize>,
    ai: Vec<usize>,
    /// Storage position of every caller triplet.
    slot_of: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    lnz: usize,
}

/// Numeric factor `P A Pᵀ = L D Lᵀ`.
#[derive(Debug, Clone)]
pub struct Ldl {
    symbolic: SymbolicLdl,
    ax: Vec<f64>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    positive: usize,
    // workspaces
    y_vals: Vec<f64>,
    y_marked: Vec<bool>,
    y_idx: Vec<usize>,
    elim: Vec<usize>,
    next_in_col: Vec<usize>,
    tmp: Vec<f64>,
}

impl SymbolicLdl {
    /// `entries` are `(row, col)` pairs of a symmetric matrix (either triangle,
    /// duplicates summed). Every diagonal entry must appear.
    pub fn analyze(n: usize, entries: &[(usize, usize)]) -> Result<Self> {
        let mut has_diag = vec![false; n];
        for &(r, c) in entries {
            if r >= n || c >= n {
                return Err(PlanError::Structure(format!("entry ({r}, {c}) outside {n}x{n}")));
            }
            if r == c {
                has_diag[r] = true;
            }
        }
        if let Some(i) = has_diag.iter().position(|d| !d) {
            return Err(PlanError::Structure(format!("missing diagonal entry {i}")));
        }
        // Unpermuted upper pattern for the ordering.
        let (ap0, ai0, _) = upper_csc(n, entries.iter().map(|&(r, c)| (r.min(c), r.max(c))));
        let perm = if n == 0 {
            Vec::new()
        } else {
            let (p, _pinv, _) = amd::order(n, &ap0, &ai0, &amd::Control::default())
                .map_err(|s| PlanError::Structure(format!("ordering failed: {s:?}")))?;
            p
        };
        let mut pinv = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            pinv[i] = k;
        }
        let (ap, ai, slot_of) = upper_csc(
            n,
            entries.iter().map(|&(r, c)| {
                let (a, b) = (pinv[r], pinv[c]);
                (a.min(b), a.max(b))
            }),
        );
        // Elimination tree and column counts.
        let mut work = vec![NONE; n];
        let mut counts = vec![0usize; n];
        let mut etree = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &row in &ai[ap[j]..ap[j + 1]] {
                let mut i = row;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    counts[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + counts[i];
        }
        Ok(SymbolicLdl {
            n,
            perm,
            ap,
            ai,
            slot_of,
            etree,
            lnz: lp[n],
            lp,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.lnz
    }

    /// Rough operation count of one numeric factorization.
    pub fn flops_estimate(&self) -> u64 {
        (0..self.n)
            .map(|i| {
                let c = (self.lp[i + 1] - self.lp[i]) as u64;
                c * c + c + 1
            })
            .sum()
    }

    pub fn nnz_a(&self) -> usize {
        self.ai.len()
    }
}

/// Builds CSC of upper entries `(row <= col)`, summing duplicates; returns the
/// storage slot of each input entry.
fn upper_csc(n: usize, entries: impl Iterator<Item = (usize, usize)>) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let entries: Vec<(usize, usize)> = entries.collect();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by_key(|&k| (entries[k].1, entries[k].0));
    let mut ap = vec![0; n + 1];
    let mut ai = Vec::with_capacity(entries.len());
    let mut slot_of = vec![0; entries.len()];
    let mut last: Option<(usize, usize)> = None;
    for k in order {
        let e = entries[k];
        if last != Some(e) {
            ai.push(e.0);
            ap[e.1 + 1] += 1;
            last = Some(e);
        }
        slot_of[k] = ai.len() - 1;
    }
    for j in 0..n {
        ap[j + 1] += ap[j];
    }
    (ap, ai, slot_of)
}

impl Ldl {
    pub fn new(symbolic: SymbolicLdl) -> Self {
        let n = symbolic.n;
        let nnz = symbolic.nnz_a();
        let lnz = symbolic.lnz;
        Ldl {
            ax: vec![0.0; nnz],
            li: vec![0; lnz],
            lx: vec![0.0; lnz],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            positive: 0,
            y_vals: vec![0.0; n],
            y_marked: vec![false; n],
            y_idx: vec![0; n],
            elim: vec![0; n],
            next_in_col: vec![0; n],
            tmp: vec![0.0; n],
            symbolic,
        }
    }

    pub fn symbolic(&self) -> &SymbolicLdl {
        &self.symbolic
    }

    /// Factorizes the matrix with the given triplet values (same order as the
    /// pattern passed to [`SymbolicLdl::analyze`]). Returns the number of
    /// positive pivots, or `None` when a pivot is zero or not finite.
    pub fn factor(&mut self, values: &[f64]) -> Option<usize> {
        let s = &self.symbolic;
        let n = s.n;
        self.ax.iter_mut().for_each(|v| *v = 0.0);
        for (k, &v) in values.iter().enumerate() {
            self.ax[s.slot_of[k]] += v;
        }
        for i in 0..n {
            self.next_in_col[i] = s.lp[i];
            self.y_marked[i] = false;
            self.y_vals[i] = 0.0;
        }
        let mut positive = 0;
        for k in 0..n {
            self.d[k] = 0.0;
            let mut nnz_y = 0;
            for p in s.ap[k]..s.ap[k + 1] {
                let b = s.ai[p];
                if b == k {
                    self.d[k] = self.ax[p];
                    continue;
                }
                self.y_vals[b] = self.ax[p];
                if !self.y_marked[b] {
                    self.y_marked[b] = true;
                    self.elim[0] = b;
                    let mut ne = 1;
                    let mut next = s.etree[b];
                    while next != NONE && next < k {
                        if self.y_marked[next] {
                            break;
                        }
                        self.y_marked[next] = true;
                        self.elim[ne] = next;
                        ne += 1;
                        next = s.etree[next];
                    }
                    while ne > 0 {
                        ne -= 1;
                        self.y_idx[nnz_y] = self.elim[ne];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = self.y_idx[i];
                let end = self.next_in_col[c];
                let yc = self.y_vals[c];
                for j in s.lp[c]..end {
                    self.y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[end] = k;
                let l = yc * self.dinv[c];
                self.lx[end] = l;
                self.d[k] -= yc * l;
                self.next_in_col[c] += 1;
                self.y_vals[c] = 0.0;
                self.y_marked[c] = false;
            }
            let dk = self.d[k];
            if dk == 0.0 || !dk.is_finite() {
                return None;
            }
            if dk > 0.0 {
                positive += 1;
            }
            self.dinv[k] = 1.0 / dk;
        }
        self.positive = positive;
        Some(positive)
    }

    pub fn positive_pivots(&self) -> usize {
        self.positive
    }

    /// Solves `A x = b` in place with the current factor.
    pub fn solve(&mut self, b: &mut [f64]) {
        let s = &self.symbolic;
        let x = &mut self.tmp;
        for (k, &i) in s.perm.iter().enumerate() {
            x[k] = b[i];
        }
        for i in 0..s.n {
            let xi = x[i];
            for j in s.lp[i]..s.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..s.n {
            x[i] *= self.dinv[i];
        }
        for i in (0..s.n).rev() {
            let mut v = x[i];
            for j in s.lp[i]..s.lp[i + 1] {
                v -= self.lx[j] * x[self.li[j]];
            }
            x[i] = v;
        }
        for (k, &i) in s.perm.iter().enumerate() {
            b[i] = x[k];
        }
    }
}

/// `y = A x` for a symmetric matrix given as triplets (each off-diagonal entry
/// stored once).
pub fn sym_matvec(entries: &[(usize, usize)], values: &[f64], x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for (&(r, c), &v) in entries.iter().zip(values) {
        y[r] += v * x[c];
        if r != c {
            y[c] += v * x[r];
        }
    }
}

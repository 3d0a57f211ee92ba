use serde::Serialize;

use super::ldl::Ldl;
use crate::error::{Error, Result};

/// Row-compressed sparse matrix built one row at a time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRows {
    n_cols: usize,
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseRows {
    pub fn new(n_cols: usize) -> Self {
        SparseRows {
            n_cols,
            ptr: vec![0],
            idx: Vec::new(),
            val: Vec::new(),
        }
    }

    /// Appends a row; duplicate columns are summed and zeros dropped.
    pub fn push_row(&mut self, coeffs: &[(usize, f64)]) {
        let mut row = coeffs.to_vec();
        row.sort_by_key(|&(j, _)| j);
        let start = self.idx.len();
        for (j, v) in row {
            if self.idx.len() > start && *self.idx.last().unwrap() == j {
                *self.val.last_mut().unwrap() += v;
            } else {
                self.idx.push(j);
                self.val.push(v);
            }
        }
        let mut keep = start;
        for k in start..self.idx.len() {
            if self.val[k] != 0.0 {
                self.idx[keep] = self.idx[k];
                self.val[keep] = self.val[k];
                keep += 1;
            }
        }
        self.idx.truncate(keep);
        self.val.truncate(keep);
        self.ptr.push(keep);
    }

    pub fn n_rows(&self) -> usize {
        self.ptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.ptr[i]..self.ptr[i + 1];
        self.idx[r.clone()].iter().copied().zip(self.val[r].iter().copied())
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.ptr[i + 1] - self.ptr[i]
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows())
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `out += Aᵀ y`.
    pub fn mul_t_add(&self, y: &[f64], out: &mut [f64]) {
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                for (j, v) in self.row(i) {
                    out[j] += v * yi;
                }
            }
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n_rows())
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    fn set_n_cols(&mut self, n: usize) {
        self.n_cols = n;
    }
}

/// A convex quadratic program in standard form:
///
/// ```text
/// minimize    ½ xᵀQx + cᵀx + offset
/// subject to  G x ≤ h,   E x = g,   lo ≤ x ≤ hi
/// ```
///
/// `Q` is kept as upper-triangle entries; bounds may be infinite.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvexProgram {
    num_vars: usize,
    q: Vec<(usize, usize, f64)>,
    c: Vec<f64>,
    offset: f64,
    ineq: SparseRows,
    h: Vec<f64>,
    eq: SparseRows,
    g: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ConvexProgram {
    /// A program over `num_vars` free variables with a zero objective.
    pub fn new(num_vars: usize) -> Self {
        ConvexProgram {
            num_vars,
            q: Vec::new(),
            c: vec![0.0; num_vars],
            offset: 0.0,
            ineq: SparseRows::new(num_vars),
            h: Vec::new(),
            eq: SparseRows::new(num_vars),
            g: Vec::new(),
            lo: vec![f64::NEG_INFINITY; num_vars],
            hi: vec![f64::INFINITY; num_vars],
        }
    }

    /// Appends a variable and returns its index.
    pub fn add_var(&mut self, lo: f64, hi: f64, cost: f64) -> usize {
        self.num_vars += 1;
        self.c.push(cost);
        self.lo.push(lo);
        self.hi.push(hi);
        self.ineq.set_n_cols(self.num_vars);
        self.eq.set_n_cols(self.num_vars);
        self.num_vars - 1
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
    }

    pub fn add_linear(&mut self, j: usize, cost: f64) {
        self.c[j] += cost;
    }

    pub fn add_offset(&mut self, v: f64) {
        self.offset += v;
    }

    /// Adds `v` to `Q[i][j]` and `Q[j][i]` (once when `i == j`).
    pub fn add_quadratic(&mut self, i: usize, j: usize, v: f64) {
        self.q.push((i.min(j), i.max(j), v));
    }

    /// Adds `weight · (Σ a_k x_k + constant)²` to the objective.
    pub fn add_square(&mut self, terms: &[(usize, f64)], constant: f64, weight: f64) {
        for (p, &(i, a)) in terms.iter().enumerate() {
            self.add_quadratic(i, i, 2.0 * weight * a * a);
            for &(j, b) in &terms[p + 1..] {
                self.add_quadratic(i, j, 2.0 * weight * a * b);
            }
            self.c[i] += 2.0 * weight * a * constant;
        }
        self.offset += weight * constant * constant;
    }

    /// Adds the row `Σ a_k x_k ≤ rhs` and returns its index.
    pub fn add_ineq(&mut self, coeffs: &[(usize, f64)], rhs: f64) -> usize {
        self.ineq.push_row(coeffs);
        self.h.push(rhs);
        self.h.len() - 1
    }

    /// Adds the row `Σ a_k x_k = rhs` and returns its index.
    pub fn add_eq(&mut self, coeffs: &[(usize, f64)], rhs: f64) -> usize {
        self.eq.push_row(coeffs);
        self.g.push(rhs);
        self.g.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_ineq(&self) -> usize {
        self.h.len()
    }

    pub fn num_eq(&self) -> usize {
        self.g.len()
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn ineq(&self) -> &SparseRows {
        &self.ineq
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn h_mut(&mut self) -> &mut [f64] {
        &mut self.h
    }

    pub fn eq(&self) -> &SparseRows {
        &self.eq
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// Upper-triangle entries of `Q` with duplicates summed, sorted by
    /// `(row, col)`.
    pub fn q_upper(&self) -> Vec<(usize, usize, f64)> {
        let mut q = self.q.clone();
        q.sort_by_key(|&(i, j, _)| (i, j));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(q.len());
        for (i, j, v) in q {
            match out.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => out.push((i, j, v)),
            }
        }
        out.retain(|e| e.2 != 0.0);
        out
    }

    /// `Q x`.
    pub fn q_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_vars];
        for &(i, j, v) in &self.q {
            out[i] += v * x[j];
            if i != j {
                out[j] += v * x[i];
            }
        }
        out
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let qx = self.q_mul(x);
        let quad: f64 = x.iter().zip(&qx).map(|(a, b)| a * b).sum();
        let lin: f64 = x.iter().zip(&self.c).map(|(a, b)| a * b).sum();
        0.5 * quad + lin + self.offset
    }

    /// Checks dimensions, finiteness, bound order and positive
    /// semidefiniteness of `Q`.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.c) || !finite(&self.h) || !finite(&self.g) || !self.offset.is_finite() {
            return Err(Error::invalid("program data must be finite"));
        }
        if self.ineq.val.iter().chain(&self.eq.val).any(|v| !v.is_finite()) {
            return Err(Error::invalid("constraint coefficients must be finite"));
        }
        for j in 0..n {
            let (lo, hi) = (self.lo[j], self.hi[j]);
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY
            {
                return Err(Error::invalid(format!(
                    "variable {j} has invalid bounds [{lo}, {hi}]"
                )));
            }
        }
        if self
            .q
            .iter()
            .any(|&(i, j, v)| i >= n || j >= n || !v.is_finite())
        {
            return Err(Error::invalid("quadratic term out of range or not finite"));
        }
        if !self.q_is_psd() {
            return Err(Error::invalid("quadratic term is not positive semidefinite"));
        }
        Ok(())
    }

    fn q_is_psd(&self) -> bool {
        let q = self.q_upper();
        if q.iter().all(|&(i, j, _)| i == j) {
            return q.iter().all(|&(_, _, v)| v >= 0.0);
        }
        let n = self.num_vars;
        let scale = q.iter().fold(0.0f64, |m, e| m.max(e.2.abs()));
        let shift = 1e-9 * scale;
        let mut diag = vec![None; n];
        let mut entries = Vec::with_capacity(q.len() + n);
        let mut values = Vec::with_capacity(q.len() + n);
        for &(i, j, v) in &q {
            if i == j {
                diag[i] = Some(entries.len());
            }
            entries.push((i, j));
            values.push(v);
        }
        for (i, d) in diag.iter().enumerate() {
            match d {
                Some(k) => values[*k] += shift,
                None => {
                    entries.push((i, i));
                    values.push(shift);
                }
            }
        }
        let mut ldl = Ldl::new(n, &entries, &vec![1.0; n]);
        ldl.factor(&values, 0.0, shift);
        ldl.min_signed_pivot() >= -1e-7 * scale
    }

    /// Serializable view with matrices as coordinate triplets and infinite
    /// bounds as `null`.
    pub fn dump(&self) -> ProgramDump {
        let opt = |v: &[f64]| -> Vec<Option<f64>> {
            v.iter().map(|x| x.is_finite().then_some(*x)).collect()
        };
        ProgramDump {
            num_vars: self.num_vars,
            quadratic: self.q_upper(),
            linear: self.c.clone(),
            offset: self.offset,
            ineq: self.ineq.triplets(),
            ineq_rhs: self.h.clone(),
            eq: self.eq.triplets(),
            eq_rhs: self.g.clone(),
            lower: opt(&self.lo),
            upper: opt(&self.hi),
        }
    }
}

/// JSON form of a [`ConvexProgram`].
#[derive(Clone, Debug, Serialize)]
pub struct ProgramDump {
    pub num_vars: usize,
    /// Upper triangle of `Q` as `(row, col, value)`.
    pub quadratic: Vec<(usize, usize, f64)>,
    pub linear: Vec<f64>,
    pub offset: f64,
    pub ineq: Vec<(usize, usize, f64)>,
    pub ineq_rhs: Vec<f64>,
    pub eq: Vec<(usize, usize, f64)>,
    pub eq_rhs: Vec<f64>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

//! Sparse LDLᵀ factorization of quasi-definite matrices.
//!
//! The symbolic phase (fill-reducing ordering, elimination tree, column
//! counts) runs once per sparsity pattern; numeric refactorizations then only
//! touch values. Pivots whose sign disagrees with the expected inertia are
//! replaced by a small signed regularization so the factorization never breaks
//! down on the singular systems interior-point methods produce near the end.

const NONE: usize = usize::MAX;

/// Pattern of a symmetric matrix given by its upper triangle, factorized as
/// `P K Pᵀ = L D Lᵀ`.
#[derive(Clone, Debug)]
pub(crate) struct Ldl {
    n: usize,
    /// `perm[k]` is the original index eliminated at step `k`.
    perm: Vec<usize>,
    /// Permuted upper triangle in compressed columns.
    ap: Vec<usize>,
    ai: Vec<usize>,
    ax: Vec<f64>,
    /// Position in `ax` of each input entry.
    map: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    /// Expected pivot signs in permuted order.
    signs: Vec<f64>,
    regularized: usize,
    min_signed_pivot: f64,
}

impl Ldl {
    /// `entries` are `(row, col)` with `row <= col`, without duplicates, and
    /// must include every diagonal. `signs[i]` is +1 or −1: the sign pivot `i`
    /// is expected to have.
    pub(crate) fn new(n: usize, entries: &[(usize, usize)], signs: &[f64]) -> Ldl {
        debug_assert_eq!(signs.len(), n);
        let perm = order(n, entries);
        let mut iperm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }

        let permuted: Vec<(usize, usize)> = entries
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (iperm[i], iperm[j]);
                (a.min(b), a.max(b))
            })
            .collect();
        let mut ap = vec![0; n + 1];
        for &(_, c) in &permuted {
            ap[c + 1] += 1;
        }
        for c in 0..n {
            ap[c + 1] += ap[c];
        }
        let mut next = ap.clone();
        let mut ai = vec![0; entries.len()];
        let mut map = vec![0; entries.len()];
        for (k, &(r, c)) in permuted.iter().enumerate() {
            ai[next[c]] = r;
            map[k] = next[c];
            next[c] += 1;
        }

        let (etree, lnz) = elimination_tree(n, &ap, &ai);
        let mut lp = vec![0; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        Ldl {
            n,
            signs: perm.iter().map(|&p| signs[p]).collect(),
            perm,
            ap,
            ai,
            ax: vec![0.0; entries.len()],
            map,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            regularized: 0,
            min_signed_pivot: f64::INFINITY,
        }
    }

    /// Pivots replaced by regularization in the last factorization.
    #[cfg(test)]
    pub(crate) fn regularized(&self) -> usize {
        self.regularized
    }

    /// Smallest pivot times its expected sign, before regularization.
    pub(crate) fn min_signed_pivot(&self) -> f64 {
        self.min_signed_pivot
    }

    /// Numeric factorization with `values` aligned to the constructor's
    /// `entries`. Pivots with `sign·d < eps` are set to `sign·delta`.
    pub(crate) fn factor(&mut self, values: &[f64], eps: f64, delta: f64) {
        debug_assert_eq!(values.len(), self.map.len());
        for (k, &v) in values.iter().enumerate() {
            self.ax[self.map[k]] = v;
        }
        let n = self.n;
        let mut y_vals = vec![0.0; n];
        let mut y_marker = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        self.regularized = 0;
        self.min_signed_pivot = f64::INFINITY;

        for k in 0..n {
            let mut nnz_y = 0;
            let mut dk = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    dk = self.ax[p];
                    continue;
                }
                y_vals[b] = self.ax[p];
                if y_marker[b] {
                    continue;
                }
                y_marker[b] = true;
                elim[0] = b;
                let mut n_elim = 1;
                let mut next = self.etree[b];
                while next != NONE && next < k {
                    if y_marker[next] {
                        break;
                    }
                    y_marker[next] = true;
                    elim[n_elim] = next;
                    n_elim += 1;
                    next = self.etree[next];
                }
                while n_elim > 0 {
                    n_elim -= 1;
                    y_idx[nnz_y] = elim[n_elim];
                    nnz_y += 1;
                }
            }

            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let slot = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..slot {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[slot] = k;
                let l = yc * self.dinv[c];
                self.lx[slot] = l;
                dk -= yc * l;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_marker[c] = false;
            }

            let sign = self.signs[k];
            self.min_signed_pivot = self.min_signed_pivot.min(sign * dk);
            if sign * dk < eps {
                dk = sign * delta;
                self.regularized += 1;
            }
            self.d[k] = dk;
            self.dinv[k] = 1.0 / dk;
        }
    }

    /// Solves `K x = b` in place using the last factorization.
    pub(crate) fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                xi -= self.lx[j] * x[self.li[j]];
            }
            x[i] = xi;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = x[k];
        }
    }
}

/// Approximate minimum degree ordering of the pattern; identity on failure.
fn order(n: usize, entries: &[(usize, usize)]) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in entries {
        cols[j].push(i);
    }
    let mut ap = Vec::with_capacity(n + 1);
    let mut ai = Vec::with_capacity(entries.len());
    ap.push(0);
    for col in &mut cols {
        col.sort_unstable();
        col.dedup();
        ai.extend_from_slice(col);
        ap.push(ai.len());
    }
    match amd::order(n, &ap, &ai, &amd::Control::default()) {
        Ok((p, _, _)) if p.len() == n => p,
        _ => (0..n).collect(),
    }
}

/// Elimination tree and per-column nonzero counts of `L` for an upper
/// triangle in compressed columns.
fn elimination_tree(n: usize, ap: &[usize], ai: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut work = vec![NONE; n];
    let mut lnz = vec![0; n];
    let mut etree = vec![NONE; n];
    for j in 0..n {
        work[j] = j;
        for &row in &ai[ap[j]..ap[j + 1]] {
            let mut i = row;
            while work[i] != j {
                if etree[i] == NONE {
                    etree[i] = j;
                }
                lnz[i] += 1;
                work[i] = j;
                i = etree[i];
            }
        }
    }
    (etree, lnz)
}

//! Dense linear algebra and brute-force optimality for tiny programs.

use ppz_core::solver::{ConvexProgram, SolveResult};
use rand::Rng;

/// A program's data as dense matrices, with bounds turned into rows.
pub struct Dense {
    pub n: usize,
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub offset: f64,
    /// Inequality rows `a·x ≤ b`, original rows first, then finite bounds.
    pub rows: Vec<(Vec<f64>, f64)>,
    pub n_ineq: usize,
    pub eqs: Vec<(Vec<f64>, f64)>,
}

impl Dense {
    pub fn new(p: &ConvexProgram) -> Dense {
        let n = p.num_vars();
        let mut q = vec![vec![0.0; n]; n];
        for (i, j, v) in p.q_upper() {
            q[i][j] += v;
            if i != j {
                q[j][i] += v;
            }
        }
        let row = |a: &ppz_core::solver::SparseRows, i: usize| {
            let mut r = vec![0.0; n];
            for (j, v) in a.row(i) {
                r[j] += v;
            }
            r
        };
        let mut rows: Vec<(Vec<f64>, f64)> =
            (0..p.num_ineq()).map(|i| (row(p.ineq(), i), p.h()[i])).collect();
        let n_ineq = rows.len();
        for j in 0..n {
            if p.lo()[j].is_finite() {
                let mut r = vec![0.0; n];
                r[j] = -1.0;
                rows.push((r, -p.lo()[j]));
            }
            if p.hi()[j].is_finite() {
                let mut r = vec![0.0; n];
                r[j] = 1.0;
                rows.push((r, p.hi()[j]));
            }
        }
        let eqs = (0..p.num_eq()).map(|i| (row(p.eq(), i), p.g()[i])).collect();
        Dense {
            n,
            q,
            c: p.c().to_vec(),
            offset: p.offset(),
            rows,
            n_ineq,
            eqs,
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut v = self.offset;
        for i in 0..self.n {
            v += self.c[i] * x[i];
            for j in 0..self.n {
                v += 0.5 * x[i] * self.q[i][j] * x[j];
            }
        }
        v
    }

    pub fn feasible(&self, x: &[f64], tol: f64) -> bool {
        self.rows.iter().all(|(a, b)| dot(a, x) <= b + tol)
            && self.eqs.iter().all(|(a, b)| (dot(a, x) - b).abs() <= tol)
    }

    /// Optimal value by enumerating active sets and keeping the best KKT
    /// point. Requires every optimal face to contain a point where the active
    /// system is nonsingular (true for LPs with a vertex and strictly convex
    /// QPs).
    pub fn brute_force_optimum(&self) -> Option<(f64, Vec<f64>)> {
        let k = self.rows.len();
        assert!(k <= 20, "too many rows to enumerate");
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << k) {
            let active: Vec<usize> = (0..k).filter(|&r| mask >> r & 1 == 1).collect();
            if active.len() + self.eqs.len() > self.n {
                continue;
            }
            let cons: Vec<&(Vec<f64>, f64)> = active
                .iter()
                .map(|&r| &self.rows[r])
                .chain(self.eqs.iter())
                .collect();
            let dim = self.n + cons.len();
            let mut m = vec![vec![0.0; dim]; dim];
            let mut rhs = vec![0.0; dim];
            for i in 0..self.n {
                m[i][..self.n].copy_from_slice(&self.q[i]);
                rhs[i] = -self.c[i];
            }
            for (r, (a, b)) in cons.iter().enumerate() {
                for j in 0..self.n {
                    m[j][self.n + r] = a[j];
                    m[self.n + r][j] = a[j];
                }
                rhs[self.n + r] = *b;
            }
            let Some(sol) = gauss_solve(m, rhs) else {
                continue;
            };
            let x = &sol[..self.n];
            let mult_ok = sol[self.n..self.n + active.len()].iter().all(|&l| l >= -1e-9);
            if mult_ok && self.feasible(x, 1e-9) {
                let v = self.objective(x);
                if best.as_ref().map_or(true, |(b, _)| v < *b) {
                    best = Some((v, x.to_vec()));
                }
            }
        }
        best
    }

    /// Independent KKT residual of a solver answer, relative to the data
    /// magnitudes in the same way for every component.
    pub fn kkt_residual(&self, p: &ConvexProgram, r: &SolveResult) -> f64 {
        let x = &r.x;
        let mut primal = 0.0f64;
        let mut comp = 0.0f64;
        let mut stat: Vec<f64> = (0..self.n)
            .map(|i| self.c[i] + dot(&self.q[i], x))
            .collect();
        for (i, (a, b)) in self.rows[..self.n_ineq].iter().enumerate() {
            let z = r.duals_ineq[i];
            primal = primal.max(dot(a, x) - b);
            comp = comp.max(z * (b - dot(a, x)).abs());
            for j in 0..self.n {
                stat[j] += z * a[j];
            }
        }
        for (k, (a, b)) in self.eqs.iter().enumerate() {
            primal = primal.max((dot(a, x) - b).abs());
            for j in 0..self.n {
                stat[j] += r.duals_eq[k] * a[j];
            }
        }
        for j in 0..self.n {
            let (lo, hi) = (p.lo()[j], p.hi()[j]);
            if lo.is_finite() {
                primal = primal.max(lo - x[j]);
                comp = comp.max(r.duals_lower[j] * (x[j] - lo).abs());
            }
            if hi.is_finite() {
                primal = primal.max(x[j] - hi);
                comp = comp.max(r.duals_upper[j] * (hi - x[j]).abs());
            }
            stat[j] += r.duals_upper[j] - r.duals_lower[j];
        }
        let negative = r
            .duals_ineq
            .iter()
            .chain(&r.duals_lower)
            .chain(&r.duals_upper)
            .fold(0.0f64, |m, &v| m.max(-v));
        let dual = stat.iter().fold(negative, |m, v| m.max(v.abs()));
        let scale = 1.0
            + self.c.iter().chain(self.rows.iter().map(|r| &r.1)).fold(0.0f64, |m, v| m.max(v.abs()));
        primal.max(dual).max(comp) / scale
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting; `None` if (near) singular.
pub fn gauss_solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(1.0);
    for k in 0..n {
        let p = (k..n).max_by(|&a, &c| m[a][k].abs().total_cmp(&m[c][k].abs()))?;
        if m[p][k].abs() < 1e-10 * scale {
            return None;
        }
        m.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            if f != 0.0 {
                for j in k..n {
                    m[i][j] -= f * m[k][j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / m[k][k];
    }
    Some(x)
}

/// A random feasible, bounded program: box-bounded variables, inequality rows
/// built around an interior point, optionally a strictly convex quadratic.
pub fn random_program(rng: &mut impl Rng, n: usize, m: usize, quadratic: bool) -> ConvexProgram {
    let mut p = ConvexProgram::new(n);
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for j in 0..n {
        let lo = if rng.gen_bool(0.8) { x0[j] - rng.gen_range(0.1..3.0) } else { f64::NEG_INFINITY };
        let hi = if rng.gen_bool(0.8) || !lo.is_finite() {
            x0[j] + rng.gen_range(0.1..3.0)
        } else {
            f64::INFINITY
        };
        p.set_bounds(j, lo, hi);
        p.add_linear(j, rng.gen_range(-5.0..5.0));
    }
    if quadratic {
        for _ in 0..n {
            let mut terms = Vec::new();
            for j in 0..n {
                if rng.gen_bool(0.6) {
                    terms.push((j, rng.gen_range(-2.0..2.0)));
                }
            }
            p.add_square(&terms, 0.0, 0.5);
        }
        for j in 0..n {
            p.add_quadratic(j, j, 0.1);
        }
    } else {
        // an LP needs every variable bounded for a vertex optimum
        for j in 0..n {
            let lo = p.lo()[j];
            let hi = p.hi()[j];
            p.set_bounds(
                j,
                if lo.is_finite() { lo } else { x0[j] - 2.0 },
                if hi.is_finite() { hi } else { x0[j] + 2.0 },
            );
        }
    }
    for _ in 0..m {
        let mut a: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                a.push((j, rng.gen_range(-3.0..3.0)));
            }
        }
        let ax: f64 = a.iter().map(|&(j, v)| v * x0[j]).sum();
        let slack = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..2.0) };
        p.add_ineq(&a, ax + slack);
    }
    p
}

//! Mehrotra predictor-corrector interior-point method.
//!
//! Bounds are handled as diagonal slack pairs instead of constraint rows, so
//! the Newton system only carries `Q`, `G` and `E`:
//!
//! ```text
//! [ Q + D_b   Gᵀ     Eᵀ ] [dx]
//! [ G        −S/Z    0  ] [dz]
//! [ E         0      0  ] [dy]
//! ```
//!
//! It is factorized with a fixed-pattern sparse LDLᵀ plus small static
//! regularization, and each solve is refined against the unregularized matrix.

use super::ldl::Ldl;
use super::program::{ConvexProgram, SparseRows};
use super::{certify, Residuals, SolveOptions, SolveResult, Status};

const STATIC_REG: f64 = 1e-8;
const DYNAMIC_EPS: f64 = 1e-13;
const DYNAMIC_DELTA: f64 = 1e-7;
const STEP_FRACTION: f64 = 0.99;
const INFEASIBILITY_TOL: f64 = 1e-9;
/// Iterations without halving the best residual before giving up.
const STALL_WINDOW: usize = 60;

/// The presolved and equilibrated problem the iterations run on.
struct Scaled {
    n: usize,
    q: Vec<(usize, usize, f64)>,
    c: Vec<f64>,
    g: SparseRows,
    h: Vec<f64>,
    e: SparseRows,
    b: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    lower: Vec<usize>,
    upper: Vec<usize>,
    /// Column scaling: `x = d ∘ x̃`.
    d: Vec<f64>,
    row_g: Vec<f64>,
    row_e: Vec<f64>,
    cost: f64,
    /// Original inequality row of each scaled inequality row.
    g_rows: Vec<usize>,
    /// Original equality row, or the variable a fixing row pins.
    e_rows: Vec<EqOrigin>,
}

#[derive(Clone, Copy)]
enum EqOrigin {
    Row(usize),
    Fixed(usize),
}

enum Presolved {
    Ready(Scaled),
    Infeasible,
}

fn presolve(p: &ConvexProgram, tol: f64) -> Presolved {
    let n = p.num_vars();
    let mut g = SparseRows::new(n);
    let mut h = Vec::new();
    let mut g_rows = Vec::new();
    for i in 0..p.num_ineq() {
        if p.ineq().row_len(i) == 0 {
            if p.h()[i] < -tol * (1.0 + p.h()[i].abs()) {
                return Presolved::Infeasible;
            }
            continue;
        }
        g.push_row(&p.ineq().row(i).collect::<Vec<_>>());
        h.push(p.h()[i]);
        g_rows.push(i);
    }
    let mut e = SparseRows::new(n);
    let mut b = Vec::new();
    let mut e_rows = Vec::new();
    for i in 0..p.num_eq() {
        if p.eq().row_len(i) == 0 {
            if p.g()[i].abs() > tol * (1.0 + p.g()[i].abs()) {
                return Presolved::Infeasible;
            }
            continue;
        }
        e.push_row(&p.eq().row(i).collect::<Vec<_>>());
        b.push(p.g()[i]);
        e_rows.push(EqOrigin::Row(i));
    }
    let mut lo = p.lo().to_vec();
    let mut hi = p.hi().to_vec();
    for j in 0..n {
        if lo[j] == hi[j] {
            e.push_row(&[(j, 1.0)]);
            b.push(lo[j]);
            e_rows.push(EqOrigin::Fixed(j));
            lo[j] = f64::NEG_INFINITY;
            hi[j] = f64::INFINITY;
        }
    }

    let q = p.q_upper();
    let (d, row_g, row_e) = equilibrate(n, &q, &g, &e);
    let mut qs: Vec<(usize, usize, f64)> =
        q.iter().map(|&(i, j, v)| (i, j, v * d[i] * d[j])).collect();
    let mut c: Vec<f64> = p.c().iter().zip(&d).map(|(c, d)| c * d).collect();
    let norm = qs
        .iter()
        .map(|e| e.2.abs())
        .chain(c.iter().map(|v| v.abs()))
        .fold(0.0f64, f64::max);
    let cost = if norm > 0.0 {
        1.0 / norm.clamp(1e-4, 1e4)
    } else {
        1.0
    };
    for e in &mut qs {
        e.2 *= cost;
    }
    for v in &mut c {
        *v *= cost;
    }

    let scale_rows = |a: &SparseRows, rhs: &mut [f64], r: &[f64]| {
        let mut out = SparseRows::new(n);
        for i in 0..a.n_rows() {
            let row: Vec<(usize, f64)> = a.row(i).map(|(j, v)| (j, v * r[i] * d[j])).collect();
            out.push_row(&row);
            rhs[i] *= r[i];
        }
        out
    };
    let gs = scale_rows(&g, &mut h, &row_g);
    let es = scale_rows(&e, &mut b, &row_e);
    for j in 0..n {
        lo[j] /= d[j];
        hi[j] /= d[j];
    }
    let lower = (0..n).filter(|&j| lo[j].is_finite()).collect();
    let upper = (0..n).filter(|&j| hi[j].is_finite()).collect();
    Presolved::Ready(Scaled {
        n,
        q: qs,
        c,
        g: gs,
        h,
        e: es,
        b,
        lo,
        hi,
        lower,
        upper,
        d,
        row_g,
        row_e,
        cost,
        g_rows,
        e_rows,
    })
}

/// Ruiz equilibration of `[Q Gᵀ Eᵀ; G; E]`: column factors for the
/// variables, row factors for the constraints.
fn equilibrate(
    n: usize,
    q: &[(usize, usize, f64)],
    g: &SparseRows,
    e: &SparseRows,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut d = vec![1.0; n];
    let mut rg = vec![1.0; g.n_rows()];
    let mut re = vec![1.0; e.n_rows()];
    let factor = |norm: f64| {
        if norm > 0.0 {
            (1.0 / norm.sqrt()).clamp(1e-2, 1e2)
        } else {
            1.0
        }
    };
    for _ in 0..15 {
        let mut col = vec![0.0f64; n];
        for &(i, j, v) in q {
            let a = (v * d[i] * d[j]).abs();
            col[i] = col[i].max(a);
            col[j] = col[j].max(a);
        }
        let mut rows_g = vec![0.0f64; g.n_rows()];
        for (i, r) in rows_g.iter_mut().enumerate() {
            for (j, v) in g.row(i) {
                let a = (v * rg[i] * d[j]).abs();
                col[j] = col[j].max(a);
                *r = r.max(a);
            }
        }
        let mut rows_e = vec![0.0f64; e.n_rows()];
        for (i, r) in rows_e.iter_mut().enumerate() {
            for (j, v) in e.row(i) {
                let a = (v * re[i] * d[j]).abs();
                col[j] = col[j].max(a);
                *r = r.max(a);
            }
        }
        let mut converged = true;
        for (dj, nj) in d.iter_mut().zip(&col) {
            converged &= (nj - 1.0).abs() < 0.1 || *nj == 0.0;
            *dj = (*dj * factor(*nj)).clamp(1e-4, 1e4);
        }
        for (r, nr) in rg.iter_mut().zip(&rows_g) {
            converged &= (nr - 1.0).abs() < 0.1;
            *r = (*r * factor(*nr)).clamp(1e-4, 1e4);
        }
        for (r, nr) in re.iter_mut().zip(&rows_e) {
            converged &= (nr - 1.0).abs() < 0.1;
            *r = (*r * factor(*nr)).clamp(1e-4, 1e4);
        }
        if converged {
            break;
        }
    }
    (d, rg, re)
}

/// Primal-dual iterate in scaled space.
#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    s: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    sl: Vec<f64>,
    zl: Vec<f64>,
    su: Vec<f64>,
    zu: Vec<f64>,
}

struct Direction {
    dx: Vec<f64>,
    ds: Vec<f64>,
    dz: Vec<f64>,
    dy: Vec<f64>,
    dsl: Vec<f64>,
    dzl: Vec<f64>,
    dsu: Vec<f64>,
    dzu: Vec<f64>,
}

struct Residual {
    rd: Vec<f64>,
    rp: Vec<f64>,
    re: Vec<f64>,
    rl: Vec<f64>,
    ru: Vec<f64>,
}

/// The Newton system with a fixed pattern and per-iteration diagonals.
struct Kkt {
    dim: usize,
    entries: Vec<(usize, usize)>,
    values: Vec<f64>,
    diag: Vec<usize>,
    q_diag: Vec<f64>,
    ldl: Ldl,
}

impl Kkt {
    fn new(sc: &Scaled) -> Kkt {
        let n = sc.n;
        let m = sc.g.n_rows();
        let p = sc.e.n_rows();
        let dim = n + m + p;
        let mut entries = Vec::with_capacity(dim + sc.q.len() + sc.g.nnz() + sc.e.nnz());
        let mut base = Vec::with_capacity(entries.capacity());
        let mut diag = vec![0; dim];
        let mut q_diag = vec![0.0; n];
        for j in 0..n {
            diag[j] = entries.len();
            entries.push((j, j));
            base.push(0.0);
        }
        for &(i, j, v) in &sc.q {
            if i == j {
                q_diag[i] += v;
            } else {
                entries.push((i, j));
                base.push(v);
            }
        }
        for (offset, a) in [(n, &sc.g), (n + m, &sc.e)] {
            for i in 0..a.n_rows() {
                for (j, v) in a.row(i) {
                    entries.push((j, offset + i));
                    base.push(v);
                }
                diag[offset + i] = entries.len();
                entries.push((offset + i, offset + i));
                base.push(0.0);
            }
        }
        let signs: Vec<f64> = (0..dim).map(|k| if k < n { 1.0 } else { -1.0 }).collect();
        let ldl = Ldl::new(dim, &entries, &signs);
        Kkt {
            dim,
            values: base,
            entries,
            diag,
            q_diag,
            ldl,
        }
    }

    /// Sets the diagonal blocks to `Q + D_b` and `−W` and refactorizes.
    fn factor(&mut self, n: usize, d_b: &[f64], w: &[f64]) {
        for j in 0..n {
            self.values[self.diag[j]] = self.q_diag[j] + d_b[j];
        }
        for (i, wi) in w.iter().enumerate() {
            self.values[self.diag[n + i]] = -wi;
        }
        for k in n + w.len()..self.dim {
            self.values[self.diag[k]] = 0.0;
        }
        let mut reg = self.values.clone();
        for k in 0..self.dim {
            reg[self.diag[k]] += if k < n { STATIC_REG } else { -STATIC_REG };
        }
        self.ldl.factor(&reg, DYNAMIC_EPS, DYNAMIC_DELTA);
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (k, &(i, j)) in self.entries.iter().enumerate() {
            let v = self.values[k];
            out[i] += v * x[j];
            if i != j {
                out[j] += v * x[i];
            }
        }
        out
    }

    /// Solves with iterative refinement against the unregularized matrix.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.ldl.solve(&mut x);
        let rhs_norm = inf_norm(rhs).max(1e-300);
        let mut last = f64::INFINITY;
        for _ in 0..8 {
            let kx = self.mul(&x);
            let mut r: Vec<f64> = rhs.iter().zip(&kx).map(|(b, k)| b - k).collect();
            let err = inf_norm(&r);
            if err <= 1e-14 * rhs_norm || err >= 0.5 * last {
                break;
            }
            last = err;
            self.ldl.solve(&mut r);
            for (xi, ri) in x.iter_mut().zip(&r) {
                *xi += ri;
            }
        }
        x
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

impl Scaled {
    fn q_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for &(i, j, v) in &self.q {
            out[i] += v * x[j];
            if i != j {
                out[j] += v * x[i];
            }
        }
        out
    }

    fn residual(&self, it: &Iterate) -> Residual {
        let mut rd = self.q_mul(&it.x);
        for (r, c) in rd.iter_mut().zip(&self.c) {
            *r += c;
        }
        self.g.mul_t_add(&it.z, &mut rd);
        self.e.mul_t_add(&it.y, &mut rd);
        for (t, &j) in self.lower.iter().enumerate() {
            rd[j] -= it.zl[t];
        }
        for (t, &j) in self.upper.iter().enumerate() {
            rd[j] += it.zu[t];
        }
        let gx = self.g.mul(&it.x);
        let rp = gx
            .iter()
            .zip(&it.s)
            .zip(&self.h)
            .map(|((g, s), h)| g + s - h)
            .collect();
        let ex = self.e.mul(&it.x);
        let re = ex.iter().zip(&self.b).map(|(e, b)| e - b).collect();
        let rl = self
            .lower
            .iter()
            .enumerate()
            .map(|(t, &j)| it.x[j] - self.lo[j] - it.sl[t])
            .collect();
        let ru = self
            .upper
            .iter()
            .enumerate()
            .map(|(t, &j)| it.x[j] + it.su[t] - self.hi[j])
            .collect();
        Residual { rd, rp, re, rl, ru }
    }

    fn pairs(&self) -> usize {
        self.h.len() + self.lower.len() + self.upper.len()
    }

    fn mu(&self, it: &Iterate) -> f64 {
        let k = self.pairs();
        if k == 0 {
            return 0.0;
        }
        (dot(&it.s, &it.z) + dot(&it.sl, &it.zl) + dot(&it.su, &it.zu)) / k as f64
    }

    fn bound_diag(&self, it: &Iterate) -> Vec<f64> {
        let mut d_b = vec![0.0; self.n];
        for (t, &j) in self.lower.iter().enumerate() {
            d_b[j] += it.zl[t] / it.sl[t];
        }
        for (t, &j) in self.upper.iter().enumerate() {
            d_b[j] += it.zu[t] / it.su[t];
        }
        d_b
    }

    /// Solves the Newton system for complementarity targets `rc`, `rcl`,
    /// `rcu` (the desired change is `−rc` in each `s∘z` product).
    fn direction(
        &self,
        kkt: &Kkt,
        it: &Iterate,
        res: &Residual,
        rc: &[f64],
        rcl: &[f64],
        rcu: &[f64],
    ) -> Direction {
        let n = self.n;
        let m = self.h.len();
        let mut rhs = vec![0.0; kkt.dim];
        for j in 0..n {
            rhs[j] = -res.rd[j];
        }
        for (t, &j) in self.lower.iter().enumerate() {
            rhs[j] -= (rcl[t] + it.zl[t] * res.rl[t]) / it.sl[t];
        }
        for (t, &j) in self.upper.iter().enumerate() {
            rhs[j] += (rcu[t] - it.zu[t] * res.ru[t]) / it.su[t];
        }
        for i in 0..m {
            rhs[n + i] = -res.rp[i] + rc[i] / it.z[i];
        }
        for (k, r) in res.re.iter().enumerate() {
            rhs[n + m + k] = -r;
        }
        let sol = kkt.solve(&rhs);
        let dx = sol[..n].to_vec();
        let dz = sol[n..n + m].to_vec();
        let dy = sol[n + m..].to_vec();
        let ds = (0..m)
            .map(|i| (-rc[i] - it.s[i] * dz[i]) / it.z[i])
            .collect();
        let dsl: Vec<f64> = self
            .lower
            .iter()
            .enumerate()
            .map(|(t, &j)| dx[j] + res.rl[t])
            .collect();
        let dzl = (0..dsl.len())
            .map(|t| (-rcl[t] - it.zl[t] * dsl[t]) / it.sl[t])
            .collect();
        let dsu: Vec<f64> = self
            .upper
            .iter()
            .enumerate()
            .map(|(t, &j)| -res.ru[t] - dx[j])
            .collect();
        let dzu = (0..dsu.len())
            .map(|t| (-rcu[t] - it.zu[t] * dsu[t]) / it.su[t])
            .collect();
        Direction {
            dx,
            ds,
            dz,
            dy,
            dsl,
            dzl,
            dsu,
            dzu,
        }
    }

    fn step_to_boundary(it: &Iterate, dir: &Direction) -> f64 {
        [
            max_step(&it.s, &dir.ds),
            max_step(&it.z, &dir.dz),
            max_step(&it.sl, &dir.dsl),
            max_step(&it.zl, &dir.dzl),
            max_step(&it.su, &dir.dsu),
            max_step(&it.zu, &dir.dzu),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }

    fn initial_point(&self, kkt: &mut Kkt) -> Iterate {
        let n = self.n;
        let m = self.h.len();
        let mut d_b = vec![0.0; n];
        let mut rhs = vec![0.0; kkt.dim];
        for j in 0..n {
            rhs[j] = -self.c[j];
        }
        for &j in &self.lower {
            d_b[j] += 1.0;
            rhs[j] += self.lo[j];
        }
        for &j in &self.upper {
            d_b[j] += 1.0;
            rhs[j] += self.hi[j];
        }
        rhs[n..n + m].copy_from_slice(&self.h);
        rhs[n + m..].copy_from_slice(&self.b);
        kkt.factor(n, &d_b, &vec![1.0; m]);
        let sol = kkt.solve(&rhs);
        let x = sol[..n].to_vec();
        let y = sol[n + m..].to_vec();
        let gx = self.g.mul(&x);
        let mut s: Vec<f64> = self.h.iter().zip(&gx).map(|(h, g)| h - g).collect();
        let mut sl: Vec<f64> = self.lower.iter().map(|&j| x[j] - self.lo[j]).collect();
        let mut su: Vec<f64> = self.upper.iter().map(|&j| self.hi[j] - x[j]).collect();
        let mut z: Vec<f64> = s.iter().map(|v| -v).collect();
        let mut zl: Vec<f64> = sl.iter().map(|v| -v).collect();
        let mut zu: Vec<f64> = su.iter().map(|v| -v).collect();

        // Mehrotra's shift into the strict interior, applied to all pairs.
        let min_of = |vs: [&Vec<f64>; 3]| {
            vs.iter()
                .flat_map(|v| v.iter())
                .fold(f64::INFINITY, |a, &b| a.min(b))
        };
        let shift = |vs: [&mut Vec<f64>; 3], by: f64| {
            for v in vs {
                for x in v.iter_mut() {
                    *x += by;
                }
            }
        };
        let ds = (-1.5 * min_of([&s, &sl, &su])).max(0.0);
        let dz = (-1.5 * min_of([&z, &zl, &zu])).max(0.0);
        shift([&mut s, &mut sl, &mut su], ds);
        shift([&mut z, &mut zl, &mut zu], dz);
        let sz = dot(&s, &z) + dot(&sl, &zl) + dot(&su, &zu);
        let sum_s: f64 = s.iter().chain(&sl).chain(&su).sum();
        let sum_z: f64 = z.iter().chain(&zl).chain(&zu).sum();
        if sz > 0.0 && sum_s > 0.0 && sum_z > 0.0 {
            shift([&mut s, &mut sl, &mut su], 0.5 * sz / sum_z);
            shift([&mut z, &mut zl, &mut zu], 0.5 * sz / sum_s);
        }
        for v in [&mut s, &mut sl, &mut su, &mut z, &mut zl, &mut zu] {
            for x in v.iter_mut() {
                if !(*x > 1e-4) {
                    *x = 1.0;
                }
            }
        }
        Iterate {
            x,
            s,
            z,
            y,
            sl,
            zl,
            su,
            zu,
        }
    }

    /// Maps a scaled iterate back to the caller's program.
    fn unscale(&self, p: &ConvexProgram, it: &Iterate) -> Candidate {
        let n = self.n;
        let x: Vec<f64> = it.x.iter().zip(&self.d).map(|(x, d)| x * d).collect();
        let mut z = vec![0.0; p.num_ineq()];
        for (i, &orig) in self.g_rows.iter().enumerate() {
            z[orig] = it.z[i] * self.row_g[i] / self.cost;
        }
        let mut y = vec![0.0; p.num_eq()];
        let mut zl = vec![0.0; n];
        let mut zu = vec![0.0; n];
        for (k, origin) in self.e_rows.iter().enumerate() {
            let v = it.y[k] * self.row_e[k] / self.cost;
            match *origin {
                EqOrigin::Row(r) => y[r] = v,
                // a pinned variable's row dual is the net bound dual
                EqOrigin::Fixed(j) => {
                    if v >= 0.0 {
                        zu[j] = v;
                    } else {
                        zl[j] = -v;
                    }
                }
            }
        }
        for (t, &j) in self.lower.iter().enumerate() {
            zl[j] = it.zl[t] / (self.d[j] * self.cost);
        }
        for (t, &j) in self.upper.iter().enumerate() {
            zu[j] = it.zu[t] / (self.d[j] * self.cost);
        }
        Candidate { x, z, y, zl, zu }
    }

    fn primal_infeasible(&self, it: &Iterate) -> bool {
        let norm = inf_norm(&it.z)
            .max(inf_norm(&it.y))
            .max(inf_norm(&it.zl))
            .max(inf_norm(&it.zu));
        if norm < 1e3 {
            return false;
        }
        let mut ray = vec![0.0; self.n];
        self.g.mul_t_add(&it.z, &mut ray);
        self.e.mul_t_add(&it.y, &mut ray);
        let mut value = dot(&self.h, &it.z) + dot(&self.b, &it.y);
        for (t, &j) in self.lower.iter().enumerate() {
            ray[j] -= it.zl[t];
            value -= self.lo[j] * it.zl[t];
        }
        for (t, &j) in self.upper.iter().enumerate() {
            ray[j] += it.zu[t];
            value += self.hi[j] * it.zu[t];
        }
        inf_norm(&ray) <= INFEASIBILITY_TOL * norm && value < -INFEASIBILITY_TOL * norm
    }

    fn dual_infeasible(&self, it: &Iterate, dx: &[f64]) -> bool {
        let norm = inf_norm(dx);
        if inf_norm(&it.x) < 1e6 || norm == 0.0 {
            return false;
        }
        let eps = INFEASIBILITY_TOL * norm;
        inf_norm(&self.q_mul(dx)) <= eps
            && dot(&self.c, dx) < -eps
            && self.g.mul(dx).iter().all(|&v| v <= eps)
            && inf_norm(&self.e.mul(dx)) <= eps
            && self.lower.iter().all(|&j| dx[j] >= -eps)
            && self.upper.iter().all(|&j| dx[j] <= eps)
    }
}

/// A primal-dual point in the caller's coordinates.
struct Candidate {
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

impl Candidate {
    fn residuals(&self, p: &ConvexProgram) -> Residuals {
        certify(p, &self.x, &self.z, &self.y, &self.zl, &self.zu)
    }

    fn into_result(self, p: &ConvexProgram, status: Status, iterations: usize) -> SolveResult {
        let res = self.residuals(p);
        let objective = p.objective(&self.x);
        let dual_objective = dual_objective(p, &self);
        SolveResult {
            status,
            x: self.x,
            duals_ineq: self.z,
            duals_eq: self.y,
            duals_lower: self.zl,
            duals_upper: self.zu,
            objective,
            dual_objective,
            kkt_residual: res.max(),
            iterations,
        }
    }
}

/// Wolfe dual objective evaluated at the candidate.
fn dual_objective(p: &ConvexProgram, c: &Candidate) -> f64 {
    let qx = p.q_mul(&c.x);
    let mut v = -0.5 * dot(&c.x, &qx) - dot(p.h(), &c.z) - dot(p.g(), &c.y) + p.offset();
    for j in 0..p.num_vars() {
        if c.zl[j] != 0.0 {
            v += p.lo()[j] * c.zl[j];
        }
        if c.zu[j] != 0.0 {
            v -= p.hi()[j] * c.zu[j];
        }
    }
    v
}

fn empty_result(p: &ConvexProgram, status: Status) -> SolveResult {
    let n = p.num_vars();
    let x: Vec<f64> = (0..n)
        .map(|j| 0.0f64.clamp(p.lo()[j].min(p.hi()[j]), p.hi()[j]))
        .collect();
    let cand = Candidate {
        x,
        z: vec![0.0; p.num_ineq()],
        y: vec![0.0; p.num_eq()],
        zl: vec![0.0; n],
        zu: vec![0.0; n],
    };
    cand.into_result(p, status, 0)
}

pub(super) fn run(p: &ConvexProgram, opts: &SolveOptions) -> SolveResult {
    let sc = match presolve(p, opts.tol) {
        Presolved::Ready(sc) => sc,
        Presolved::Infeasible => return empty_result(p, Status::Infeasible),
    };
    let mut kkt = Kkt::new(&sc);
    let mut it = sc.initial_point(&mut kkt);
    let n = sc.n;
    let k = sc.pairs();

    let mut best: Option<(f64, Iterate)> = None;
    let mut best_at = 0;
    let mut status = Status::IterLimit;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let cand = sc.unscale(p, &it);
        let kkt_res = cand.residuals(p).max();
        if best.as_ref().map_or(true, |(b, _)| kkt_res < 0.5 * b) {
            best_at = iterations;
        }
        if best.as_ref().map_or(true, |(b, _)| kkt_res < *b) {
            best = Some((kkt_res, it.clone()));
        }
        if kkt_res <= opts.tol {
            status = Status::Optimal;
            break;
        }
        if sc.primal_infeasible(&it) {
            status = Status::Infeasible;
            break;
        }
        if iterations - best_at > STALL_WINDOW {
            break;
        }
        iterations += 1;

        let res = sc.residual(&it);
        let d_b = sc.bound_diag(&it);
        let w: Vec<f64> = it.s.iter().zip(&it.z).map(|(s, z)| s / z).collect();
        kkt.factor(n, &d_b, &w);

        let mu = sc.mu(&it);
        let prod = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x * y).collect() };
        let rc = prod(&it.s, &it.z);
        let rcl = prod(&it.sl, &it.zl);
        let rcu = prod(&it.su, &it.zu);
        let aff = sc.direction(&kkt, &it, &res, &rc, &rcl, &rcu);
        let alpha_aff = Scaled::step_to_boundary(&it, &aff).min(1.0);

        let sigma = if k == 0 {
            0.0
        } else {
            let after = |v: &[f64], dv: &[f64], w: &[f64], dw: &[f64]| -> f64 {
                v.iter()
                    .zip(dv)
                    .zip(w.iter().zip(dw))
                    .map(|((a, da), (b, db))| (a + alpha_aff * da) * (b + alpha_aff * db))
                    .sum()
            };
            let mu_aff = (after(&it.s, &aff.ds, &it.z, &aff.dz)
                + after(&it.sl, &aff.dsl, &it.zl, &aff.dzl)
                + after(&it.su, &aff.dsu, &it.zu, &aff.dzu))
                / k as f64;
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        };
        let target = |base: &[f64], da: &[f64], db: &[f64]| -> Vec<f64> {
            base.iter()
                .zip(da.iter().zip(db))
                .map(|(b, (x, y))| b + x * y - sigma * mu)
                .collect()
        };
        let rc = target(&rc, &aff.ds, &aff.dz);
        let rcl = target(&rcl, &aff.dsl, &aff.dzl);
        let rcu = target(&rcu, &aff.dsu, &aff.dzu);
        let dir = sc.direction(&kkt, &it, &res, &rc, &rcl, &rcu);
        let alpha = (STEP_FRACTION * Scaled::step_to_boundary(&it, &dir)).min(1.0);

        let axpy = |v: &mut Vec<f64>, dv: &[f64]| {
            for (a, b) in v.iter_mut().zip(dv) {
                *a += alpha * b;
            }
        };
        axpy(&mut it.x, &dir.dx);
        axpy(&mut it.s, &dir.ds);
        axpy(&mut it.z, &dir.dz);
        axpy(&mut it.y, &dir.dy);
        axpy(&mut it.sl, &dir.dsl);
        axpy(&mut it.zl, &dir.dzl);
        axpy(&mut it.su, &dir.dsu);
        axpy(&mut it.zu, &dir.dzu);

        if sc.dual_infeasible(&it, &dir.dx) {
            status = Status::Unbounded;
            break;
        }
    }

    match status {
        Status::Infeasible | Status::Unbounded => {
            let mut r = sc.unscale(p, &it).into_result(p, status, iterations);
            r.kkt_residual = f64::INFINITY;
            r
        }
        _ => {
            let final_it = match (&status, best) {
                (Status::Optimal, _) | (_, None) => it,
                (_, Some((_, b))) => b,
            };
            let mut cand = sc.unscale(p, &final_it);
            if opts.polish {
                if let Some(better) = polish(&sc, p, &final_it) {
                    if better.residuals(p).max() <= cand.residuals(p).max() {
                        cand = better;
                    }
                }
            }
            let mut result = cand.into_result(p, status, iterations);
            if result.kkt_residual <= opts.tol {
                result.status = Status::Optimal;
            }
            result
        }
    }
}

/// Re-solves the equality-constrained problem on the guessed active set,
/// which lands LP and QP solutions on their exact vertices and faces.
fn polish(sc: &Scaled, p: &ConvexProgram, it: &Iterate) -> Option<Candidate> {
    let n = sc.n;
    let m = sc.h.len();
    let mut fixed = vec![None; n];
    for (t, &j) in sc.lower.iter().enumerate() {
        if it.zl[t] > it.sl[t] {
            fixed[j] = Some(sc.lo[j]);
        }
    }
    for (t, &j) in sc.upper.iter().enumerate() {
        if it.zu[t] > it.su[t] {
            fixed[j] = Some(sc.hi[j]);
        }
    }
    let active: Vec<usize> = (0..m).filter(|&i| it.z[i] > it.s[i]).collect();
    let free: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
    let mut col = vec![usize::MAX; n];
    for (c, &j) in free.iter().enumerate() {
        col[j] = c;
    }
    let x_fixed: Vec<f64> = (0..n).map(|j| fixed[j].unwrap_or(0.0)).collect();

    let nf = free.len();
    let rows: Vec<(&SparseRows, usize, f64)> = active
        .iter()
        .map(|&i| (&sc.g, i, sc.h[i]))
        .chain((0..sc.e.n_rows()).map(|k| (&sc.e, k, sc.b[k])))
        .collect();
    let dim = nf + rows.len();
    let mut entries = Vec::new();
    let mut values = Vec::new();
    let mut rhs = vec![0.0; dim];
    let mut diag_at = vec![usize::MAX; nf];
    for c in 0..nf {
        diag_at[c] = entries.len();
        entries.push((c, c));
        values.push(0.0);
    }
    let qx_fixed = sc.q_mul(&x_fixed);
    for &(i, j, v) in &sc.q {
        match (col[i], col[j]) {
            (a, b) if a != usize::MAX && b != usize::MAX => {
                if a == b {
                    values[diag_at[a]] += v;
                } else {
                    entries.push((a.min(b), a.max(b)));
                    values.push(v);
                }
            }
            _ => {}
        }
    }
    for c in 0..nf {
        let j = free[c];
        rhs[c] = -sc.c[j] - qx_fixed[j];
    }
    for (r, &(a, i, b)) in rows.iter().enumerate() {
        let mut target = b;
        for (j, v) in a.row(i) {
            if col[j] == usize::MAX {
                target -= v * x_fixed[j];
            } else {
                entries.push((col[j], nf + r));
                values.push(v);
            }
        }
        entries.push((nf + r, nf + r));
        values.push(0.0);
        rhs[nf + r] = target;
    }
    // the assembled pattern can repeat a Q pair; merge before factorizing
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by_key(|&k| entries[k]);
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(entries.len());
    let mut merged_vals: Vec<f64> = Vec::with_capacity(entries.len());
    for k in order {
        if merged.last() == Some(&entries[k]) {
            *merged_vals.last_mut().unwrap() += values[k];
        } else {
            merged.push(entries[k]);
            merged_vals.push(values[k]);
        }
    }
    let signs: Vec<f64> = (0..dim).map(|k| if k < nf { 1.0 } else { -1.0 }).collect();
    let mut ldl = Ldl::new(dim, &merged, &signs);
    let delta = 1e-9;
    let mut reg = merged_vals.clone();
    for (k, &(i, j)) in merged.iter().enumerate() {
        if i == j {
            reg[k] += if i < nf { delta } else { -delta };
        }
    }
    ldl.factor(&reg, DYNAMIC_EPS, DYNAMIC_DELTA);
    let mul = |x: &[f64]| {
        let mut out = vec![0.0; dim];
        for (k, &(i, j)) in merged.iter().enumerate() {
            out[i] += merged_vals[k] * x[j];
            if i != j {
                out[j] += merged_vals[k] * x[i];
            }
        }
        out
    };
    let mut sol = rhs.clone();
    ldl.solve(&mut sol);
    for _ in 0..25 {
        let k = mul(&sol);
        let mut r: Vec<f64> = rhs.iter().zip(&k).map(|(a, b)| a - b).collect();
        if inf_norm(&r) <= 1e-15 * (1.0 + inf_norm(&rhs)) {
            break;
        }
        ldl.solve(&mut r);
        for (s, d) in sol.iter_mut().zip(&r) {
            *s += d;
        }
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }

    let mut x = x_fixed;
    for c in 0..nf {
        x[free[c]] = sol[c];
    }
    let mut z = vec![0.0; m];
    for (r, &i) in active.iter().enumerate() {
        z[i] = sol[nf + r].max(0.0);
    }
    let y: Vec<f64> = (0..sc.e.n_rows()).map(|k| sol[nf + active.len() + k]).collect();
    let mut grad = sc.q_mul(&x);
    for (g, c) in grad.iter_mut().zip(&sc.c) {
        *g += c;
    }
    sc.g.mul_t_add(&z, &mut grad);
    sc.e.mul_t_add(&y, &mut grad);
    let mut polished = Iterate {
        x,
        s: vec![0.0; m],
        z,
        y,
        sl: vec![0.0; sc.lower.len()],
        zl: vec![0.0; sc.lower.len()],
        su: vec![0.0; sc.upper.len()],
        zu: vec![0.0; sc.upper.len()],
    };
    for (t, &j) in sc.lower.iter().enumerate() {
        if fixed[j] == Some(sc.lo[j]) {
            polished.zl[t] = grad[j].max(0.0);
        }
    }
    for (t, &j) in sc.upper.iter().enumerate() {
        if fixed[j] == Some(sc.hi[j]) {
            polished.zu[t] = (-grad[j]).max(0.0);
        }
    }
    Some(sc.unscale(p, &polished))
}

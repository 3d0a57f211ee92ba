//! Convex quadratic programs and a deterministic interior-point solver.
//!
//! Duals follow one convention throughout: for a minimization, the multiplier
//! of every `≤` row and of every active bound is nonnegative, and the
//! Lagrangian is
//!
//! ```text
//! ½ xᵀQx + cᵀx + zᵀ(Gx − h) + yᵀ(Ex − g) + z_loᵀ(lo − x) + z_hiᵀ(x − hi)
//! ```
//!
//! so `z_i` is the rate at which the optimal value falls as `h_i` grows.

mod ipm;
mod ldl;
mod program;

use serde::Serialize;

pub use program::{ConvexProgram, ProgramDump, SparseRows};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Bound on the relative KKT residual for an `Optimal` answer.
    pub tol: f64,
    pub max_iter: usize,
    /// Refine the interior solution by re-solving on its active set.
    pub polish: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 10_000,
            polish: true,
        }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolveOptions {
            tol,
            ..SolveOptions::default()
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveResult {
    pub status: Status,
    pub x: Vec<f64>,
    /// One multiplier per inequality row, `≥ 0`.
    pub duals_ineq: Vec<f64>,
    pub duals_eq: Vec<f64>,
    /// Multipliers of `x ≥ lo`, zero where the bound is infinite.
    pub duals_lower: Vec<f64>,
    /// Multipliers of `x ≤ hi`, zero where the bound is infinite.
    pub duals_upper: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// Net multiplier of each variable's box, `z_hi − z_lo`.
    pub fn duals_box(&self) -> Vec<f64> {
        self.duals_upper
            .iter()
            .zip(&self.duals_lower)
            .map(|(u, l)| u - l)
            .collect()
    }

    /// Errors unless the solve reached `Optimal`.
    pub fn require_optimal(self) -> Result<Self> {
        if self.is_optimal() {
            Ok(self)
        } else {
            Err(Error::Solver(self.status))
        }
    }
}

/// Relative KKT residuals of a primal-dual point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Measures how far `(x, z, y, z_lo, z_hi)` is from satisfying the KKT
/// conditions of `program`.
///
/// Each residual is divided by one plus the size of the terms it balances:
/// primal feasibility by `‖Gx‖, ‖h‖, ‖Ex‖, ‖g‖, ‖x‖`, stationarity by the
/// norms of its summands, and complementarity by `1 + |objective|`.
pub fn certify(
    program: &ConvexProgram,
    x: &[f64],
    z: &[f64],
    y: &[f64],
    z_lo: &[f64],
    z_hi: &[f64],
) -> Residuals {
    let gx = program.ineq().mul(x);
    let ex = program.eq().mul(x);
    let (lo, hi) = (program.lo(), program.hi());
    let mut primal = 0.0f64;
    let mut comp = 0.0f64;
    for (i, (&a, &h)) in gx.iter().zip(program.h()).enumerate() {
        primal = primal.max(a - h);
        comp = comp.max(z[i].max(0.0) * (h - a).abs());
    }
    for (&a, &g) in ex.iter().zip(program.g()) {
        primal = primal.max((a - g).abs());
    }
    for j in 0..x.len() {
        if lo[j].is_finite() {
            primal = primal.max(lo[j] - x[j]);
            comp = comp.max(z_lo[j].max(0.0) * (x[j] - lo[j]).abs());
        }
        if hi[j].is_finite() {
            primal = primal.max(x[j] - hi[j]);
            comp = comp.max(z_hi[j].max(0.0) * (hi[j] - x[j]).abs());
        }
    }
    let primal_scale = 1.0
        + inf_norm(&gx)
            .max(inf_norm(program.h()))
            .max(inf_norm(&ex))
            .max(inf_norm(program.g()))
            .max(inf_norm(x));

    let qx = program.q_mul(x);
    let mut gz = vec![0.0; x.len()];
    program.ineq().mul_t_add(z, &mut gz);
    let mut ey = vec![0.0; x.len()];
    program.eq().mul_t_add(y, &mut ey);
    let mut dual = 0.0f64;
    for j in 0..x.len() {
        let r = qx[j] + program.c()[j] + gz[j] + ey[j] - z_lo[j] + z_hi[j];
        dual = dual.max(r.abs());
    }
    let negative = z
        .iter()
        .chain(z_lo)
        .chain(z_hi)
        .fold(0.0f64, |m, &v| m.max(-v));
    dual = dual.max(negative);
    let dual_scale = 1.0
        + inf_norm(&qx)
            .max(inf_norm(program.c()))
            .max(inf_norm(&gz))
            .max(inf_norm(&ey))
            .max(inf_norm(z_lo))
            .max(inf_norm(z_hi));

    Residuals {
        primal: primal.max(0.0) / primal_scale,
        dual: dual / dual_scale,
        complementarity: comp / (1.0 + program.objective(x).abs()),
    }
}

/// Solves `program` to relative KKT tolerance `tol` with default options.
pub fn solve(program: &ConvexProgram, tol: f64) -> Result<SolveResult> {
    solve_with(program, &SolveOptions::with_tol(tol))
}

/// Solves `program`; only invalid input is an `Err`, everything else is
/// reported through [`SolveResult::status`].
pub fn solve_with(program: &ConvexProgram, opts: &SolveOptions) -> Result<SolveResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {}", opts.tol)));
    }
    program.validate()?;
    let mut result = ipm::run(program, opts);
    if result.status == Status::IterLimit && result.iterations < opts.max_iter {
        // stalled rather than capped: the dual ray may simply not have grown
        // enough to be recognised, so settle feasibility directly
        if least_violation(program, opts) > opts.tol.sqrt() {
            result.status = Status::Infeasible;
            result.kkt_residual = f64::INFINITY;
        }
    }
    Ok(result)
}

/// Smallest uniform relaxation `t` of every row (relative to the right-side
/// scale) that makes the constraints feasible within the bounds.
fn least_violation(p: &ConvexProgram, opts: &SolveOptions) -> f64 {
    let n = p.num_vars();
    let scale = 1.0 + p.h().iter().chain(p.g()).fold(0.0f64, |m, v| m.max(v.abs()));
    let mut phase = ConvexProgram::new(n);
    for j in 0..n {
        phase.set_bounds(j, p.lo()[j], p.hi()[j]);
    }
    let t = phase.add_var(0.0, f64::INFINITY, 1.0);
    for i in 0..p.num_ineq() {
        let mut row: Vec<(usize, f64)> = p.ineq().row(i).collect();
        row.push((t, -scale));
        phase.add_ineq(&row, p.h()[i]);
    }
    for k in 0..p.num_eq() {
        let mut up: Vec<(usize, f64)> = p.eq().row(k).collect();
        let mut down: Vec<(usize, f64)> = up.iter().map(|&(j, v)| (j, -v)).collect();
        up.push((t, -scale));
        down.push((t, -scale));
        phase.add_ineq(&up, p.g()[k]);
        phase.add_ineq(&down, -p.g()[k]);
    }
    let r = ipm::run(&phase, opts);
    match r.status {
        Status::Optimal => r.x[t],
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests;

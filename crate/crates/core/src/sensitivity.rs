//! Marginal value of supply in the market-only program.
//!
//! With drivers held where they are, the only decision left is the conversion
//! quantile: maximise `Σ f_k d_k y_k` subject to each neighborhood's demand
//! staying within its supply minus reserve. The multipliers `λ*` of those rows
//! are the textbook "shadow price of supply". This module measures how far
//! that reading holds: it checks `λ*` against finite differences of the
//! perturbed optimal value `p*(q)`, checks the global lower bound
//! `p*(q) ≥ p*(0) − λ*ᵀq`, and traces revenue as supply at one location grows.
//! The bound only limits how much revenue can *rise*; adding supply to a
//! location with a large `λ*` can easily gain nothing.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::market::{ConversionModel, MarketState};
use crate::rng;
use crate::solver::{self, ConvexProgram, Status};
use crate::spatial::CityGraph;

/// Relative KKT tolerance of every market-only solve.
const SOLVE_TOL: f64 = 1e-9;

/// Optimum of the unperturbed market-only program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketOptimum {
    pub y: Vec<f64>,
    /// Optimal value, the negated revenue.
    pub p_star: f64,
    /// Multiplier of each location's neighborhood row, `≥ 0`.
    pub lambda: Vec<f64>,
    /// Net multiplier of each quantile's box, `upper − lower`.
    pub nu: Vec<f64>,
}

/// The market-only program with its right sides kept aside for perturbation.
struct MarketProgram {
    program: ConvexProgram,
    /// Location of each variable.
    vars: Vec<usize>,
    /// Row of each location's neighborhood constraint; `None` when the
    /// neighborhood holds no demand and the row reduces to `0 ≤ rhs`.
    rows: Vec<Option<usize>>,
    rhs: Vec<f64>,
}

impl MarketProgram {
    fn build(state: &MarketState, graph: &CityGraph, conv: &ConversionModel) -> Result<Self> {
        let n = graph.n();
        state.validate()?;
        check_len("market state", n, state.n())?;
        check_len("conversion model", n, conv.n())?;
        let mut program = ConvexProgram::new(0);
        let mut var_of = vec![None; n];
        let mut vars = Vec::new();
        for k in (0..n).filter(|&k| state.d[k] > 0.0) {
            var_of[k] = Some(program.add_var(conv.y_min(k), 1.0, -state.f[k] * state.d[k]));
            vars.push(k);
        }
        let mut rows = vec![None; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let hood = graph.dispatch().row(i);
            rhs[i] = hood.iter().map(|&k| state.s0[k] + state.s_bar[k]).sum::<f64>() - state.r[i];
            let coeffs: Vec<(usize, f64)> = hood
                .iter()
                .filter_map(|&k| var_of[k].map(|v| (v, state.d[k])))
                .collect();
            if !coeffs.is_empty() {
                rows[i] = Some(program.add_ineq(&coeffs, rhs[i]));
            }
        }
        Ok(MarketProgram {
            program,
            vars,
            rows,
            rhs,
        })
    }

    /// Solves with right sides `rhs + q`; `None` when that is infeasible.
    fn solve(&self, q: Option<&[f64]>) -> Result<Option<(f64, solver::SolveResult)>> {
        let mut program = self.program.clone();
        for (i, row) in self.rows.iter().enumerate() {
            let b = self.rhs[i] + q.map_or(0.0, |q| q[i]);
            match row {
                Some(r) => program.h_mut()[*r] = b,
                None if b < 0.0 => return Ok(None),
                None => {}
            }
        }
        let result = solver::solve(&program, SOLVE_TOL)?;
        match result.status {
            Status::Optimal => Ok(Some((result.objective, result))),
            Status::Infeasible => Ok(None),
            s => Err(Error::Solver(s)),
        }
    }

    fn value(&self, q: &[f64]) -> Result<Option<f64>> {
        Ok(self.solve(Some(q))?.map(|(v, _)| v))
    }
}

/// Solves the market-only program with every driver held in place.
///
/// Supply in each neighborhood counts both assignable drivers and drivers
/// already holding a PPZ. Fails with [`Status::Infeasible`] when a
/// neighborhood's supply minus reserve cannot absorb the demand its quantile
/// floors force.
pub fn solve_market_only(
    state: &MarketState,
    graph: &CityGraph,
    conv: &ConversionModel,
) -> Result<MarketOptimum> {
    optimum(&MarketProgram::build(state, graph, conv)?)
}

fn optimum(mp: &MarketProgram) -> Result<MarketOptimum> {
    let n = mp.rows.len();
    let (p_star, r) = mp.solve(None)?.ok_or(Error::Solver(Status::Infeasible))?;
    let mut y = vec![1.0; n];
    let mut nu = vec![0.0; n];
    let boxes = r.duals_box();
    for (v, &k) in mp.vars.iter().enumerate() {
        y[k] = r.x[v];
        nu[k] = boxes[v];
    }
    let lambda = mp
        .rows
        .iter()
        .map(|row| row.map_or(0.0, |i| r.duals_ineq[i].max(0.0)))
        .collect();
    Ok(MarketOptimum {
        y,
        p_star,
        lambda,
        nu,
    })
}

/// Finite-difference check of one row's multiplier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalCheck {
    pub location: usize,
    /// `(p*(h eᵢ) − p*(0)) / h`; `None` if a perturbed program is infeasible.
    pub forward: Option<f64>,
    pub backward: Option<f64>,
    /// Central quotient `(p*(h eᵢ) − p*(−h eᵢ)) / 2h`.
    pub central: Option<f64>,
    pub lambda: f64,
    /// `|λᵢ + central|`.
    pub gap: Option<f64>,
    /// One-sided slopes agree to within ten times the tolerance.
    pub differentiable: bool,
    /// `gap ≤ tol`, or the coordinate is not differentiable.
    pub passed: bool,
}

/// One re-solve of the lower bound `p*(q) ≥ p*(0) − λ*ᵀq`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalCheck {
    pub q: Vec<f64>,
    /// `None` when the perturbed program is infeasible (`p* = +∞`).
    pub p_star: Option<f64>,
    /// `p*(0) − λ*ᵀq`.
    pub bound: f64,
    /// `p*(q) − bound`; `None` (infinite) when infeasible.
    pub slack: Option<f64>,
}

/// Optimal revenue with supply at one location set to `supply`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub supply: f64,
    /// `None` when the program is infeasible at this supply.
    pub revenue: Option<f64>,
    /// Revenue gained per driver up to the next grid point.
    pub forward_difference: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub p_star_0: f64,
    pub lambda_star: Vec<f64>,
    pub y_star: Vec<f64>,
    pub local_checks: Vec<LocalCheck>,
    pub global_checks: Vec<GlobalCheck>,
    pub curve: Vec<CurvePoint>,
}

impl SensitivityReport {
    /// Smallest global slack; infeasible perturbations count as `+∞`.
    pub fn min_global_slack(&self) -> f64 {
        self.global_checks
            .iter()
            .map(|c| c.slack.unwrap_or(f64::INFINITY))
            .fold(f64::INFINITY, f64::min)
    }
}

fn unit(n: usize, i: usize, h: f64) -> Vec<f64> {
    let mut q = vec![0.0; n];
    q[i] = h;
    q
}

/// Compares each `λᵢ*` with central differences of `p*` at `±h eᵢ`.
///
/// A coordinate is checked only where the forward and backward slopes agree
/// to within `10·tol`; elsewhere `p*` has a kink at zero and the coordinate is
/// reported as not differentiable.
pub fn verify_local_sensitivity(
    state: &MarketState,
    graph: &CityGraph,
    conv: &ConversionModel,
    h: f64,
    tol: f64,
) -> Result<Vec<LocalCheck>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("step must be positive, got {h}")));
    }
    let mp = MarketProgram::build(state, graph, conv)?;
    let base = optimum(&mp)?;
    local_checks(&mp, &base, h, tol)
}

fn local_checks(mp: &MarketProgram, base: &MarketOptimum, h: f64, tol: f64) -> Result<Vec<LocalCheck>> {
    let n = mp.rows.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let up = mp.value(&unit(n, i, h))?;
            let down = mp.value(&unit(n, i, -h))?;
            let forward = up.map(|v| (v - base.p_star) / h);
            let backward = down.map(|v| (base.p_star - v) / h);
            let central = up.zip(down).map(|(u, d)| (u - d) / (2.0 * h));
            let gap = central.map(|c| (base.lambda[i] + c).abs());
            let differentiable = matches!((forward, backward), (Some(f), Some(b)) if (f - b).abs() < 10.0 * tol);
            Ok(LocalCheck {
                location: i,
                forward,
                backward,
                central,
                lambda: base.lambda[i],
                gap,
                differentiable,
                passed: !differentiable || gap.is_some_and(|g| g <= tol),
            })
        })
        .collect()
}

/// Re-solves the program at each perturbation and records the slack of
/// `p*(q) ≥ p*(0) − λ*ᵀq`.
pub fn verify_global_bound(
    state: &MarketState,
    graph: &CityGraph,
    conv: &ConversionModel,
    q_samples: &[Vec<f64>],
) -> Result<Vec<GlobalCheck>> {
    let mp = MarketProgram::build(state, graph, conv)?;
    let base = optimum(&mp)?;
    global_checks(&mp, &base, q_samples)
}

fn global_checks(mp: &MarketProgram, base: &MarketOptimum, q_samples: &[Vec<f64>]) -> Result<Vec<GlobalCheck>> {
    let n = mp.rows.len();
    q_samples
        .par_iter()
        .map(|q| {
            check_len("perturbation", n, q.len())?;
            let p_star = mp.value(q)?;
            let bound = base.p_star - base.lambda.iter().zip(q).map(|(l, v)| l * v).sum::<f64>();
            Ok(GlobalCheck {
                q: q.clone(),
                p_star,
                bound,
                slack: p_star.map(|p| p - bound),
            })
        })
        .collect()
}

/// Perturbations drawn uniformly from `[−s0ᵢ/2, s0ᵢ]` per location.
pub fn sample_perturbations(state: &MarketState, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|c| {
            let mut rng = rng::stream(&[seed, rng::tag::SCENARIO, c as u64]);
            state
                .s0
                .iter()
                .map(|&s| if s > 0.0 { rng.gen_range(-0.5 * s..=s) } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Optimal revenue as the assignable supply at `location` sweeps `grid`.
pub fn marginal_value_curve(
    state: &MarketState,
    graph: &CityGraph,
    conv: &ConversionModel,
    location: usize,
    grid: &[f64],
) -> Result<Vec<CurvePoint>> {
    let n = graph.n();
    if location >= n {
        return Err(Error::LocationOutOfRange { index: location, n });
    }
    if let Some(w) = grid.windows(2).find(|w| !(w[0] < w[1])) {
        return Err(Error::invalid(format!("supply grid must increase, got {} then {}", w[0], w[1])));
    }
    if let Some(s) = grid.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::invalid(format!("supply level {s}")));
    }
    let mp = MarketProgram::build(state, graph, conv)?;
    // changing s0 at one location moves the right side of every row whose
    // neighborhood contains it by the same amount
    let revenue: Vec<Option<f64>> = grid
        .par_iter()
        .map(|&s| {
            let shift = s - state.s0[location];
            let mut q = vec![0.0; n];
            for &i in graph.dispatch().row(location) {
                q[i] = shift;
            }
            Ok(mp.value(&q)?.map(|p| if p == 0.0 { 0.0 } else { -p }))
        })
        .collect::<Result<_>>()?;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(k, &supply)| CurvePoint {
            supply,
            revenue: revenue[k],
            forward_difference: grid.get(k + 1).and_then(|&next| {
                revenue[k].zip(revenue[k + 1]).map(|(a, b)| (b - a) / (next - supply))
            }),
        })
        .collect())
}

/// What the `sensitivity` command reports.
#[derive(Clone, Debug)]
pub struct ReportRequest {
    pub location: usize,
    pub grid: Vec<f64>,
    /// Finite-difference step.
    pub h: f64,
    pub tol: f64,
    pub samples: usize,
    pub seed: u64,
}

pub fn sensitivity_report(
    state: &MarketState,
    graph: &CityGraph,
    conv: &ConversionModel,
    request: &ReportRequest,
) -> Result<SensitivityReport> {
    if !(request.h > 0.0 && request.h.is_finite()) {
        return Err(Error::invalid(format!("step must be positive, got {}", request.h)));
    }
    let mp = MarketProgram::build(state, graph, conv)?;
    let base = optimum(&mp)?;
    let local_checks = local_checks(&mp, &base, request.h, request.tol)?;
    let samples = sample_perturbations(state, request.samples, request.seed);
    let global_checks = global_checks(&mp, &base, &samples)?;
    let curve = marginal_value_curve(state, graph, conv, request.location, &request.grid)?;
    Ok(SensitivityReport {
        p_star_0: base.p_star,
        lambda_star: base.lambda,
        y_star: base.y,
        local_checks,
        global_checks,
        curve,
    })
}

//! The driver positioning program.
//!
//! Decision variables are the conversion quantile `y` of each active location,
//! one allocation fraction per valid (origin, destination) pair and one
//! contribution fraction per (funded account, destination) pair. Expected
//! supply after repositioning is an affine function of the allocation, so it
//! is substituted directly into the market-balance rows instead of being a
//! variable of its own.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::dynamics::expected_supply;
use crate::error::{check_len, Error, Result};
use crate::escrow::BonusBounds;
use crate::market::{ConversionModel, MarketState};
use crate::rng;
use crate::solver::{self, ConvexProgram, SolveOptions};
use crate::spatial::{
    demand_rows, prune_active_set, vectorize_allocation, vectorize_contribution, ActiveSet,
    AllocationIndex, CityGraph,
};

/// Weight of the default tie-break terms: prefer low prices and no allocation
/// among otherwise equal optima.
const TIE_BREAK: f64 = 1e-9;

/// What the positioning solve maximizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Expected fares of served requests, `Σ f d y`.
    Bookings,
    /// Expected served requests, `Σ d y`.
    Conversion,
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bookings" => Ok(Objective::Bookings),
            "conversion" => Ok(Objective::Conversion),
            _ => Err(Error::invalid(format!(
                "unknown objective {s:?} (expected bookings or conversion)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositioningConfig {
    pub objective: Objective,
    /// Penalty on the total allocated fraction.
    #[serde(default)]
    pub l1_weight: f64,
    /// Penalty on squared quantile differences across adjacent locations.
    #[serde(default)]
    pub smooth_weight: f64,
    pub bounds: BonusBounds,
}

impl PositioningConfig {
    pub fn new(objective: Objective, bounds: BonusBounds) -> Self {
        PositioningConfig {
            objective,
            l1_weight: 0.0,
            smooth_weight: 0.0,
            bounds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("l1_weight", self.l1_weight), ("smooth_weight", self.smooth_weight)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        BonusBounds::new(self.bounds.min, self.bounds.max).map(|_| ())
    }

    fn weight(&self, state: &MarketState, k: usize) -> f64 {
        match self.objective {
            Objective::Bookings => state.f[k],
            Objective::Conversion => 1.0,
        }
    }
}

/// Landing distribution of a driver offered a PPZ for one pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairLanding {
    pub origin: usize,
    pub destination: usize,
    /// `(location, probability)`; missing mass means the driver goes offline.
    pub landing: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TransitionSpec {
    p_stay: f64,
    p_comply: f64,
    p_fail_stay: f64,
    #[serde(default)]
    pairs: Vec<PairLanding>,
}

/// Where drivers end up one period later.
///
/// Unallocated drivers stay open with probability `p_stay`. A driver offered
/// a PPZ for `(o, j)` lands at `j` with probability `p_comply`, stays at `o`
/// with probability `p_fail_stay` and goes offline otherwise, unless the pair
/// has its own landing distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransitionSpec", into = "TransitionSpec")]
pub struct TransitionModel {
    p_stay: f64,
    p_comply: f64,
    p_fail_stay: f64,
    pairs: BTreeMap<(usize, usize), Vec<(usize, f64)>>,
}

fn check_probability(what: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} {p} is not a probability")))
    }
}

impl TransitionModel {
    pub fn uniform(p_stay: f64, p_comply: f64, p_fail_stay: f64) -> Result<Self> {
        check_probability("stay probability", p_stay)?;
        check_probability("compliance probability", p_comply)?;
        check_probability("failed-compliance stay probability", p_fail_stay)?;
        if p_comply + p_fail_stay > 1.0 + 1e-12 {
            return Err(Error::invalid(format!(
                "landing probabilities {p_comply} + {p_fail_stay} exceed 1"
            )));
        }
        Ok(TransitionModel {
            p_stay,
            p_comply,
            p_fail_stay,
            pairs: BTreeMap::new(),
        })
    }

    /// Replaces the landing distribution of one pair. Repeated locations are
    /// merged.
    pub fn with_landing(
        mut self,
        origin: usize,
        destination: usize,
        landing: &[(usize, f64)],
    ) -> Result<Self> {
        if origin == destination {
            return Err(Error::invalid(format!("pair ({origin}, {destination}) is a self pair")));
        }
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for &(k, p) in landing {
            check_probability("landing probability", p)?;
            *merged.entry(k).or_default() += p;
        }
        let total: f64 = merged.values().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::invalid(format!(
                "landing probabilities of ({origin}, {destination}) sum to {total}"
            )));
        }
        self.pairs
            .insert((origin, destination), merged.into_iter().filter(|&(_, p)| p > 0.0).collect());
        Ok(self)
    }

    pub fn p_stay(&self) -> f64 {
        self.p_stay
    }

    /// Probability that a driver offered `(o, j)` lands at `j`.
    pub fn p_comply(&self, o: usize, j: usize) -> f64 {
        match self.pairs.get(&(o, j)) {
            Some(l) => l.iter().filter(|&&(k, _)| k == j).map(|&(_, p)| p).sum(),
            None => self.p_comply,
        }
    }

    /// Landing distribution of a driver offered `(o, j)`, zero entries
    /// omitted.
    pub fn landing(&self, o: usize, j: usize) -> Vec<(usize, f64)> {
        if let Some(l) = self.pairs.get(&(o, j)) {
            return l.clone();
        }
        [(j, self.p_comply), (o, self.p_fail_stay)]
            .into_iter()
            .filter(|&(_, p)| p > 0.0)
            .collect()
    }

    /// Whether neighborhood pruning leaves the positioning optimum unchanged:
    /// every landing stays on its pair's endpoints, and a PPZ never makes a
    /// driver likelier to linger at the origin than no PPZ.
    pub fn supports_pruning(&self) -> bool {
        let default_ok = self.p_fail_stay <= self.p_stay;
        let pairs_ok = self.pairs.iter().all(|(&(o, j), l)| {
            l.iter().all(|&(k, p)| k == j || (k == o && p <= self.p_stay))
        });
        default_ok && pairs_ok
    }

    /// Checks every per-pair location against a city of `n` locations.
    pub fn check_locations(&self, n: usize) -> Result<()> {
        for (&(o, j), l) in &self.pairs {
            for index in [o, j].into_iter().chain(l.iter().map(|&(k, _)| k)) {
                if index >= n {
                    return Err(Error::LocationOutOfRange { index, n });
                }
            }
        }
        Ok(())
    }
}

impl TryFrom<TransitionSpec> for TransitionModel {
    type Error = Error;

    fn try_from(spec: TransitionSpec) -> Result<Self> {
        let mut model = TransitionModel::uniform(spec.p_stay, spec.p_comply, spec.p_fail_stay)?;
        for pair in spec.pairs {
            model = model.with_landing(pair.origin, pair.destination, &pair.landing)?;
        }
        Ok(model)
    }
}

impl From<TransitionModel> for TransitionSpec {
    fn from(model: TransitionModel) -> Self {
        TransitionSpec {
            p_stay: model.p_stay,
            p_comply: model.p_comply,
            p_fail_stay: model.p_fail_stay,
            pairs: model
                .pairs
                .into_iter()
                .map(|((origin, destination), landing)| PairLanding {
                    origin,
                    destination,
                    landing,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationEntry {
    pub origin: usize,
    pub destination: usize,
    pub fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContributionEntry {
    pub account: usize,
    pub destination: usize,
    pub fraction: f64,
}

/// A solved positioning program, in original location ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    /// One entry per allocation variable, zeros included.
    pub allocation: Vec<AllocationEntry>,
    pub contributions: Vec<ContributionEntry>,
    /// Quantile per location; locations outside the active set keep 1.
    pub y: Vec<f64>,
    /// Price modifier per location; infinite (`null` in JSON) where `y = 0`.
    pub x: Vec<f64>,
    /// Expected supply after repositioning, excluding drivers already holding
    /// a PPZ.
    pub s_expected: Vec<f64>,
    /// Objective value without regularization, as a maximized quantity.
    pub market_objective: f64,
    /// Minimized value of the program actually solved.
    pub solver_objective: f64,
    pub kkt_residual: f64,
    pub epoch: u64,
}

impl AllocationPlan {
    /// Allocation fractions grouped by origin.
    pub fn by_origin(&self) -> BTreeMap<usize, Vec<(usize, f64)>> {
        let mut rows: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for a in &self.allocation {
            rows.entry(a.origin).or_default().push((a.destination, a.fraction));
        }
        rows
    }
}

/// Where each quantity lives in the assembled program.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgramLayout {
    /// `(location, variable)` for each quantile variable.
    pub y: Vec<(usize, usize)>,
    /// Allocation pairs; pair `p` is variable `alloc_start + p`.
    pub alloc: Vec<(usize, usize)>,
    pub alloc_start: usize,
    /// `(account, destination)` pairs; pair `p` is variable `contrib_start + p`.
    pub contrib: Vec<(usize, usize)>,
    pub contrib_start: usize,
    /// Location of each market-balance row, in row order from row 0.
    pub balance_rows: Vec<usize>,
    /// Destination of each budget row, following the balance rows.
    pub budget_rows: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct PositioningProgram {
    pub program: ConvexProgram,
    pub layout: ProgramLayout,
}

fn check_inputs(
    state: &MarketState,
    graph: &CityGraph,
    conv: &ConversionModel,
    trans: &TransitionModel,
    cfg: &PositioningConfig,
    active: &ActiveSet,
    index: &AllocationIndex,
) -> Result<()> {
    state.validate()?;
    cfg.validate()?;
    let n = graph.n();
    check_len("market state", n, state.n())?;
    check_len("conversion model", n, conv.n())?;
    check_len("active set", n, active.city_size())?;
    trans.check_locations(n)?;
    for &(o, j) in index.pairs() {
        if !(active.contains(o) && active.contains(j) && graph.alloc().contains(o, j)) {
            return Err(Error::invalid(format!(
                "allocation pair ({o}, {j}) is not a valid pair among active locations"
            )));
        }
    }
    Ok(())
}

/// Assembles the positioning program.
///
/// Locations outside `active` are frozen: quantile 1, no allocation, no
/// market-balance row. Only locations whose dispatch neighborhood holds demand
/// get a balance row; elsewhere the row has no decision variable in it.
/// Without smoothing, quantiles of zero-demand locations are fixed at 1 rather
/// than being variables.
pub fn build_positioning_program(
    state: &MarketState,
    graph: &CityGraph,
    conv: &ConversionModel,
    trans: &TransitionModel,
    cfg: &PositioningConfig,
    active: &ActiveSet,
    index: &AllocationIndex,
) -> Result<PositioningProgram> {
    check_inputs(state, graph, conv, trans, cfg, active, index)?;
    let n = graph.n();
    let p0 = trans.p_stay();
    let smoothing = cfg.smooth_weight > 0.0;

    let mut program = ConvexProgram::new(0);
    let mut y_var = vec![None; n];
    let mut y = Vec::new();
    for &k in active.kept() {
        if state.d[k] > 0.0 || smoothing {
            let v = program.add_var(conv.y_min(k), 1.0, -cfg.weight(state, k) * state.d[k]);
            program.add_square(&[(v, 1.0)], -1.0, TIE_BREAK);
            y_var[k] = Some(v);
            y.push((k, v));
        }
    }
    if smoothing {
        for (i, k) in graph.adjacency_edges() {
            if let (Some(a), Some(b)) = (y_var[i], y_var[k]) {
                program.add_square(&[(a, 1.0), (b, -1.0)], 0.0, cfg.smooth_weight);
            }
        }
    }

    let alloc = index.pairs().to_vec();
    let alloc_start = program.num_vars();
    for _ in &alloc {
        program.add_var(0.0, 1.0, cfg.l1_weight + TIE_BREAK);
    }
    let destinations = index.destinations();
    let contrib = vectorize_contribution(graph, &destinations, |i| state.e[i] > 0.0);
    let contrib_start = program.num_vars();
    for _ in &contrib {
        program.add_var(0.0, 1.0, TIE_BREAK);
    }

    let demand = demand_rows(graph, &state.d)?;
    let mut row_of = vec![None; n];
    let mut balance_rows = Vec::new();
    for &i in active.kept() {
        if demand[i] {
            row_of[i] = Some(balance_rows.len());
            balance_rows.push(i);
        }
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); balance_rows.len()];
    let mut rhs = vec![0.0; balance_rows.len()];
    for (r, &i) in balance_rows.iter().enumerate() {
        rhs[r] = -state.r[i];
        for &k in graph.dispatch().row(i) {
            rhs[r] += p0 * state.s0[k] + state.s_bar[k];
            match y_var[k] {
                Some(v) => rows[r].push((v, state.d[k])),
                None => rhs[r] -= state.d[k],
            }
        }
    }
    // allocated drivers leave the unallocated pool at the origin and land
    // per the pair's distribution; dispatch is symmetric so the rows seeing
    // location k are exactly N(k)
    for (p, &(o, j)) in alloc.iter().enumerate() {
        let v = alloc_start + p;
        let s = state.s0[o];
        if s == 0.0 {
            continue;
        }
        for (k, prob) in trans.landing(o, j) {
            for &i in graph.dispatch().row(k) {
                if let Some(r) = row_of[i] {
                    rows[r].push((v, -s * prob));
                }
            }
        }
        for &i in graph.dispatch().row(o) {
            if let Some(r) = row_of[i] {
                rows[r].push((v, s * p0));
            }
        }
    }
    for (row, b) in rows.iter().zip(&rhs) {
        program.add_ineq(row, *b);
    }

    let mut budget: BTreeMap<usize, Vec<(usize, f64)>> =
        destinations.iter().map(|&j| (j, Vec::new())).collect();
    for (p, &(o, j)) in alloc.iter().enumerate() {
        let coeff = cfg.bounds.min * trans.p_comply(o, j) * state.s0[o];
        budget.get_mut(&j).unwrap().push((alloc_start + p, coeff));
    }
    for (p, &(i, j)) in contrib.iter().enumerate() {
        budget.get_mut(&j).unwrap().push((contrib_start + p, -state.e[i]));
    }
    let budget_rows: Vec<usize> = budget.keys().copied().collect();
    for row in budget.values() {
        program.add_ineq(row, 0.0);
    }

    let mut simplex = |pairs: &[(usize, usize)], start: usize| {
        let mut groups: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for (p, &(owner, _)) in pairs.iter().enumerate() {
            groups.entry(owner).or_default().push((start + p, 1.0));
        }
        for row in groups.values().filter(|r| r.len() > 1) {
            program.add_ineq(row, 1.0);
        }
    };
    simplex(&alloc, alloc_start);
    simplex(&contrib, contrib_start);

    Ok(PositioningProgram {
        program,
        layout: ProgramLayout {
            y,
            alloc,
            alloc_start,
            contrib,
            contrib_start,
            balance_rows,
            budget_rows,
        },
    })
}

/// Builds and solves the positioning program. Any status other than optimal
/// is returned as [`Error::Solver`].
#[allow(clippy::too_many_arguments)]
pub fn solve_positioning(
    state: &MarketState,
    graph: &CityGraph,
    conv: &ConversionModel,
    trans: &TransitionModel,
    cfg: &PositioningConfig,
    active: &ActiveSet,
    index: &AllocationIndex,
    tol: f64,
) -> Result<AllocationPlan> {
    let built = build_positioning_program(state, graph, conv, trans, cfg, active, index)?;
    let result = solver::solve_with(&built.program, &SolveOptions::with_tol(tol))?.require_optimal()?;
    let layout = &built.layout;
    let n = graph.n();
    let mut sol = result.x.clone();
    for (v, (lo, hi)) in sol.iter_mut().zip(built.program.lo().iter().zip(built.program.hi())) {
        *v = v.clamp(*lo, *hi);
    }
    let coupling = layout.balance_rows.len() + layout.budget_rows.len();
    trim(&built.program, &mut sol, layout.alloc_start, layout.contrib_start, coupling);
    let end = sol.len();
    trim(&built.program, &mut sol, layout.contrib_start, end, coupling);

    let mut y = vec![1.0; n];
    for &(k, v) in &layout.y {
        y[k] = sol[v];
    }
    let mut allocation: Vec<AllocationEntry> = layout
        .alloc
        .iter()
        .enumerate()
        .map(|(p, &(origin, destination))| AllocationEntry {
            origin,
            destination,
            fraction: sol[layout.alloc_start + p],
        })
        .collect();
    normalize_rows(&mut allocation, |a| a.origin, |a| &mut a.fraction);
    let mut contributions: Vec<ContributionEntry> = layout
        .contrib
        .iter()
        .enumerate()
        .map(|(p, &(account, destination))| ContributionEntry {
            account,
            destination,
            fraction: sol[layout.contrib_start + p],
        })
        .collect();
    normalize_rows(&mut contributions, |c| c.account, |c| &mut c.fraction);
    fund_allocations(&mut allocation, &contributions, state, trans, cfg.bounds.min);

    let x = y
        .iter()
        .enumerate()
        .map(|(k, &yk)| {
            if yk <= 0.0 {
                f64::INFINITY
            } else {
                (1.0 - yk.ln() / conv.beta()[k]).clamp(1.0, conv.x_max())
            }
        })
        .collect();
    let s_expected = expected_supply(&allocation, &state.s0, trans)?;
    let market_objective = (0..n).map(|k| cfg.weight(state, k) * state.d[k] * y[k]).sum();
    Ok(AllocationPlan {
        allocation,
        contributions,
        y,
        x,
        s_expected,
        market_objective,
        solver_objective: result.objective,
        kkt_residual: result.kkt_residual,
        epoch: state.epoch,
    })
}

/// Lowers variables `start..end` as far as the first `rows` rows allow
/// without using up more than their current slack, one variable at a time.
///
/// The interior-point answer sits near the centre of any optimal face, so
/// allocations that buy nothing come back as arbitrary fractions; the tie-break
/// costs are below the solver tolerance and cannot be relied on to remove them.
/// Lowering them cannot move the quantiles, so the market objective is kept.
fn trim(program: &ConvexProgram, x: &mut [f64], start: usize, end: usize, rows: usize) {
    let g = program.ineq();
    let mut slack = vec![0.0; rows];
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); end - start];
    for r in 0..rows {
        let mut lhs = 0.0;
        for (j, v) in g.row(r) {
            lhs += v * x[j];
            if (start..end).contains(&j) {
                cols[j - start].push((r, v));
            }
        }
        slack[r] = (program.h()[r] - lhs).max(0.0);
    }
    for (c, col) in cols.iter().enumerate() {
        let j = start + c;
        let mut step = x[j];
        for &(r, v) in col.iter().filter(|&&(_, v)| v < 0.0) {
            step = step.min(slack[r] / -v);
        }
        if step <= 0.0 {
            continue;
        }
        x[j] -= step;
        for &(r, v) in col {
            slack[r] = (slack[r] + v * step).max(0.0);
        }
    }
}

/// Shrinks the allocations toward any destination whose floor payout the
/// contributions do not quite cover. The solve meets the budget rows only to
/// its tolerance, and the bonus program downstream needs them exactly.
fn fund_allocations(
    allocation: &mut [AllocationEntry],
    contributions: &[ContributionEntry],
    state: &MarketState,
    trans: &TransitionModel,
    floor: f64,
) {
    let mut funded: BTreeMap<usize, f64> = BTreeMap::new();
    for c in contributions {
        *funded.entry(c.destination).or_default() += c.fraction * state.e[c.account];
    }
    let mut owed: BTreeMap<usize, f64> = BTreeMap::new();
    for a in allocation.iter() {
        *owed.entry(a.destination).or_default() +=
            floor * trans.p_comply(a.origin, a.destination) * a.fraction * state.s0[a.origin];
    }
    for a in allocation.iter_mut() {
        let need = owed[&a.destination];
        let have = funded.get(&a.destination).copied().unwrap_or(0.0);
        if need > have {
            a.fraction *= (1.0 - 1e-9) * have / need;
        }
    }
}

/// Scales down any group whose fractions sum past 1 by solver round-off.
fn normalize_rows<T>(
    entries: &mut [T],
    owner: impl Fn(&T) -> usize,
    fraction: impl Fn(&mut T) -> &mut f64,
) {
    let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
    for e in entries.iter_mut() {
        let o = owner(e);
        *sums.entry(o).or_default() += *fraction(e);
    }
    for e in entries.iter_mut() {
        let s = sums[&owner(e)];
        if s > 1.0 {
            *fraction(e) /= s;
        }
    }
}

/// Prunes the city when that is exact for `trans`, then solves with every
/// valid allocation pair among the kept locations.
pub fn solve_pruned(
    state: &MarketState,
    graph: &CityGraph,
    conv: &ConversionModel,
    trans: &TransitionModel,
    cfg: &PositioningConfig,
    tol: f64,
) -> Result<AllocationPlan> {
    let active = if trans.supports_pruning() {
        prune_active_set(graph, &state.d, &state.s0)?
    } else {
        ActiveSet::all(graph.n())
    };
    let index = vectorize_allocation(graph, &active);
    solve_positioning(state, graph, conv, trans, cfg, &active, &index, tol)
}

/// The null benchmark: no allocation, quantiles re-optimized.
pub fn solve_null(
    state: &MarketState,
    graph: &CityGraph,
    conv: &ConversionModel,
    trans: &TransitionModel,
    cfg: &PositioningConfig,
    tol: f64,
) -> Result<AllocationPlan> {
    let active = prune_active_set(graph, &state.d, &vec![0.0; graph.n()])?;
    solve_positioning(state, graph, conv, trans, cfg, &active, &AllocationIndex::none(), tol)
}

/// A PPZ offer to one driver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub driver_id: u64,
    pub origin: usize,
    pub destination: usize,
}

/// Draws a destination (or none) for every driver in `s0`.
///
/// Drivers are numbered consecutively by origin. Each driver at origin `o`
/// independently gets destination `j` with probability `A_oj`; the draws for
/// an origin depend only on `seed` and the origin.
pub fn sample_assignments(plan: &AllocationPlan, s0: &[f64], seed: u64) -> Result<Vec<Assignment>> {
    let mut counts = Vec::with_capacity(s0.len());
    for &s in s0 {
        if !(s >= 0.0 && (s - s.round()).abs() <= 1e-9) {
            return Err(Error::invalid(format!("driver count {s} is not a whole number")));
        }
        counts.push(s.round() as u64);
    }
    let rows = plan.by_origin();
    for (&o, row) in &rows {
        if o >= s0.len() {
            return Err(Error::LocationOutOfRange { index: o, n: s0.len() });
        }
        if let Some(&(_, a)) = row.iter().find(|(_, a)| !(*a >= 0.0)) {
            return Err(Error::invalid(format!("allocation fraction {a} at origin {o}")));
        }
        let total: f64 = row.iter().map(|&(_, a)| a).sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::invalid(format!(
                "allocation fractions at origin {o} sum to {total}"
            )));
        }
    }

    let mut out = Vec::new();
    let mut next_id = 0u64;
    for (o, &count) in counts.iter().enumerate() {
        let first = next_id;
        next_id += count;
        let Some(row) = rows.get(&o) else {
            continue;
        };
        let mut rng = rng::stream(&[seed, rng::tag::ASSIGN, o as u64]);
        let mut remaining = count;
        let mut mass = 1.0;
        let mut id = first;
        for &(j, a) in row {
            if remaining == 0 {
                break;
            }
            let p = if mass > 0.0 { (a / mass).clamp(0.0, 1.0) } else { 0.0 };
            mass -= a;
            let k = if p >= 1.0 {
                remaining
            } else if p <= 0.0 {
                0
            } else {
                Binomial::new(remaining, p).expect("probability in (0, 1)").sample(&mut rng)
            };
            for _ in 0..k {
                out.push(Assignment {
                    driver_id: id,
                    origin: o,
                    destination: j,
                });
                id += 1;
            }
            remaining -= k;
        }
    }
    Ok(out)
}

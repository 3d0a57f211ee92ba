//! One-step back-testing against the null benchmark.
//!
//! Each replication seeds an escrow ledger with synthetic PT income, then for
//! every policy solves positioning, prices and issues PPZs, and simulates one
//! period. The null benchmark keeps pricing but allocates nothing. Policies
//! share every random stream of a replication, so gains are compared seed by
//! seed.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{expected_responders, simulate_step, StepInputs, StepOutcome};
use crate::error::{check_len, Error, Result};
use crate::escrow::{clearance_targets, BonusBounds, Cents, EscrowEvent, EscrowLedger};
use crate::incentive::{compute_bonuses, issue_ppzs, DEFAULT_CONTRIB_WEIGHT};
use crate::market::{ConversionModel, MarketState};
use crate::positioning::{
    sample_assignments, solve_null, solve_pruned, AllocationPlan, Objective, PositioningConfig,
    TransitionModel,
};
use crate::rng;
use crate::spatial::CityGraph;

/// Relative KKT tolerance of the solves inside a back-test.
pub const BACKTEST_TOL: f64 = 1e-6;

/// Denominator floor for relative gains: one ride, or one currency unit.
pub const GAIN_FLOOR: f64 = 1.0;

const BOOTSTRAP_RESAMPLES: usize = 2000;

/// Synthetic PT income written to the ledger before each replication.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prefill {
    /// Total PT income, in currency units.
    pub budget: f64,
    /// Number of rides the income is spread over.
    pub rides: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub graph: CityGraph,
    pub state: MarketState,
    pub conv: ConversionModel,
    pub trans: TransitionModel,
    pub cfg: PositioningConfig,
    pub prefill: Prefill,
    /// Replication seeds; more replications than seeds extend the list
    /// deterministically.
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub epoch_label: String,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.n();
        self.state.validate()?;
        check_len("market state", n, self.state.n())?;
        check_len("conversion model", n, self.conv.n())?;
        self.trans.check_locations(n)?;
        self.cfg.validate()?;
        if !(self.prefill.budget.is_finite() && self.prefill.budget >= 0.0) {
            return Err(Error::invalid(format!("prefill budget {}", self.prefill.budget)));
        }
        if let Some(s) = self.state.s0.iter().find(|s| s.fract() != 0.0) {
            return Err(Error::invalid(format!("driver count {s} is not a whole number")));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(s) = self.seeds.iter().find(|&&s| !seen.insert(s)) {
            return Err(Error::invalid(format!("seed {s} is listed twice")));
        }
        Ok(())
    }

    /// Parses and validates a scenario.
    pub fn from_json(json: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(json)?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// The first `count` replication seeds.
    pub fn replication_seeds(&self, count: usize) -> Vec<u64> {
        let mut seeds: Vec<u64> = self.seeds.iter().copied().take(count).collect();
        let mut seen: std::collections::BTreeSet<u64> = seeds.iter().copied().collect();
        let mut k = 0u64;
        while seeds.len() < count {
            let s = rng::derive(&[rng::tag::SCENARIO, k]);
            if seen.insert(s) {
                seeds.push(s);
            }
            k += 1;
        }
        seeds
    }
}

/// Knobs of the synthetic grid city.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CityParams {
    pub n: usize,
    /// Grid width; defaults to the smallest square that holds `n` cells.
    pub width: Option<usize>,
    pub hotspots: usize,
    /// App opens added at a hotspot's centre.
    pub hotspot_intensity: f64,
    /// Standard deviation of a hotspot's bump, in cells.
    pub hotspot_spread: f64,
    /// App opens everywhere.
    pub base_demand: f64,
    /// Mean idle drivers per location.
    pub supply_mean: f64,
    /// Chebyshev radii of the masks.
    pub dispatch_radius: usize,
    pub alloc_radius: usize,
    pub contrib_radius: usize,
    pub beta_range: (f64, f64),
    pub fare_range: (f64, f64),
    pub reserve: f64,
    /// `None` lets prices grow without bound.
    pub x_max: Option<f64>,
    pub p_stay: f64,
    pub p_comply: f64,
    pub p_fail_stay: f64,
    pub bonus_min: f64,
    pub bonus_max: f64,
    pub objective: Objective,
    pub l1_weight: f64,
    pub budget: f64,
    pub prefill_rides: usize,
    pub replications: usize,
}

impl Default for CityParams {
    fn default() -> Self {
        CityParams {
            n: 400,
            width: None,
            hotspots: 3,
            hotspot_intensity: 8.0,
            hotspot_spread: 1.5,
            base_demand: 0.5,
            supply_mean: 1.5,
            dispatch_radius: 1,
            alloc_radius: 1,
            contrib_radius: 1,
            beta_range: (0.4, 1.0),
            fare_range: (5.0, 20.0),
            reserve: 0.0,
            x_max: None,
            p_stay: 0.9,
            p_comply: 0.6,
            p_fail_stay: 0.2,
            bonus_min: 1.0,
            bonus_max: 5.0,
            objective: Objective::Bookings,
            l1_weight: 0.0,
            budget: 200.0,
            prefill_rides: 400,
            replications: 500,
        }
    }
}

fn range(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// A grid city with hotspot demand, diffuse supply and masks from distance
/// thresholds. The same parameters and seed give the same scenario.
pub fn generate_synthetic_city(params: &CityParams, seed: u64) -> Result<Scenario> {
    let n = params.n;
    if n == 0 {
        return Err(Error::invalid("a city needs at least one location"));
    }
    let width = params.width.unwrap_or_else(|| (n as f64).sqrt().ceil() as usize);
    if width == 0 || width > n {
        return Err(Error::invalid(format!("grid width {width} for {n} locations")));
    }
    for (name, (lo, hi)) in [("beta_range", params.beta_range), ("fare_range", params.fare_range)] {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid(format!("{name} ({lo}, {hi})")));
        }
    }
    for (name, v) in [
        ("hotspot_intensity", params.hotspot_intensity),
        ("base_demand", params.base_demand),
        ("supply_mean", params.supply_mean),
        ("reserve", params.reserve),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::invalid(format!("{name} {v}")));
        }
    }
    if !(params.hotspot_spread > 0.0) {
        return Err(Error::invalid(format!("hotspot_spread {}", params.hotspot_spread)));
    }
    let cell = |i: usize| ((i % width) as i64, (i / width) as i64);
    let within = |i: usize, j: usize, radius: usize| {
        let (a, b) = (cell(i), cell(j));
        (a.0 - b.0).unsigned_abs().max((a.1 - b.1).unsigned_abs()) as usize <= radius
    };
    let mask = |radius: usize, self_pairs: bool| -> Vec<(usize, usize)> {
        let r = radius as i64;
        let mut pairs = Vec::new();
        for i in 0..n {
            let (x, y) = cell(i);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (cx, cy) = (x + dx, y + dy);
                    if cx < 0 || cy < 0 || cx >= width as i64 {
                        continue;
                    }
                    let j = (cy * width as i64 + cx) as usize;
                    if j < n && (self_pairs || j != i) && within(i, j, radius) {
                        pairs.push((i, j));
                    }
                }
            }
        }
        pairs
    };
    let graph = CityGraph::from_pairs(
        n,
        &mask(params.dispatch_radius, true),
        &mask(params.alloc_radius, false),
        &mask(params.contrib_radius, true),
        &mask(1, false),
    )?;

    let mut rng = rng::stream(&[seed, rng::tag::CITY]);
    let centres: Vec<(f64, f64)> = (0..params.hotspots)
        .map(|_| {
            let (x, y) = cell(rng.gen_range(0..n));
            (x as f64, y as f64)
        })
        .collect();
    let two_var = 2.0 * params.hotspot_spread * params.hotspot_spread;
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let (x, y) = cell(i);
            let bump: f64 = centres
                .iter()
                .map(|&(cx, cy)| {
                    let dist2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    (-dist2 / two_var).exp()
                })
                .sum();
            params.base_demand + params.hotspot_intensity * bump
        })
        .collect();
    let s0: Vec<f64> = if params.supply_mean > 0.0 {
        let dist = Poisson::new(params.supply_mean)
            .map_err(|e| Error::invalid(format!("supply_mean: {e}")))?;
        (0..n).map(|_| dist.sample(&mut rng).round()).collect()
    } else {
        vec![0.0; n]
    };
    let f: Vec<f64> = (0..n).map(|_| range(&mut rng, params.fare_range)).collect();
    let beta: Vec<f64> = (0..n).map(|_| range(&mut rng, params.beta_range)).collect();
    let seeds: Vec<u64> = (0..params.replications as u64)
        .map(|k| rng::derive(&[seed, rng::tag::SCENARIO, k]))
        .collect();

    let state = MarketState::new(d, s0, vec![0.0; n], vec![params.reserve; n], f, vec![0.0; n])?;
    let mut cfg = PositioningConfig::new(
        params.objective,
        BonusBounds::new(params.bonus_min, params.bonus_max)?,
    );
    cfg.l1_weight = params.l1_weight;
    let scenario = Scenario {
        graph,
        state,
        conv: ConversionModel::new(beta, params.x_max.unwrap_or(f64::INFINITY))?,
        trans: TransitionModel::uniform(params.p_stay, params.p_comply, params.p_fail_stay)?,
        cfg,
        prefill: Prefill {
            budget: params.budget,
            rides: params.prefill_rides,
        },
        seeds,
        epoch_label: format!("synthetic-{n}-{}-{seed}", params.hotspots),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// A ledger holding one replication's synthetic PT income.
///
/// Rides start at locations drawn in proportion to demand; each carries a
/// share of the budget and completes at its expected PT.
pub fn prefill_ledger(scenario: &Scenario, seed: u64) -> Result<EscrowLedger> {
    let n = scenario.graph.n();
    let mut ledger = EscrowLedger::with_contrib_mask(n, scenario.graph.contrib().clone());
    let Prefill { budget, rides } = scenario.prefill;
    let total_d: f64 = scenario.state.d.iter().sum();
    let total = (budget * 100.0).round() as Cents;
    if rides == 0 || total <= 0 || total_d <= 0.0 {
        return Ok(ledger);
    }
    let mut rng = rng::stream(&[seed, rng::tag::PREFILL]);
    let weights: Vec<f64> = (0..rides).map(|_| rng.gen_range(0.5..1.5)).collect();
    let weight_sum: f64 = weights.iter().sum();
    let mut given = 0;
    for (k, w) in weights.iter().enumerate() {
        let cents = if k + 1 == rides {
            total - given
        } else {
            ((total as f64) * w / weight_sum).floor() as Cents
        };
        given += cents;
        let mut u = rng.gen::<f64>() * total_d;
        let origin = scenario
            .state
            .d
            .iter()
            .position(|&d| {
                u -= d;
                u < 0.0
            })
            .unwrap_or(n - 1);
        let ref_id = k as u64;
        ledger.record(EscrowEvent::ride_accepted(ref_id, origin, cents))?;
        ledger.record(EscrowEvent::ride_completed(ref_id, origin, cents))?;
    }
    Ok(ledger)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Policy {
    #[serde(rename = "ppz-bookings")]
    PpzBookings,
    #[serde(rename = "ppz-conversion")]
    PpzConversion,
    #[serde(rename = "null")]
    Null,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::PpzBookings, Policy::PpzConversion, Policy::Null];

    pub fn name(self) -> &'static str {
        match self {
            Policy::PpzBookings => "ppz-bookings",
            Policy::PpzConversion => "ppz-conversion",
            Policy::Null => "null",
        }
    }

    fn objective(self) -> Option<Objective> {
        match self {
            Policy::PpzBookings => Some(Objective::Bookings),
            Policy::PpzConversion => Some(Objective::Conversion),
            Policy::Null => None,
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown policy {s:?}")))
    }
}

/// One policy in one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub seed: u64,
    pub policy: Policy,
    pub ok: bool,
    pub error: Option<String>,
    pub conversions: u64,
    pub no_pt_bookings: f64,
    pub ppz_issued: usize,
    pub ppz_paid: f64,
    /// All PT income in the ledger at the end of the period.
    pub pt_income: f64,
    /// Paid bonuses never exceeded income at any point of the period.
    pub budget_safe: bool,
    /// Relative gains over the null benchmark for the same seed.
    pub conversion_gain: Option<f64>,
    pub bookings_gain: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainStats {
    pub mean: f64,
    pub median: f64,
    /// Percentile bootstrap interval of the mean, 95%.
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: Policy,
    /// Replications where both this policy and the null benchmark succeeded.
    pub paired: usize,
    pub failures: usize,
    pub conversion_gain: GainStats,
    pub bookings_gain: GainStats,
    pub mean_conversions: f64,
    pub mean_no_pt_bookings: f64,
    pub mean_ppz_issued: f64,
    pub mean_ppz_paid: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub epoch_label: String,
    pub replications: usize,
    pub policies: Vec<PolicySummary>,
    pub rows: Vec<ReplicationRow>,
}

impl MetricsTable {
    /// Largest share of failed replications over the policies.
    pub fn failure_rate(&self) -> f64 {
        let worst = self.policies.iter().map(|p| p.failures).max().unwrap_or(0);
        worst as f64 / self.replications.max(1) as f64
    }

    pub fn summary(&self, policy: Policy) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.policy == policy)
    }

    /// The table without its raw rows.
    pub fn without_rows(&self) -> MetricsTable {
        MetricsTable {
            rows: Vec::new(),
            ..self.clone()
        }
    }
}

struct Run {
    outcome: StepOutcome,
    issued: usize,
    pt_income: f64,
    budget_safe: bool,
}

fn replicate_policy(
    scenario: &Scenario,
    policy: Policy,
    null_plan: &AllocationPlan,
    ledger: &EscrowLedger,
    state: &MarketState,
    seed: u64,
) -> Result<Run> {
    let mut ledger = ledger.clone();
    let mut plan_storage = None;
    let mut issued = Vec::new();
    if let Some(objective) = policy.objective() {
        let cfg = PositioningConfig {
            objective,
            ..scenario.cfg
        };
        let plan = solve_pruned(state, &scenario.graph, &scenario.conv, &scenario.trans, &cfg, BACKTEST_TOL)?;
        let responders = expected_responders(&plan.allocation, &state.s0, &scenario.trans)?;
        let targets = clearance_targets(&ledger, &scenario.graph, &responders, cfg.bounds)?;
        let bonus = compute_bonuses(
            &plan,
            state,
            &scenario.graph,
            &scenario.trans,
            &targets,
            cfg.bounds,
            DEFAULT_CONTRIB_WEIGHT,
            BACKTEST_TOL,
        )?;
        let assignments = sample_assignments(&plan, &state.s0, seed)?;
        issued = issue_ppzs(&bonus, &assignments, &mut ledger)?;
        plan_storage = Some(plan);
    }
    let plan = plan_storage.as_ref().unwrap_or(null_plan);
    let inputs = StepInputs {
        state,
        graph: &scenario.graph,
        trans: &scenario.trans,
        plan,
        issued: &issued,
        first_ref: ledger.fresh_ref(),
    };
    let outcome = simulate_step(&inputs, seed)?;
    let mut budget_safe = ledger.total_paid() <= ledger.total_income();
    for event in &outcome.events {
        ledger.record(event.clone())?;
        budget_safe &= ledger.total_paid() <= ledger.total_income();
    }
    Ok(Run {
        outcome,
        issued: issued.len(),
        pt_income: ledger.total_income() as f64 / 100.0,
        budget_safe,
    })
}

fn replicate(
    scenario: &Scenario,
    policies: &[Policy],
    null_plan: &Result<AllocationPlan, String>,
    seed: u64,
) -> Vec<ReplicationRow> {
    let prepared = prefill_ledger(scenario, seed).map(|ledger| {
        let mut state = scenario.state.clone();
        state.e = ledger.available_currency();
        state.epoch = ledger.version();
        (ledger, state)
    });
    let mut rows: Vec<ReplicationRow> = policies
        .iter()
        .map(|&policy| {
            let run = match (&prepared, null_plan) {
                (Err(e), _) => Err(e.to_string()),
                (_, Err(e)) => Err(e.clone()),
                (Ok((ledger, state)), Ok(null_plan)) => {
                    replicate_policy(scenario, policy, null_plan, ledger, state, seed)
                        .map_err(|e| e.to_string())
                }
            };
            match run {
                Ok(run) => ReplicationRow {
                    seed,
                    policy,
                    ok: true,
                    error: None,
                    conversions: run.outcome.conversions,
                    no_pt_bookings: run.outcome.no_pt_bookings,
                    ppz_issued: run.issued,
                    ppz_paid: run.outcome.ppz_paid,
                    pt_income: run.pt_income,
                    budget_safe: run.budget_safe,
                    conversion_gain: None,
                    bookings_gain: None,
                },
                Err(error) => ReplicationRow {
                    seed,
                    policy,
                    ok: false,
                    error: Some(error),
                    conversions: 0,
                    no_pt_bookings: 0.0,
                    ppz_issued: 0,
                    ppz_paid: 0.0,
                    pt_income: 0.0,
                    budget_safe: true,
                    conversion_gain: None,
                    bookings_gain: None,
                },
            }
        })
        .collect();
    if let Some(null) = rows.iter().find(|r| r.policy == Policy::Null && r.ok).cloned() {
        for row in rows.iter_mut().filter(|r| r.ok) {
            row.conversion_gain = Some(relative_gain(row.conversions as f64, null.conversions as f64));
            row.bookings_gain = Some(relative_gain(row.no_pt_bookings, null.no_pt_bookings));
        }
    }
    rows
}

pub fn relative_gain(policy: f64, null: f64) -> f64 {
    (policy - null) / null.max(GAIN_FLOOR)
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Mean, median and a percentile bootstrap interval of the mean.
pub fn gain_stats(values: &[f64], stream: &[u64]) -> GainStats {
    let n = values.len();
    if n == 0 {
        return GainStats {
            mean: f64::NAN,
            median: f64::NAN,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
        };
    }
    let mut path = vec![rng::tag::BOOTSTRAP];
    path.extend_from_slice(stream);
    let mut rng = rng::stream(&path);
    let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * (BOOTSTRAP_RESAMPLES - 1) as f64).round() as usize).min(BOOTSTRAP_RESAMPLES - 1)];
    GainStats {
        mean: mean(values),
        median: median(values),
        ci_low: at(0.025),
        ci_high: at(0.975),
    }
}

/// Aggregates raw rows into per-policy summaries, in the order given.
pub fn summarize(rows: &[ReplicationRow], policies: &[Policy], replications: usize) -> Vec<PolicySummary> {
    policies
        .iter()
        .enumerate()
        .map(|(index, &policy)| {
            let mine: Vec<&ReplicationRow> = rows.iter().filter(|r| r.policy == policy).collect();
            let paired: Vec<&ReplicationRow> =
                mine.iter().copied().filter(|r| r.conversion_gain.is_some()).collect();
            let collect = |f: &dyn Fn(&ReplicationRow) -> f64| paired.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let conv = collect(&|r| r.conversion_gain.unwrap_or(0.0));
            let book = collect(&|r| r.bookings_gain.unwrap_or(0.0));
            PolicySummary {
                policy,
                paired: paired.len(),
                failures: mine.iter().filter(|r| !r.ok).count() + replications.saturating_sub(mine.len()),
                conversion_gain: gain_stats(&conv, &[index as u64, 0]),
                bookings_gain: gain_stats(&book, &[index as u64, 1]),
                mean_conversions: mean(&collect(&|r| r.conversions as f64)),
                mean_no_pt_bookings: mean(&collect(&|r| r.no_pt_bookings)),
                mean_ppz_issued: mean(&collect(&|r| r.ppz_issued as f64)),
                mean_ppz_paid: mean(&collect(&|r| r.ppz_paid)),
            }
        })
        .collect()
}

/// Runs `replications` paired replications of each policy.
///
/// The null benchmark always runs, since every gain is measured against it,
/// but it is summarised only when requested. Its plan does not depend on the
/// escrow balances and is solved once. Failed solves are recorded on their
/// rows and left out of the summaries.
pub fn run_backtest(scenario: &Scenario, policies: &[Policy], replications: usize) -> Result<MetricsTable> {
    if replications == 0 {
        return Err(Error::invalid("at least one replication is needed"));
    }
    if policies.is_empty() {
        return Err(Error::invalid("no policies to run"));
    }
    scenario.validate()?;
    let mut requested: Vec<Policy> = Vec::new();
    for &p in policies {
        if !requested.contains(&p) {
            requested.push(p);
        }
    }
    let mut run: Vec<Policy> = requested.clone();
    if !run.contains(&Policy::Null) {
        run.push(Policy::Null);
    }
    let null_cfg = scenario.cfg;
    let null_plan = solve_null(&scenario.state, &scenario.graph, &scenario.conv, &scenario.trans, &null_cfg, BACKTEST_TOL)
        .map_err(|e| e.to_string());
    let seeds = scenario.replication_seeds(replications);
    let rows: Vec<ReplicationRow> = seeds
        .par_iter()
        .map(|&seed| replicate(scenario, &run, &null_plan, seed))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .filter(|r| requested.contains(&r.policy))
        .collect();
    Ok(MetricsTable {
        epoch_label: scenario.epoch_label.clone(),
        replications,
        policies: summarize(&rows, &requested, replications),
        rows,
    })
}

/// Rescales the supply seen in a split experiment to a whole-market rollout:
/// `(control / (1 − share), treatment / share)`.
pub fn counterfactual_supply(treatment: u64, control: u64, share: f64) -> Result<(f64, f64)> {
    if !(share > 0.0 && share < 1.0) {
        return Err(Error::invalid(format!("treatment share {share} is outside (0, 1)")));
    }
    Ok((control as f64 / (1.0 - share), treatment as f64 / share))
}

#[cfg(test)]
mod tests;

//! Supply evolution and the one-step stochastic market.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::escrow::{Cents, EscrowEvent};
use crate::incentive::IssuedPpz;
use crate::market::MarketState;
use crate::positioning::{AllocationEntry, AllocationPlan, TransitionModel};
use crate::rng;
use crate::spatial::CityGraph;

fn check_allocation(entries: &[AllocationEntry], n: usize) -> Result<()> {
    let mut sums = vec![0.0; n];
    for a in entries {
        for index in [a.origin, a.destination] {
            if index >= n {
                return Err(Error::LocationOutOfRange { index, n });
            }
        }
        if !(a.fraction >= 0.0) {
            return Err(Error::invalid(format!("allocation fraction {}", a.fraction)));
        }
        sums[a.origin] += a.fraction;
    }
    if let Some(o) = (0..n).find(|&o| sums[o] > 1.0 + 1e-9) {
        return Err(Error::invalid(format!(
            "allocation fractions at origin {o} sum to {}",
            sums[o]
        )));
    }
    Ok(())
}

/// Expected drivers at each location one period after allocating `entries`.
///
/// Unallocated drivers stay with the stay probability; each allocated
/// fraction lands according to its pair's distribution.
pub fn expected_supply(
    entries: &[AllocationEntry],
    s0: &[f64],
    trans: &TransitionModel,
) -> Result<Vec<f64>> {
    let n = s0.len();
    check_allocation(entries, n)?;
    let p0 = trans.p_stay();
    let mut s: Vec<f64> = s0.iter().map(|&v| p0 * v).collect();
    for a in entries {
        let moved = a.fraction * s0[a.origin];
        s[a.origin] -= p0 * moved;
        for (k, p) in trans.landing(a.origin, a.destination) {
            if k >= n {
                return Err(Error::LocationOutOfRange { index: k, n });
            }
            s[k] += p * moved;
        }
    }
    Ok(s)
}

/// Expected drivers earning a PPZ at each destination.
pub fn expected_responders(
    entries: &[AllocationEntry],
    s0: &[f64],
    trans: &TransitionModel,
) -> Result<Vec<f64>> {
    let n = s0.len();
    check_allocation(entries, n)?;
    let mut out = vec![0.0; n];
    for a in entries {
        out[a.destination] += trans.p_comply(a.origin, a.destination) * a.fraction * s0[a.origin];
    }
    Ok(out)
}

/// Everything one simulated period needs.
#[derive(Clone, Copy, Debug)]
pub struct StepInputs<'a> {
    pub state: &'a MarketState,
    pub graph: &'a CityGraph,
    pub trans: &'a TransitionModel,
    pub plan: &'a AllocationPlan,
    /// PPZs actually written to the ledger this epoch.
    pub issued: &'a [IssuedPpz],
    /// First reference id free for the ride events the step generates.
    pub first_ref: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Idle drivers per location after movement, PPZ holders included.
    pub realized_supply: Vec<u64>,
    pub requests: Vec<u64>,
    pub served: Vec<u64>,
    pub conversions: u64,
    /// Fares of served requests, excluding price markups.
    pub no_pt_bookings: f64,
    /// Bonuses earned, in currency units.
    pub ppz_paid: f64,
    pub events: Vec<EscrowEvent>,
}

fn whole(what: &str, v: &[f64]) -> Result<Vec<u64>> {
    v.iter()
        .map(|&s| {
            if s >= 0.0 && (s - s.round()).abs() <= 1e-9 {
                Ok(s.round() as u64)
            } else {
                Err(Error::invalid(format!("{what} {s} is not a whole number")))
            }
        })
        .collect()
}

/// Picks a location from a landing distribution with one uniform draw;
/// `None` is the offline remainder.
fn land(u: f64, landing: &[(usize, f64)]) -> Option<usize> {
    let mut acc = 0.0;
    for &(k, p) in landing {
        acc += p;
        if u < acc {
            return Some(k);
        }
    }
    None
}

/// Poisson draw by CDF inversion of a single uniform, so that two policies
/// with nearly equal rates at a location draw nearly equal counts. Very large
/// rates, where the pmf underflows, fall back to a direct sampler.
fn poisson(rate: f64, rng: &mut impl Rng) -> Result<u64> {
    if rate > 500.0 {
        return Poisson::new(rate)
            .map(|p| p.sample(rng) as u64)
            .map_err(|e| Error::invalid(format!("request rate {rate}: {e}")));
    }
    let u: f64 = rng.gen();
    let mut k = 0u64;
    let mut pmf = (-rate).exp();
    let mut cdf = pmf;
    while u > cdf && pmf > 0.0 {
        k += 1;
        pmf *= rate / k as f64;
        cdf += pmf;
    }
    Ok(k)
}

/// Simulates one period: drivers move, requests arrive, requests are matched.
///
/// Drivers are numbered consecutively by origin, as in
/// [`sample_assignments`](crate::positioning::sample_assignments). A driver
/// holding an issued PPZ lands per its pair's distribution; any other driver
/// stays with the stay probability. Drivers already holding a PPZ from an
/// earlier period stay put. Requests at `i` are Poisson with mean `d_i y_i`
/// and arrive in a random order; each is served by the neighborhood location
/// with the most idle drivers (lowest index on ties), where drivers that
/// reached their PPZ destination are dispatched first and earn their bonus.
/// Every served request produces an accept and a completion event carrying
/// its markup `f (x − 1)`; unearned PPZs expire at the end.
///
/// Random draws come from streams keyed by `seed` and the driver's origin or
/// the request's location, so two policies run with one seed see the same
/// per-driver and per-location randomness.
pub fn simulate_step(inputs: &StepInputs, seed: u64) -> Result<StepOutcome> {
    let StepInputs {
        state,
        graph,
        trans,
        plan,
        issued,
        first_ref,
    } = *inputs;
    let n = graph.n();
    state.validate()?;
    check_len("market state", n, state.n())?;
    check_len("plan quantiles", n, plan.y.len())?;
    check_len("plan price modifiers", n, plan.x.len())?;
    let s0 = whole("driver count", &state.s0)?;
    let s_bar = whole("PPZ holder count", &state.s_bar)?;

    let total: u64 = s0.iter().sum();
    let mut by_driver: HashMap<u64, &IssuedPpz> = HashMap::new();
    for p in issued {
        if p.driver_id >= total {
            return Err(Error::invalid(format!("PPZ for unknown driver {}", p.driver_id)));
        }
        if p.origin >= n || p.destination >= n {
            return Err(Error::LocationOutOfRange {
                index: p.origin.max(p.destination),
                n,
            });
        }
        by_driver.insert(p.driver_id, p);
    }

    // idle pools: drivers that reached their PPZ destination, then the rest
    let mut earners: Vec<VecDeque<&IssuedPpz>> = vec![VecDeque::new(); n];
    let mut others: Vec<u64> = s_bar.clone();
    let mut id = 0u64;
    for (o, &count) in s0.iter().enumerate() {
        let mut rng = rng::stream(&[seed, rng::tag::MOVE, o as u64]);
        for _ in 0..count {
            let u: f64 = rng.gen();
            match by_driver.get(&id) {
                Some(p) => {
                    if p.origin != o {
                        return Err(Error::invalid(format!(
                            "PPZ {} starts at {} but driver {id} is at {o}",
                            p.ref_id, p.origin
                        )));
                    }
                    match land(u, &trans.landing(o, p.destination)) {
                        Some(k) if k == p.destination => earners[k].push_back(p),
                        Some(k) => others[k] += 1,
                        None => {}
                    }
                }
                None => {
                    if u < trans.p_stay() {
                        others[o] += 1;
                    }
                }
            }
            id += 1;
        }
    }
    let realized_supply: Vec<u64> = (0..n).map(|k| others[k] + earners[k].len() as u64).collect();

    let mut requests = vec![0u64; n];
    let mut arrivals: Vec<(f64, usize)> = Vec::new();
    for i in 0..n {
        let rate = state.d[i] * plan.y[i];
        if rate > 0.0 {
            let mut rng = rng::stream(&[seed, rng::tag::DEMAND, i as u64]);
            requests[i] = poisson(rate, &mut rng)?;
            let mut order = rng::stream(&[seed, rng::tag::ORDER, i as u64]);
            for _ in 0..requests[i] {
                arrivals.push((order.gen(), i));
            }
        }
    }
    arrivals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut served = vec![0u64; n];
    let mut idle = realized_supply.clone();
    let mut events = Vec::new();
    let mut next_ref = first_ref;
    let mut bookings = 0.0;
    let mut paid: Cents = 0;
    let mut earned: HashSet<u64> = HashSet::new();
    for &(_, i) in &arrivals {
        let Some(k) = graph
            .dispatch()
            .row(i)
            .iter()
            .copied()
            .filter(|&k| idle[k] > 0)
            .max_by(|&a, &b| idle[a].cmp(&idle[b]).then(b.cmp(&a)))
        else {
            continue;
        };
        idle[k] -= 1;
        served[i] += 1;
        bookings += state.f[i];
        let markup = state.f[i] * (plan.x[i] - 1.0);
        let pt = if markup.is_finite() { (markup * 100.0).round().max(0.0) as Cents } else { 0 };
        events.push(EscrowEvent::ride_accepted(next_ref, i, pt));
        events.push(EscrowEvent::ride_completed(next_ref, i, pt));
        next_ref += 1;
        if let Some(p) = earners[k].pop_front() {
            events.push(EscrowEvent::ppz_earned(p.ref_id, p.destination));
            paid += p.bonus_cents;
            earned.insert(p.ref_id);
        } else {
            others[k] -= 1;
        }
    }
    for p in issued.iter().filter(|p| !earned.contains(&p.ref_id)) {
        events.push(EscrowEvent::ppz_expired(p.ref_id, p.destination));
    }

    Ok(StepOutcome {
        realized_supply,
        conversions: served.iter().sum(),
        requests,
        served,
        no_pt_bookings: bookings,
        ppz_paid: paid as f64 / 100.0,
        events,
    })
}

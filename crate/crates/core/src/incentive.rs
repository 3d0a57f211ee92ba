//! Bonus values and escrow contributions for a solved allocation.
//!
//! Every driver sent to the same destination is offered the same bonus. The
//! bonuses stay as close as possible to the clearance targets while the
//! expected payout at each destination is covered by the contributions of the
//! accounts allowed to fund it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::expected_responders;
use crate::error::{check_len, Error, Result};
use crate::escrow::{BonusBounds, Cents, EscrowEvent, EscrowLedger};
use crate::market::MarketState;
use crate::positioning::{AllocationPlan, Assignment, ContributionEntry, TransitionModel};
use crate::solver::{self, ConvexProgram, SolveOptions};
use crate::spatial::{vectorize_contribution, CityGraph};

/// Default weight of the penalty on total contribution fractions.
pub const DEFAULT_CONTRIB_WEIGHT: f64 = 1e-4;

/// Money an account puts behind a destination's bonuses, in currency units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Funding {
    pub destination: usize,
    pub account: usize,
    pub amount: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BonusPlan {
    /// Bonus per location in currency units; locations without expected
    /// responders carry their clamped target.
    pub bonus: Vec<f64>,
    pub responders: Vec<f64>,
    pub contributions: Vec<ContributionEntry>,
    pub funded: Vec<Funding>,
    pub objective: f64,
    pub epoch: u64,
}

/// Solves for bonuses and contributions.
///
/// `targets` are clamped into `bounds` first. Destinations with no expected
/// responders are not part of the program. Fails with
/// [`Error::Solver`] if even the bonus floor cannot be funded somewhere.
#[allow(clippy::too_many_arguments)]
pub fn compute_bonuses(
    plan: &AllocationPlan,
    state: &MarketState,
    graph: &CityGraph,
    trans: &TransitionModel,
    targets: &[f64],
    bounds: BonusBounds,
    contrib_weight: f64,
    tol: f64,
) -> Result<BonusPlan> {
    let n = graph.n();
    check_len("market state", n, state.n())?;
    check_len("bonus targets", n, targets.len())?;
    if !(contrib_weight.is_finite() && contrib_weight >= 0.0) {
        return Err(Error::invalid(format!("contribution weight {contrib_weight}")));
    }
    let responders = expected_responders(&plan.allocation, &state.s0, trans)?;
    let mut bonus: Vec<f64> = targets.iter().map(|&t| bounds.clamp(t)).collect();
    let destinations: Vec<usize> = (0..n).filter(|&j| responders[j] > 0.0).collect();
    if destinations.is_empty() {
        return Ok(BonusPlan {
            bonus,
            responders,
            contributions: Vec::new(),
            funded: Vec::new(),
            objective: 0.0,
            epoch: plan.epoch,
        });
    }

    let mut p = ConvexProgram::new(0);
    let b_var: Vec<usize> = destinations
        .iter()
        .map(|&j| {
            let v = p.add_var(bounds.min, bounds.max, 0.0);
            p.add_square(&[(v, 1.0)], -bonus[j], 1.0);
            v
        })
        .collect();
    let pairs = vectorize_contribution(graph, &destinations, |i| state.e[i] > 0.0);
    let c_start = p.num_vars();
    for _ in &pairs {
        p.add_var(0.0, 1.0, contrib_weight);
    }
    let mut rows: BTreeMap<usize, Vec<(usize, f64)>> = destinations
        .iter()
        .zip(&b_var)
        .map(|(&j, &v)| (j, vec![(v, responders[j])]))
        .collect();
    let mut per_account: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (k, &(i, j)) in pairs.iter().enumerate() {
        rows.get_mut(&j).unwrap().push((c_start + k, -state.e[i]));
        per_account.entry(i).or_default().push((c_start + k, 1.0));
    }
    for row in rows.values() {
        p.add_ineq(row, 0.0);
    }
    for row in per_account.values().filter(|r| r.len() > 1) {
        p.add_ineq(row, 1.0);
    }

    let result = solver::solve_with(&p, &SolveOptions::with_tol(tol))?.require_optimal()?;
    for (&j, &v) in destinations.iter().zip(&b_var) {
        bonus[j] = result.x[v].clamp(bounds.min, bounds.max);
    }
    let mut contributions = Vec::new();
    let mut funded = Vec::new();
    let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
    for (k, &(account, _)) in pairs.iter().enumerate() {
        *sums.entry(account).or_default() += result.x[c_start + k].clamp(0.0, 1.0);
    }
    for (k, &(account, destination)) in pairs.iter().enumerate() {
        let mut fraction = result.x[c_start + k].clamp(0.0, 1.0);
        let total = sums[&account];
        if total > 1.0 {
            fraction /= total;
        }
        contributions.push(ContributionEntry {
            account,
            destination,
            fraction,
        });
        if fraction > 0.0 {
            funded.push(Funding {
                destination,
                account,
                amount: fraction * state.e[account],
            });
        }
    }
    Ok(BonusPlan {
        bonus,
        responders,
        contributions,
        funded,
        objective: result.objective,
        epoch: plan.epoch,
    })
}

/// A PPZ as written to the ledger.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedPpz {
    pub driver_id: u64,
    pub origin: usize,
    pub destination: usize,
    pub bonus_cents: Cents,
    pub funding: Vec<(usize, Cents)>,
    pub epoch: u64,
    pub ref_id: u64,
}

/// Splits `total` cents in proportion to `weights`, handing leftover cents to
/// the largest remainders (lowest index on ties).
fn split_cents(total: Cents, weights: &[f64]) -> Vec<Cents> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || !(sum > 0.0) {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<Cents> = exact.iter().map(|x| x.floor() as Cents).collect();
    let mut left = total - out.iter().sum::<Cents>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle() {
        if left <= 0 {
            break;
        }
        out[k] += 1;
        left -= 1;
    }
    out
}

/// Writes one `PpzIssued` event per assignment.
///
/// The bonus is rounded down to whole cents and split over the destination's
/// funding accounts in proportion to their amounts. Once some account cannot
/// cover its share, the destination stops issuing and its remaining drivers
/// get no PPZ. The plan must have been computed against the ledger's current
/// version.
pub fn issue_ppzs(
    bonus: &BonusPlan,
    assignments: &[Assignment],
    ledger: &mut EscrowLedger,
) -> Result<Vec<IssuedPpz>> {
    if ledger.version() != bonus.epoch {
        return Err(Error::StalePlan {
            plan: bonus.epoch,
            ledger: ledger.version(),
        });
    }
    let n = ledger.n();
    let mut sources: BTreeMap<usize, (Vec<usize>, Vec<f64>)> = BTreeMap::new();
    for f in &bonus.funded {
        let entry = sources.entry(f.destination).or_default();
        entry.0.push(f.account);
        entry.1.push(f.amount);
    }
    let mut halted = vec![false; n];
    let mut issued = Vec::new();
    for a in assignments {
        let j = a.destination;
        if j >= n || a.origin >= n {
            return Err(Error::LocationOutOfRange {
                index: j.max(a.origin),
                n,
            });
        }
        if halted[j] {
            continue;
        }
        let cents = (bonus.bonus[j] * 100.0 + 1e-9).floor() as Cents;
        let Some((accounts, weights)) = sources.get(&j) else {
            halted[j] = true;
            continue;
        };
        if cents <= 0 {
            halted[j] = true;
            continue;
        }
        let shares = split_cents(cents, weights);
        let funding: Vec<(usize, Cents)> = accounts
            .iter()
            .copied()
            .zip(shares)
            .filter(|&(_, c)| c > 0)
            .collect();
        if funding.iter().any(|&(i, c)| ledger.available(i) < c) || funding.is_empty() {
            halted[j] = true;
            continue;
        }
        let ref_id = ledger.fresh_ref();
        ledger.record(EscrowEvent::ppz_issued(ref_id, j, cents, funding.clone()))?;
        issued.push(IssuedPpz {
            driver_id: a.driver_id,
            origin: a.origin,
            destination: j,
            bonus_cents: cents,
            funding,
            epoch: bonus.epoch,
            ref_id,
        });
    }
    Ok(issued)
}

use serde::{Deserialize, Serialize};

use super::ledger::EscrowLedger;
use crate::error::{check_len, Error, Result};
use crate::spatial::CityGraph;

/// Floor and ceiling on per-destination bonuses, in currency units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BonusBounds {
    pub min: f64,
    pub max: f64,
}

impl BonusBounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min > 0.0 && min <= max && max.is_finite()) {
            return Err(Error::invalid(format!(
                "bonus bounds need 0 < min <= max, got [{min}, {max}]"
            )));
        }
        Ok(BonusBounds { min, max })
    }

    pub fn clamp(&self, b: f64) -> f64 {
        b.clamp(self.min, self.max)
    }
}

/// Per-destination bonus that would spend the surrounding balances fully.
///
/// Each account splits its balance evenly over the destinations it may fund;
/// a destination's pooled share is divided among its expected responders
/// (at least one) and clamped into `bounds`.
pub fn clearance_targets(
    ledger: &EscrowLedger,
    graph: &CityGraph,
    expected_responders: &[f64],
    bounds: BonusBounds,
) -> Result<Vec<f64>> {
    check_len("escrow accounts", graph.n(), ledger.n())?;
    clearance_targets_from_balances(
        &ledger.available_currency(),
        graph,
        expected_responders,
        bounds,
    )
}

/// [`clearance_targets`] over a balance snapshot in currency units.
pub fn clearance_targets_from_balances(
    e: &[f64],
    graph: &CityGraph,
    expected_responders: &[f64],
    bounds: BonusBounds,
) -> Result<Vec<f64>> {
    let n = graph.n();
    check_len("balances", n, e.len())?;
    check_len("expected responders", n, expected_responders.len())?;
    if let Some(r) = expected_responders.iter().find(|r| !(**r >= 0.0)) {
        return Err(Error::invalid(format!("expected responders {r} is negative")));
    }
    let mut pooled = vec![0.0; n];
    for i in 0..n {
        let fanout = graph.fanout(i);
        if e[i] <= 0.0 || fanout == 0 {
            continue;
        }
        let share = e[i] / fanout as f64;
        for &j in graph.contrib().row(i) {
            pooled[j] += share;
        }
    }
    Ok(pooled
        .iter()
        .zip(expected_responders)
        .map(|(&p, &r)| bounds.clamp(p / r.max(1.0)))
        .collect())
}

//! Market snapshot and the price/conversion model.
//!
//! Riders respond to a multiplicative price modifier `x ≥ 1` through a
//! conversion quantile `y(x) = exp(−β (x − 1))`: the probability that an app
//! open becomes a request. Optimising over `y` instead of `x` turns the
//! bookings objective and the market-balance rows into affine functions, which
//! is what lets the positioning problem be a convex program.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Default ceiling on price modifiers.
pub const DEFAULT_X_MAX: f64 = 5.0;

/// Per-location market conditions at the start of a decision epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    /// App opens: riders deciding whether to request.
    pub d: Vec<f64>,
    /// Idle drivers that can be offered a PPZ.
    pub s0: Vec<f64>,
    /// Idle drivers already holding a PPZ.
    pub s_bar: Vec<f64>,
    /// Reserve level for each location's dispatch neighborhood.
    pub r: Vec<f64>,
    /// Expected time-and-distance fare.
    pub f: Vec<f64>,
    /// Available escrow balance, in currency units.
    pub e: Vec<f64>,
    /// Ledger version the balances were read at.
    #[serde(default)]
    pub epoch: u64,
}

impl MarketState {
    pub fn new(
        d: Vec<f64>,
        s0: Vec<f64>,
        s_bar: Vec<f64>,
        r: Vec<f64>,
        f: Vec<f64>,
        e: Vec<f64>,
    ) -> Result<Self> {
        let state = MarketState {
            d,
            s0,
            s_bar,
            r,
            f,
            e,
            epoch: 0,
        };
        state.validate()?;
        Ok(state)
    }

    /// A state with no supply, reserve or budget; handy as a starting point.
    pub fn with_demand(d: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        let n = d.len();
        MarketState::new(d, vec![0.0; n], vec![0.0; n], vec![0.0; n], f, vec![0.0; n])
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.d.len();
        for (name, v) in [
            ("d", &self.d),
            ("s0", &self.s0),
            ("s_bar", &self.s_bar),
            ("r", &self.r),
            ("f", &self.f),
            ("e", &self.e),
        ] {
            check_len(name, n, v.len())?;
            if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::invalid(format!(
                    "market vector {name} has invalid entry {x}"
                )));
            }
        }
        Ok(())
    }
}

/// Exponential conversion `y(x) = exp(−β (x − 1))` with `x ∈ [1, x_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConversionSpec", into = "ConversionSpec")]
pub struct ConversionModel {
    beta: Vec<f64>,
    x_max: f64,
}

/// Wire form; a missing or `null` ceiling means no ceiling.
#[derive(Clone, Serialize, Deserialize)]
struct ConversionSpec {
    beta: Vec<f64>,
    #[serde(default)]
    x_max: Option<f64>,
}

impl TryFrom<ConversionSpec> for ConversionModel {
    type Error = Error;

    fn try_from(c: ConversionSpec) -> Result<Self> {
        ConversionModel::new(c.beta, c.x_max.unwrap_or(f64::INFINITY))
    }
}

impl From<ConversionModel> for ConversionSpec {
    fn from(c: ConversionModel) -> Self {
        ConversionSpec {
            beta: c.beta,
            x_max: c.x_max.is_finite().then_some(c.x_max),
        }
    }
}

impl ConversionModel {
    /// `x_max` may be `f64::INFINITY`, which lets quantiles reach zero.
    pub fn new(beta: Vec<f64>, x_max: f64) -> Result<Self> {
        if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::invalid(format!("decay rate must be positive, got {b}")));
        }
        if x_max.is_nan() || x_max < 1.0 {
            return Err(Error::invalid(format!("x_max must be at least 1, got {x_max}")));
        }
        Ok(ConversionModel { beta, x_max })
    }

    pub fn uniform(n: usize, beta: f64) -> Result<Self> {
        ConversionModel::new(vec![beta; n], DEFAULT_X_MAX)
    }

    pub fn n(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Smallest admissible quantile at location `i`.
    pub fn y_min(&self, i: usize) -> f64 {
        if self.x_max.is_infinite() {
            0.0
        } else {
            (-self.beta[i] * (self.x_max - 1.0)).exp()
        }
    }

    pub fn y_mins(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.y_min(i)).collect()
    }

    pub fn convert(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("price modifiers", self.n(), x.len())?;
        x.iter()
            .zip(&self.beta)
            .map(|(&xi, &b)| {
                if !(xi >= 1.0) {
                    Err(Error::invalid(format!("price modifier {xi} is below 1")))
                } else {
                    Ok((-b * (xi - 1.0)).exp())
                }
            })
            .collect()
    }

    pub fn invert(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("quantiles", self.n(), y.len())?;
        y.iter()
            .zip(&self.beta)
            .map(|(&yi, &b)| {
                if !(yi > 0.0 && yi <= 1.0) {
                    Err(Error::invalid(format!("quantile {yi} is outside (0, 1]")))
                } else {
                    Ok(1.0 - yi.ln() / b)
                }
            })
            .collect()
    }
}

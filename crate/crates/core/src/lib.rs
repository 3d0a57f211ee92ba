//! Supply repositioning for two-sided spatial marketplaces.
//!
//! The crate is organised the way a decision epoch flows:
//!
//! - [`spatial`]: locations, sparse neighborhood masks, active-set pruning.
//! - [`market`]: the market snapshot and the price/conversion model.
//! - [`escrow`]: the event-sourced, location-based incentive budget ledger.
//! - [`solver`]: a sparse primal-dual interior-point QP solver with duals.
//! - [`positioning`]: the driver positioning program (allocation fractions and prices).
//! - [`incentive`]: bonus values, escrow contributions and PPZ issuance.
//! - [`dynamics`]: expected supply evolution and the stochastic one-step market.
//! - [`sensitivity`]: shadow prices of supply and where they stop being informative.
//! - [`backtest`]: scenarios, synthetic cities and the paired-seed benchmark.
//!
//! The guide under `book/` walks through each of these with runnable snippets.

// `!(x >= 0.0)` is how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod backtest;
pub mod dynamics;
pub mod error;
pub mod escrow;
pub mod incentive;
pub mod market;
pub mod positioning;
pub mod rng;
pub mod sensitivity;
pub mod solver;
pub mod spatial;

pub use error::{Error, Result};

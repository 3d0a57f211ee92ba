//! The guide under `book/src`, one module per chapter so doctest failures
//! point at the chapter they came from.

#[doc = include_str!("../../../book/src/intro.md")]
mod intro {}
#[doc = include_str!("../../../book/src/city.md")]
mod city {}
#[doc = include_str!("../../../book/src/conversion.md")]
mod conversion {}
#[doc = include_str!("../../../book/src/escrow.md")]
mod escrow {}
#[doc = include_str!("../../../book/src/solver.md")]
mod solver {}
#[doc = include_str!("../../../book/src/positioning.md")]
mod positioning {}
#[doc = include_str!("../../../book/src/incentives.md")]
mod incentives {}
#[doc = include_str!("../../../book/src/simulation.md")]
mod simulation {}
#[doc = include_str!("../../../book/src/sensitivity.md")]
mod sensitivity {}
#[doc = include_str!("../../../book/src/backtest.md")]
mod backtest {}

//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

pub mod dense;
pub mod market;

//! Relative model risk of FX exotics, measured by replaying the hedge of a
//! product priced with a candidate model inside a Heston-driven market.

pub mod error;
pub mod grid;
pub mod hedging;
pub mod interp;
pub mod market;
pub mod pricers;
pub mod pricing;
pub mod products;
pub mod rates;
pub mod risk;
pub mod surface;

pub use error::{Error, Result};

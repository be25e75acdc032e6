//! Pricing primitives: Black-Scholes vanillas and double-no-touch, Heston
//! vanillas, implied volatility and FX delta conventions.

pub mod barrier;
pub mod black_scholes;
pub mod heston;
pub mod normal;
pub mod quadrature;

pub use barrier::{bs_dnt_price, DntInputs};
pub use black_scholes::{
    atm_straddle_strike, bs_delta, bs_implied_vol, bs_vanilla_price, bs_vega, strike_from_delta,
    BsQuote, DeltaConvention, FxMarket, OptionKind,
};
pub use heston::{heston_vanilla_price, HestonSlice};

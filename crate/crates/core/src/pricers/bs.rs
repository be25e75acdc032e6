//! Black-Scholes with one constant vol per leg: the surface ATM vol at the
//! leg's expiry.

use super::fader::{bs_fader_price, KoMonitoring};
use super::{ModelPricer, Snapshot};
use crate::error::Result;
use crate::market::DAYS_PER_YEAR;
use crate::pricing::{bs_dnt_price, bs_vanilla_price, BsQuote, DntInputs};
use crate::products::{LegState, LifecycleState, Portfolio, Product};
use crate::rates::Curves;
use crate::surface::Bucket;

/// Value of one leg at constant `vol` from spot `spot` at time `t`.
pub fn bs_leg_price(
    leg: &Product,
    state: &LegState,
    t: f64,
    spot: f64,
    vol: f64,
    curves: &Curves,
) -> Result<f64> {
    let tau = leg.expiry() - t;
    if state.settled || tau <= 1e-12 {
        return Ok(0.0);
    }
    match leg {
        Product::DoubleNoTouch(d) => {
            if state.knocked {
                return Ok(0.0);
            }
            let p = bs_dnt_price(&DntInputs {
                spot,
                lower: d.lower,
                upper: d.upper,
                vol,
                rd: curves.domestic.average_rate(t, d.expiry),
                rf: curves.foreign.average_rate(t, d.expiry),
                expiry: tau,
                notional: d.notional,
            })?;
            Ok(d.position.sign() * p)
        }
        Product::Vanilla(v) => {
            let (df_dom, df_for) = curves.discounts(t, tau);
            let p = bs_vanilla_price(&BsQuote {
                spot,
                strike: v.strike,
                vol,
                df_dom,
                df_for,
                expiry: tau,
                kind: v.kind,
            })?;
            Ok(v.position.sign() * v.notional * p)
        }
        Product::Fader(f) => bs_fader_price(
            f,
            state,
            t,
            spot,
            vol,
            curves,
            KoMonitoring::Discrete(1.0 / DAYS_PER_YEAR),
        ),
    }
}

/// Remaining life of a leg that can still pay something.
pub(crate) fn live_tau(leg: &Product, state: &LegState, t: f64) -> Option<f64> {
    let tau = leg.expiry() - t;
    let dead = state.settled
        || tau <= 1e-12
        || matches!(leg, Product::DoubleNoTouch(_) if state.knocked);
    (!dead).then_some(tau)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BsPricer;

impl ModelPricer for BsPricer {
    fn name(&self) -> &'static str {
        "bs"
    }

    fn surface_buckets(&self) -> Option<Vec<Bucket>> {
        Some(vec![Bucket::Put(0.25), Bucket::Atm])
    }

    fn price(&self, portfolio: &Portfolio, state: &LifecycleState, snap: &Snapshot) -> Result<f64> {
        let mut total = 0.0;
        for (leg, st) in portfolio.legs.iter().zip(&state.legs) {
            let Some(tau) = live_tau(leg, st, snap.time) else {
                continue;
            };
            let vol = snap.surface()?.atm_vol(tau);
            total += bs_leg_price(leg, st, snap.time, snap.spot, vol, snap.curves)?;
        }
        Ok(total)
    }
}

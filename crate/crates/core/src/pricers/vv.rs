//! Vanna-volga: the Black-Scholes price at the ATM vol plus the smile cost of
//! three pivot vanillas weighted to match the product's vega, vanna and
//! volga.

use serde::{Deserialize, Serialize};

use super::bs::{bs_leg_price, live_tau};
use super::{ModelPricer, Snapshot};
use crate::error::{Error, Result};
use crate::pricing::{bs_vanilla_price, strike_from_delta, DeltaConvention, FxMarket, OptionKind};
use crate::products::{LifecycleState, Portfolio};
use crate::surface::Bucket;

/// Vol bump for the finite-difference greeks.
pub const VOL_BUMP: f64 = 1e-4;
/// Relative spot bump for vanna.
pub const SPOT_BUMP: f64 = 1e-4;
/// Largest 1-norm condition number accepted for the pivot system.
pub const MAX_CONDITION: f64 = 1e10;

/// Vega, vanna and volga of a price function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Greeks {
    pub vega: f64,
    pub vanna: f64,
    pub volga: f64,
}

impl Greeks {
    /// Central differences of `f(spot, vol)`.
    pub fn by_bumping(spot: f64, vol: f64, f: impl Fn(f64, f64) -> Result<f64>) -> Result<Greeks> {
        let h = VOL_BUMP;
        let d = spot * SPOT_BUMP;
        let mid = f(spot, vol)?;
        let up = f(spot, vol + h)?;
        let dn = f(spot, vol - h)?;
        let uu = f(spot + d, vol + h)?;
        let ud = f(spot + d, vol - h)?;
        let du = f(spot - d, vol + h)?;
        let dd = f(spot - d, vol - h)?;
        Ok(Greeks {
            vega: (up - dn) / (2.0 * h),
            vanna: (uu - ud - du + dd) / (4.0 * h * d),
            volga: (up - 2.0 * mid + dn) / (h * h),
        })
    }

    fn as_array(&self) -> [f64; 3] {
        [self.vega, self.vanna, self.volga]
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn norm1(m: &[[f64; 3]; 3]) -> f64 {
    (0..3)
        .map(|j| (0..3).map(|i| m[i][j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Weights `x` with `Σ_j x_j · pivot_j = product` for each of vega, vanna
/// and volga.
pub fn vv_weights(product: &Greeks, pivots: &[Greeks; 3]) -> Result<[f64; 3]> {
    // column j holds pivot j
    let mut a = [[0.0; 3]; 3];
    for (j, p) in pivots.iter().enumerate() {
        for (i, g) in p.as_array().into_iter().enumerate() {
            a[i][j] = g;
        }
    }
    let det = det3(&a);
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            // cofactor of a[j][i]
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            *cell = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / det;
        }
    }
    let cond = norm1(&a) * norm1(&inv);
    if !det.is_finite() || det == 0.0 || !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::Numeric(format!(
            "vanna-volga pivot system is singular (condition number {cond:.3e})"
        )));
    }
    let b = product.as_array();
    let mut x = [0.0; 3];
    for (i, xi) in x.iter_mut().enumerate() {
        *xi = (0..3).map(|k| inv[i][k] * b[k]).sum();
    }
    Ok(x)
}

/// A pivot vanilla and its two vols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pivot {
    pub strike: f64,
    pub market_vol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VvPricer {
    /// Factor in `[0, 1]` applied to the smile correction.
    pub attenuation: f64,
    /// Absolute delta of the wing pivots.
    pub pivot_delta: f64,
}

impl Default for VvPricer {
    fn default() -> Self {
        Self {
            attenuation: 1.0,
            pivot_delta: 0.25,
        }
    }
}

impl VvPricer {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.attenuation) {
            return Err(Error::invalid("vv.attenuation", "must lie in [0, 1]"));
        }
        if !(self.pivot_delta > 0.0 && self.pivot_delta < 0.5) {
            return Err(Error::invalid("vv.pivot_delta", "must lie in (0, 0.5)"));
        }
        Ok(())
    }

    /// The 25-delta put, ATM and 25-delta call at `tau` with their surface vols.
    pub fn pivots(&self, snap: &Snapshot, tau: f64) -> Result<(FxMarket, [Pivot; 3])> {
        let smile = snap.surface()?.smile(tau)?;
        let (df_dom, df_for) = snap.curves.discounts(snap.time, tau);
        let market = FxMarket {
            spot: snap.spot,
            df_dom,
            df_for,
            expiry: tau,
        };
        let conv = DeltaConvention::default();
        let buckets = [
            Bucket::Put(self.pivot_delta),
            Bucket::Atm,
            Bucket::Call(self.pivot_delta),
        ];
        let mut out = [Pivot {
            strike: 0.0,
            market_vol: 0.0,
        }; 3];
        for (p, b) in out.iter_mut().zip(buckets) {
            let vol = smile.vol_at_call_delta(b.call_delta(df_for));
            p.market_vol = vol;
            p.strike = strike_from_delta(b.quoted_delta(df_for), vol, &conv, &market)?;
        }
        Ok((market, out))
    }
}

fn call(market: &FxMarket, spot: f64, strike: f64, vol: f64) -> Result<f64> {
    bs_vanilla_price(&FxMarket { spot, ..*market }.quote(strike, vol, OptionKind::Call))
}

impl ModelPricer for VvPricer {
    fn name(&self) -> &'static str {
        "vv"
    }

    fn surface_buckets(&self) -> Option<Vec<Bucket>> {
        Some(vec![
            Bucket::Put(self.pivot_delta),
            Bucket::Atm,
            Bucket::Call(self.pivot_delta),
        ])
    }

    fn price(&self, portfolio: &Portfolio, state: &LifecycleState, snap: &Snapshot) -> Result<f64> {
        let mut total = 0.0;
        for (leg, st) in portfolio.legs.iter().zip(&state.legs) {
            let Some(tau) = live_tau(leg, st, snap.time) else {
                continue;
            };
            let surface = snap.surface()?;
            let atm = surface.atm_vol(tau);
            let f = |s: f64, v: f64| bs_leg_price(leg, st, snap.time, s, v, snap.curves);
            let base = f(snap.spot, atm)?;
            let (market, pivots) = self.pivots(snap, tau)?;
            let product = Greeks::by_bumping(snap.spot, atm, f)?;
            if product.vega == 0.0 && product.vanna == 0.0 && product.volga == 0.0 {
                total += base;
                continue;
            }
            let mut pg = [product; 3];
            for (g, p) in pg.iter_mut().zip(&pivots) {
                *g = Greeks::by_bumping(snap.spot, atm, |s, v| call(&market, s, p.strike, v))?;
            }
            let x = vv_weights(&product, &pg)?;
            let mut correction = 0.0;
            for (xj, p) in x.iter().zip(&pivots) {
                let smile_cost = call(&market, snap.spot, p.strike, p.market_vol)?
                    - call(&market, snap.spot, p.strike, atm)?;
                correction += xj * smile_cost;
            }
            total += base + self.attenuation * correction;
        }
        Ok(total)
    }
}

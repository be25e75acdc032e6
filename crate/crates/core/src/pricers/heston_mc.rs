//! Heston Monte Carlo on the market's own Euler scheme, with optional
//! Brownian-bridge barrier correction between daily observations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{simulate_path, EulerSchedule, HestonParams, PathGrid, DAYS_PER_YEAR};
use crate::products::{Portfolio, Product};
use crate::rates::Curves;

/// How barriers are observed along simulated paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierMonitoring {
    /// Only the simulated dates count.
    #[default]
    Daily,
    /// Crossings between dates are accounted for with the bridge probability.
    BrownianBridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub price: f64,
    pub std_error: f64,
    pub n_paths: u64,
}

/// Probability that a Brownian bridge in log space from `x0` to `x1` over a
/// step of total variance `var` touches level `b` (both ends on the same
/// side of it).
#[inline]
pub fn bridge_touch_probability(x0: f64, x1: f64, b: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return 0.0;
    }
    let prod = (x0 - b) * (x1 - b);
    if prod <= 0.0 {
        return 1.0;
    }
    (-2.0 * prod / var).exp()
}

/// Probability of touching none of the barriers (log levels) between two
/// observations `x0 → x1` with variances `v0, v1` at the ends, `dt` apart.
/// The bridge vol is the average of `√v` at the two ends.
#[inline]
pub fn bridge_survival(x0: f64, x1: f64, v0: f64, v1: f64, dt: f64, lower: Option<f64>, upper: Option<f64>) -> f64 {
    let vol = 0.5 * (v0.max(0.0).sqrt() + v1.max(0.0).sqrt());
    let var = vol * vol * dt;
    let mut w = 1.0;
    if let Some(l) = lower {
        w *= 1.0 - bridge_touch_probability(x0, x1, l, var);
    }
    if let Some(u) = upper {
        w *= 1.0 - bridge_touch_probability(x0, x1, u, var);
    }
    w
}

#[inline]
fn interval_survival(path: &PathGrid, k: usize, lower: Option<f64>, upper: Option<f64>, dt: f64) -> f64 {
    bridge_survival(
        path.spots[k].ln(),
        path.spots[k + 1].ln(),
        path.variances[k],
        path.variances[k + 1],
        dt,
        lower,
        upper,
    )
}

/// Undiscounted expiry cash flow of `leg` along `path`, with barrier
/// survival folded in as a weight.
fn leg_payoff(leg: &Product, path: &PathGrid, schedule: &EulerSchedule, monitoring: BarrierMonitoring) -> f64 {
    let t0 = path.dates[0];
    let last = path
        .dates
        .iter()
        .position(|&d| d >= leg.expiry() - 1e-9)
        .unwrap_or(path.dates.len() - 1);
    let bridge = monitoring == BarrierMonitoring::BrownianBridge;
    match leg {
        Product::Vanilla(v) => {
            let s = path.spots[last];
            v.position.sign() * v.notional * (v.kind.sign() * (s - v.strike)).max(0.0)
        }
        Product::DoubleNoTouch(d) => {
            let (lo, hi) = (d.lower.ln(), d.upper.ln());
            let mut w = 1.0;
            for k in 0..last {
                let s = path.spots[k + 1];
                if s <= d.lower || s >= d.upper {
                    return 0.0;
                }
                if bridge {
                    w *= interval_survival(path, k, Some(lo), Some(hi), schedule.dt(k));
                }
            }
            d.position.sign() * d.notional * w
        }
        Product::Fader(f) => {
            let lo = f.ko_lower.map(f64::ln);
            let hi = f.ko_upper.map(f64::ln);
            let mut w = 1.0;
            let mut notional = 0.0;
            for k in 0..last {
                let s = path.spots[k + 1];
                let t = path.dates[k + 1];
                if w > 0.0 && f.knocked_out_at(s) {
                    w = 0.0;
                }
                if bridge && w > 0.0 && f.has_barriers() {
                    w *= interval_survival(path, k, lo, hi, schedule.dt(k));
                }
                if t > t0 {
                    if let Some(j) = f.fading_dates.iter().position(|&d| (d - t).abs() < 1e-9) {
                        if f.in_fading_range(s) {
                            notional += w * f.fractions[j] * f.max_notional;
                        }
                    }
                }
            }
            f.position.sign() * notional * (path.spots[last] - f.strike)
        }
    }
}

/// Discounted mean payoff of `portfolio` (fresh lifecycle) from the state
/// `(params.s0, params.v0)` at time `t0`, on daily steps.
pub fn heston_mc_price(
    portfolio: &Portfolio,
    params: &HestonParams,
    curves: &Curves,
    t0: f64,
    n_paths: u64,
    seed: u64,
    monitoring: BarrierMonitoring,
) -> Result<McEstimate> {
    params.validate()?;
    curves.validate()?;
    portfolio.validate()?;
    if n_paths < 1000 {
        return Err(Error::invalid("n_paths", "need at least 1000 paths"));
    }
    let horizon = portfolio.expiry() - t0;
    if !(horizon > 0.0) {
        return Err(Error::invalid("t0", "must precede the last expiry"));
    }
    let days = (horizon * DAYS_PER_YEAR - 1e-9).ceil() as usize;
    let dates: Vec<f64> = (0..=days).map(|k| t0 + k as f64 / DAYS_PER_YEAR).collect();
    let snapped = portfolio.snapped(&dates)?;
    let schedule = EulerSchedule::new(&dates, curves);
    let discounts: Vec<f64> = snapped
        .legs
        .iter()
        .map(|l| curves.domestic.discount(t0, l.expiry()))
        .collect();
    // Welford: constant payoffs give an exact mean and zero error
    let (mut mean, mut m2) = (0.0, 0.0);
    for id in 0..n_paths {
        let path = simulate_path(params, &schedule, &dates, seed, id);
        let x: f64 = snapped
            .legs
            .iter()
            .zip(&discounts)
            .map(|(leg, df)| df * leg_payoff(leg, &path, &schedule, monitoring))
            .sum();
        let d = x - mean;
        mean += d / (id + 1) as f64;
        m2 += d * (x - mean);
    }
    let n = n_paths as f64;
    let var = m2 / (n - 1.0);
    Ok(McEstimate {
        price: mean,
        std_error: (var / n).sqrt(),
        n_paths,
    })
}

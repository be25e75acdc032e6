//! Forward faders under Black-Scholes.
//!
//! Each remaining fading date contributes the value of a forward paid on the
//! event "alive and inside the fading range" observed on that date. With the
//! log-spot a drifted Brownian motion killed at the knock-out levels, both
//! the probability of that event and the partial expectation of the spot are
//! sums of Gaussian integrals over the images of the killed kernel. Daily
//! knock-out monitoring is approximated by moving each barrier away from the
//! spot by `0.5826 σ √Δt`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::market::{path_rng, DAYS_PER_YEAR};
use crate::pricing::normal::cdf;
use crate::products::{FaderForwardLeg, LegState};
use crate::rates::Curves;

/// Continuity correction for discretely monitored barriers.
pub const BGK_BETA: f64 = 0.582_597_157_939_010_6;

/// How the knock-out levels are observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KoMonitoring {
    Continuous,
    /// Observations every `dt` years.
    Discrete(f64),
}

/// Killed drifted Brownian motion `X_τ = μτ + σW_τ`, `X_0 = 0`, absorbed at
/// `lower < 0` and/or `upper > 0` (log units).
struct KilledGaussian {
    mu: f64,
    var: f64,
    s: f64,
    lower: Option<f64>,
    upper: Option<f64>,
}

impl KilledGaussian {
    /// Signed image centres of the driftless kernel.
    fn images(&self) -> Vec<(f64, f64)> {
        match (self.lower, self.upper) {
            (None, None) => vec![(1.0, 0.0)],
            (Some(l), None) => vec![(1.0, 0.0), (-1.0, 2.0 * l)],
            (None, Some(u)) => vec![(1.0, 0.0), (-1.0, 2.0 * u)],
            (Some(l), Some(u)) => {
                let w = u - l;
                let n_max = ((4.0 * self.s / w).ceil() as i64 + 4).min(200);
                let mut out = Vec::with_capacity(2 * (2 * n_max as usize + 1));
                for n in -n_max..=n_max {
                    let shift = 2.0 * n as f64 * w;
                    out.push((1.0, shift));
                    out.push((-1.0, 2.0 * u - shift));
                }
                out
            }
        }
    }

    /// `E[e^{c X_τ} 1{alive} 1{a < X_τ < b}]`.
    fn moment(&self, c: f64, a: f64, b: f64) -> f64 {
        let a = self.lower.map_or(a, |l| a.max(l));
        let b = self.upper.map_or(b, |u| b.min(u));
        if a >= b {
            return 0.0;
        }
        // Girsanov: drifted density = exp(k y - μ²τ/(2σ²)) × driftless density
        let k = self.mu / self.var + c;
        let s2 = self.s * self.s;
        let tilt = -0.5 * self.mu * self.mu * s2 / (self.var * self.var);
        let mut total = 0.0;
        for (sign, centre) in self.images() {
            let m = centre + k * s2;
            let band = cdf((b - m) / self.s) - cdf((a - m) / self.s);
            if band > 0.0 {
                total += sign * (k * centre + 0.5 * k * k * s2 + tilt + band.ln()).exp();
            }
        }
        total.max(0.0)
    }
}

/// Value at time `t` and spot `spot` of one fader leg with lifecycle
/// `state`, priced at constant `vol`. Fading dates at or before `t` are
/// taken as already applied.
pub fn bs_fader_price(
    leg: &FaderForwardLeg,
    state: &LegState,
    t: f64,
    spot: f64,
    vol: f64,
    curves: &Curves,
    monitoring: KoMonitoring,
) -> Result<f64> {
    let sign = leg.position.sign();
    if state.settled || t > leg.expiry + 1e-12 {
        return Ok(0.0);
    }
    let (pd, pf) = curves.discounts(t, leg.expiry - t);
    let mut value = state.accrued * (spot * pf - leg.strike * pd);
    if state.knocked {
        return Ok(sign * value);
    }
    let shift = match monitoring {
        KoMonitoring::Continuous => 0.0,
        KoMonitoring::Discrete(dt) => BGK_BETA * vol * dt.sqrt(),
    };
    let ln_lower = leg.ko_lower.map(|l| (l / spot).ln() - shift);
    let ln_upper = leg.ko_upper.map(|u| (u / spot).ln() + shift);
    // Knocks are recorded in `state` on observation dates. A spot past the
    // traded level but inside the shifted one (a bumped spot) is still
    // alive, and the continuation value reaches zero at the shifted level.
    if ln_lower.is_some_and(|l| l >= 0.0) || ln_upper.is_some_and(|u| u <= 0.0) {
        return Ok(sign * value);
    }
    let fade_lo = (leg.lower_fade / spot).ln();
    let fade_hi = leg.upper_fade.map_or(f64::INFINITY, |u| (u / spot).ln());
    for (&ti, &frac) in leg.fading_dates.iter().zip(&leg.fractions) {
        if ti <= t + 1e-12 {
            continue;
        }
        let tau = ti - t;
        let carry = curves.domestic.average_rate(t, ti) - curves.foreign.average_rate(t, ti);
        let var = vol * vol;
        let kg = KilledGaussian {
            mu: carry - 0.5 * var,
            var,
            s: vol * tau.sqrt(),
            lower: ln_lower,
            upper: ln_upper,
        };
        let prob = kg.moment(0.0, fade_lo, fade_hi);
        let spot_part = kg.moment(1.0, fade_lo, fade_hi);
        // forward to expiry seen from ti, discounted back to t
        let pf_ti_t = curves.foreign.discount(ti, leg.expiry);
        let pd_t_ti = curves.domestic.discount(t, ti);
        value += frac
            * leg.max_notional
            * (spot * spot_part * pf_ti_t * pd_t_ti - leg.strike * pd * prob);
    }
    Ok(sign * value)
}

/// Monte Carlo of the same leg with exact log-normal daily steps, knock-out
/// checked on every day. Returns `(price, standard error)`.
pub fn bs_fader_mc_price(
    leg: &FaderForwardLeg,
    state: &LegState,
    t: f64,
    spot: f64,
    vol: f64,
    curves: &Curves,
    n_paths: u64,
    seed: u64,
) -> (f64, f64) {
    let sign = leg.position.sign();
    if state.settled || t > leg.expiry + 1e-12 {
        return (0.0, 0.0);
    }
    let dt = 1.0 / DAYS_PER_YEAR;
    let steps = ((leg.expiry - t) / dt).round().max(1.0) as usize;
    let pd = curves.domestic.discount(t, leg.expiry);
    let (mut sum, mut sum2) = (0.0, 0.0);
    for id in 0..n_paths {
        let mut rng = path_rng(seed, id);
        let mut s = spot;
        let mut notional = state.accrued;
        let mut alive = !state.knocked;
        let mut prev = t;
        for k in 1..=steps {
            let now = t + k as f64 * dt;
            let carry = (curves.domestic.integral(now) - curves.domestic.integral(prev))
                - (curves.foreign.integral(now) - curves.foreign.integral(prev));
            let z: f64 = rng.sample(StandardNormal);
            s *= (carry - 0.5 * vol * vol * dt + vol * dt.sqrt() * z).exp();
            prev = now;
            if alive && leg.knocked_out_at(s) {
                alive = false;
            }
            if alive {
                for (&d, &f) in leg.fading_dates.iter().zip(&leg.fractions) {
                    if (d - now).abs() < 0.5 * dt && d > t + 1e-12 && leg.in_fading_range(s) {
                        notional += f * leg.max_notional;
                    }
                }
            }
        }
        let x = sign * pd * notional * (s - leg.strike);
        sum += x;
        sum2 += x * x;
    }
    let n = n_paths as f64;
    let mean = sum / n;
    let var = (sum2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::products::Position;

    fn leg(ko: Option<f64>) -> FaderForwardLeg {
        let (fading_dates, fractions) = FaderForwardLeg::regular_dates(30.0 / 365.0, 150.0 / 365.0);
        FaderForwardLeg {
            strike: 1.29,
            fading_dates,
            fractions,
            lower_fade: 1.175,
            upper_fade: Some(1.33),
            ko_lower: ko,
            ko_upper: None,
            max_notional: 1.0,
            expiry: 150.0 / 365.0,
            position: Position::Long,
        }
    }

    #[test]
    fn killed_moments_reduce_to_gaussian_without_barriers() {
        let kg = KilledGaussian {
            mu: 0.01,
            var: 0.04,
            s: 0.2,
            lower: None,
            upper: None,
        };
        let p = kg.moment(0.0, -0.1, 0.15);
        let exact = cdf((0.15 - 0.01) / 0.2) - cdf((-0.1 - 0.01) / 0.2);
        assert!((p - exact).abs() < 1e-14);
        // E[e^X] = e^{μτ + s²/2}
        let m = kg.moment(1.0, -50.0, 50.0);
        assert!((m - (0.01f64 + 0.02).exp()).abs() < 1e-12);
    }

    #[test]
    fn double_barrier_moment_matches_corridor_survival() {
        let (l, u) = (-0.05, 0.07);
        let kg = KilledGaussian {
            mu: -0.003,
            var: 0.0081,
            s: 0.09,
            lower: Some(l),
            upper: Some(u),
        };
        let p = kg.moment(0.0, l, u);
        let q = crate::pricing::barrier::corridor_survival(-l, u - l, -0.003, 0.09, 1.0);
        assert!((p - q).abs() < 1e-12, "{p} vs {q}");
    }

    #[test]
    fn fully_accrued_leg_is_a_forward() {
        let l = leg(Some(1.15));
        let st = LegState {
            accrued: 1.0,
            ..LegState::default()
        };
        let curves = Curves::flat(0.03, 0.01);
        let t = l.fading_dates[l.fading_dates.len() - 1];
        let v = bs_fader_price(&l, &st, t, 1.31, 0.1, &curves, KoMonitoring::Continuous).unwrap();
        let (pd, pf) = curves.discounts(t, l.expiry - t);
        assert!((v - (1.31 * pf - 1.29 * pd)).abs() < 1e-15);
    }

    #[test]
    fn analytic_matches_monte_carlo() {
        let curves = Curves::flat(0.02, 0.01);
        for ko in [None, Some(1.15)] {
            let l = leg(ko);
            let st = LegState::default();
            let a = bs_fader_price(&l, &st, 0.0, 1.2096, 0.1, &curves, KoMonitoring::Discrete(1.0 / 365.0))
                .unwrap();
            let (m, se) = bs_fader_mc_price(&l, &st, 0.0, 1.2096, 0.1, &curves, 100_000, 11);
            assert!((a - m).abs() < 3.0 * se, "ko {ko:?}: {a} vs {m} ± {se}");
        }
    }
}

//! Double-no-touch under Black-Scholes with continuous monitoring.
//!
//! The survival probability of the log-spot inside `(ln L, ln U)` is summed as
//! an image expansion of the killed Gaussian kernel (Ikeda-Kunitomo form),
//! each image contributing a difference of normal CDFs.

use super::normal::cdf;
use crate::error::{Error, Result};

const TERM_TOL: f64 = 1e-12;
const MAX_TERMS: i64 = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DntInputs {
    pub spot: f64,
    pub lower: f64,
    pub upper: f64,
    pub vol: f64,
    /// Constant domestic rate over the remaining life.
    pub rd: f64,
    /// Constant foreign rate over the remaining life.
    pub rf: f64,
    pub expiry: f64,
    /// Domestic amount paid at expiry if no barrier was touched.
    pub notional: f64,
}

/// Probability that GBM with drift `mu` (of the log) and volatility `vol`,
/// started at log-distance `x` above the lower barrier, stays in `(0, width)`
/// for `expiry` years.
pub fn corridor_survival(x: f64, width: f64, mu: f64, vol: f64, expiry: f64) -> f64 {
    if x <= 0.0 || x >= width {
        return 0.0;
    }
    let s = vol * expiry.sqrt();
    if s <= 0.0 {
        let end = x + mu * expiry;
        return if end > 0.0 && end < width { 1.0 } else { 0.0 };
    }
    let var = vol * vol;
    let m = mu * expiry;
    let image = |n: i64| -> f64 {
        let shift = 2.0 * n as f64 * width;
        let band = |centre: f64, log_weight: f64| -> f64 {
            let diff = cdf((width - centre - m) / s) - cdf((-centre - m) / s);
            if diff <= 0.0 {
                0.0
            } else {
                (log_weight + diff.ln()).exp()
            }
        };
        band(x + shift, mu * shift / var) - band(-x + shift, mu * (shift - 2.0 * x) / var)
    };
    let mut total = image(0);
    for n in 1..=MAX_TERMS {
        let pair = image(n) + image(-n);
        total += pair;
        if pair.abs() < TERM_TOL {
            break;
        }
    }
    total.clamp(0.0, 1.0)
}

/// Double-no-touch premium, continuously monitored, paid at expiry.
pub fn bs_dnt_price(inp: &DntInputs) -> Result<f64> {
    let finite = [
        inp.spot,
        inp.lower,
        inp.upper,
        inp.vol,
        inp.rd,
        inp.rf,
        inp.expiry,
        inp.notional,
    ];
    if finite.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("dnt", "non-finite input"));
    }
    if !(inp.lower > 0.0) {
        return Err(Error::invalid("lower_barrier", "must be positive"));
    }
    if inp.lower >= inp.upper {
        return Err(Error::invalid("lower_barrier", "must be below upper_barrier"));
    }
    if inp.vol < 0.0 || inp.expiry < 0.0 || inp.spot <= 0.0 {
        return Err(Error::invalid("dnt", "spot, vol and expiry must be non-negative"));
    }
    if inp.spot <= inp.lower || inp.spot >= inp.upper {
        return Ok(0.0);
    }
    let df = (-inp.rd * inp.expiry).exp();
    if inp.expiry == 0.0 {
        return Ok(inp.notional * df);
    }
    let mu = inp.rd - inp.rf - 0.5 * inp.vol * inp.vol;
    let survival = corridor_survival(
        (inp.spot / inp.lower).ln(),
        (inp.upper / inp.lower).ln(),
        mu,
        inp.vol,
        inp.expiry,
    );
    Ok(inp.notional * df * survival)
}

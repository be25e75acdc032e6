//! Piecewise-constant continuously-compounded rate curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A piecewise-constant short-rate term structure.
///
/// `rates[k]` applies on `[knots[k-1], knots[k])` with an implicit `knots[-1] = 0`;
/// the last rate extends flat to infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateCurve {
    #[serde(default)]
    pub knots: Vec<f64>,
    pub rates: Vec<f64>,
}

impl RateCurve {
    pub fn flat(rate: f64) -> Self {
        Self {
            knots: Vec::new(),
            rates: vec![rate],
        }
    }

    pub fn new(knots: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        let curve = Self { knots, rates };
        curve.validate("curve")?;
        Ok(curve)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.rates.len() != self.knots.len() + 1 {
            return Err(Error::invalid(
                field,
                "need exactly one more rate than knots",
            ));
        }
        if self.rates.iter().chain(&self.knots).any(|x| !x.is_finite()) {
            return Err(Error::invalid(field, "non-finite value"));
        }
        if self.knots.first().is_some_and(|&k| k <= 0.0)
            || self.knots.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::invalid(field, "knots must be positive and increasing"));
        }
        Ok(())
    }

    /// `∫_0^t r(u) du`.
    pub fn integral(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut start = 0.0;
        for (k, &knot) in self.knots.iter().enumerate() {
            if t <= knot {
                return acc + self.rates[k] * (t - start);
            }
            acc += self.rates[k] * (knot - start);
            start = knot;
        }
        acc + self.rates[self.rates.len() - 1] * (t - start)
    }

    /// Discount bond `P(t1, t2)`.
    pub fn discount(&self, t1: f64, t2: f64) -> f64 {
        if t1 == t2 {
            return 1.0;
        }
        (-(self.integral(t2) - self.integral(t1))).exp()
    }

    /// Average continuously-compounded rate over `[t1, t2]`.
    pub fn average_rate(&self, t1: f64, t2: f64) -> f64 {
        if t2 <= t1 {
            return self.rate_at(t1);
        }
        (self.integral(t2) - self.integral(t1)) / (t2 - t1)
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        let k = self.knots.iter().take_while(|&&knot| t >= knot).count();
        self.rates[k]
    }

    pub fn is_zero(&self) -> bool {
        self.rates.iter().all(|&r| r == 0.0)
    }
}

/// Domestic and foreign curves travel together everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Curves {
    pub domestic: RateCurve,
    pub foreign: RateCurve,
}

impl Curves {
    pub fn zero() -> Self {
        Self {
            domestic: RateCurve::flat(0.0),
            foreign: RateCurve::flat(0.0),
        }
    }

    pub fn flat(rd: f64, rf: f64) -> Self {
        Self {
            domestic: RateCurve::flat(rd),
            foreign: RateCurve::flat(rf),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domestic.validate("curves.domestic")?;
        self.foreign.validate("curves.foreign")
    }

    /// Forward of spot `s` observed at `t` for delivery at `t + tau`.
    pub fn forward(&self, s: f64, t: f64, tau: f64) -> f64 {
        s * self.foreign.discount(t, t + tau) / self.domestic.discount(t, t + tau)
    }

    /// `(P^d, P^f)` from `t` to `t + tau`.
    pub fn discounts(&self, t: f64, tau: f64) -> (f64, f64) {
        (
            self.domestic.discount(t, t + tau),
            self.foreign.discount(t, t + tau),
        )
    }
}

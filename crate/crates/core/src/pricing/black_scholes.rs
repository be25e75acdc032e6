//! Garman-Kohlhagen vanilla pricing, implied-volatility inversion and the FX
//! delta conventions (spot delta, premium excluded, ATM delta-neutral straddle).

use serde::{Deserialize, Serialize};

use super::normal::{cdf, inv_cdf, pdf};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn sign(self) -> f64 {
        match self {
            OptionKind::Call => 1.0,
            OptionKind::Put => -1.0,
        }
    }
}

/// Market data and terms for a European FX vanilla.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsQuote {
    pub spot: f64,
    pub strike: f64,
    /// Annualized term volatility.
    pub vol: f64,
    /// Domestic discount factor to expiry.
    pub df_dom: f64,
    /// Foreign discount factor to expiry.
    pub df_for: f64,
    pub expiry: f64,
    pub kind: OptionKind,
}

impl BsQuote {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("spot", self.spot),
            ("strike", self.strike),
            ("df_dom", self.df_dom),
            ("df_for", self.df_for),
            ("expiry", self.expiry),
        ];
        for (name, x) in positive {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        if !(self.vol >= 0.0) || !self.vol.is_finite() {
            return Err(Error::invalid("vol", "must be >= 0 and finite"));
        }
        Ok(())
    }

    pub fn forward(&self) -> f64 {
        self.spot * self.df_for / self.df_dom
    }

    pub fn std_dev(&self) -> f64 {
        self.vol * self.expiry.sqrt()
    }

    pub fn with_vol(self, vol: f64) -> Self {
        Self { vol, ..self }
    }

    pub fn with_spot(self, spot: f64) -> Self {
        Self { spot, ..self }
    }
}

/// Undiscounted Black price on the forward with total standard deviation `s`.
#[inline]
pub fn black(forward: f64, strike: f64, s: f64, kind: OptionKind) -> f64 {
    let w = kind.sign();
    if s <= 0.0 {
        return (w * (forward - strike)).max(0.0);
    }
    let d1 = (forward / strike).ln() / s + 0.5 * s;
    let d2 = d1 - s;
    w * (forward * cdf(w * d1) - strike * cdf(w * d2))
}

/// Garman-Kohlhagen premium in domestic units.
pub fn bs_vanilla_price(q: &BsQuote) -> Result<f64> {
    q.validate()?;
    Ok(q.df_dom * black(q.forward(), q.strike, q.std_dev(), q.kind))
}

/// `∂premium/∂σ`.
pub fn bs_vega(q: &BsQuote) -> f64 {
    let s = q.std_dev();
    if s <= 0.0 {
        return 0.0;
    }
    let f = q.forward();
    let d1 = (f / q.strike).ln() / s + 0.5 * s;
    q.df_dom * f * pdf(d1) * q.expiry.sqrt()
}

/// Spot delta, premium excluded.
pub fn bs_delta(q: &BsQuote) -> Result<f64> {
    q.validate()?;
    let f = q.forward();
    let s = q.std_dev();
    let n_d1 = if s <= 0.0 {
        match f.partial_cmp(&q.strike) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Less) => 0.0,
            _ => 0.5,
        }
    } else {
        cdf((f / q.strike).ln() / s + 0.5 * s)
    };
    Ok(match q.kind {
        OptionKind::Call => q.df_for * n_d1,
        OptionKind::Put => -q.df_for * (1.0 - n_d1),
    })
}

/// Which no-arbitrage bound an implied-vol request violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceBound {
    Lower,
    Upper,
}

/// Implied volatility of `price`; the `vol` field of `q` is ignored.
pub fn bs_implied_vol(price: f64, q: &BsQuote) -> Result<f64> {
    q.with_vol(0.0).validate()?;
    if !price.is_finite() {
        return Err(Error::invalid("price", "non-finite"));
    }
    let f = q.forward();
    let k = q.strike;
    let undiscounted = price / q.df_dom;
    let intrinsic = (q.kind.sign() * (f - k)).max(0.0);
    let upper = match q.kind {
        OptionKind::Call => f,
        OptionKind::Put => k,
    };
    let slack = 1e-14 * f.max(k);
    if undiscounted < intrinsic - slack {
        return Err(Error::Domain(format!(
            "price {price} below lower bound {} (discounted intrinsic)",
            intrinsic * q.df_dom
        )));
    }
    if undiscounted >= upper {
        return Err(Error::Domain(format!(
            "price {price} at or above upper bound {}",
            upper * q.df_dom
        )));
    }
    // invert the out-of-the-money side; parity moves the intrinsic part out
    let otm_kind = if f >= k {
        OptionKind::Put
    } else {
        OptionKind::Call
    };
    let time_value = if otm_kind == q.kind {
        undiscounted
    } else {
        undiscounted - q.kind.sign() * (f - k)
    };
    if time_value <= 0.1 * slack {
        return Ok(0.0);
    }
    let s = invert_otm(time_value, f, k, otm_kind)?;
    Ok(s / q.expiry.sqrt())
}

/// Total standard deviation reproducing an out-of-the-money undiscounted price.
fn invert_otm(target: f64, f: f64, k: f64, kind: OptionKind) -> Result<f64> {
    let price_at = |s: f64| black(f, k, s, kind);
    let x = (f / k).ln();
    // bracket
    let mut lo = 0.0;
    let mut hi = (2.0 * x.abs()).sqrt().max(0.2);
    while price_at(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Numeric("implied vol bracket exceeded".into()));
        }
    }
    // initial guess: ATM Brenner-Subrahmanyam, clamped to the bracket
    let mut s = (target / f.min(k) * (2.0 * std::f64::consts::PI).sqrt()).max(1e-4);
    if !(s > lo && s < hi) {
        s = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let p = price_at(s);
        let diff = p - target;
        if diff > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        if diff.abs() <= 2e-16 * target.max(1e-300) {
            return Ok(s);
        }
        let d1 = x / s + 0.5 * s;
        let vega = f * pdf(d1);
        let mut next = s - diff / vega;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - s).abs() <= 1e-15 * s {
            return Ok(next);
        }
        s = next;
    }
    Ok(s)
}

/// FX smile quotation conventions. Only spot delta / premium excluded /
/// delta-neutral-straddle ATM / foreign-currency options are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaConvention {
    pub delta: DeltaStyle,
    pub premium: PremiumTreatment,
    pub atm: AtmDefinition,
    pub currency: OptionCurrency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaStyle {
    Spot,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PremiumTreatment {
    Excluded,
    Included,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtmDefinition {
    Straddle,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionCurrency {
    Foreign,
    Domestic,
}

impl Default for DeltaConvention {
    fn default() -> Self {
        Self {
            delta: DeltaStyle::Spot,
            premium: PremiumTreatment::Excluded,
            atm: AtmDefinition::Straddle,
            currency: OptionCurrency::Foreign,
        }
    }
}

impl DeltaConvention {
    pub fn validate(&self) -> Result<()> {
        if *self != Self::default() {
            return Err(Error::invalid(
                "convention",
                "only spot delta, premium excluded, ATM straddle, foreign-currency options are supported",
            ));
        }
        Ok(())
    }
}

/// What `strike_from_delta` needs besides the delta and the vol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FxMarket {
    pub spot: f64,
    pub df_dom: f64,
    pub df_for: f64,
    pub expiry: f64,
}

impl FxMarket {
    pub fn forward(&self) -> f64 {
        self.spot * self.df_for / self.df_dom
    }

    pub fn quote(&self, strike: f64, vol: f64, kind: OptionKind) -> BsQuote {
        BsQuote {
            spot: self.spot,
            strike,
            vol,
            df_dom: self.df_dom,
            df_for: self.df_for,
            expiry: self.expiry,
            kind,
        }
    }
}

/// Strike whose spot delta equals `delta` (positive → call, negative → put).
pub fn strike_from_delta(
    delta: f64,
    vol: f64,
    conv: &DeltaConvention,
    market: &FxMarket,
) -> Result<f64> {
    conv.validate()?;
    if !(vol > 0.0) || !vol.is_finite() {
        return Err(Error::invalid("vol", "must be positive"));
    }
    if !(delta.abs() > 0.0 && delta.abs() < market.df_for) {
        return Err(Error::Domain(format!(
            "delta {delta} unattainable: |delta| must lie in (0, {})",
            market.df_for
        )));
    }
    let s = vol * market.expiry.sqrt();
    let d1 = if delta > 0.0 {
        inv_cdf(delta / market.df_for)
    } else {
        -inv_cdf(-delta / market.df_for)
    };
    Ok(market.forward() * (-d1 * s + 0.5 * s * s).exp())
}

/// Delta-neutral straddle strike.
pub fn atm_straddle_strike(vol: f64, market: &FxMarket) -> f64 {
    let s = vol * market.expiry.sqrt();
    market.forward() * (0.5 * s * s).exp()
}

/// Call delta of a bucket quoted as put/ATM/call delta.
pub fn as_call_delta(bucket_delta: f64, df_for: f64) -> f64 {
    if bucket_delta < 0.0 {
        df_for + bucket_delta
    } else {
        bucket_delta
    }
}

/// Strike with spot call delta `call_delta` (in `(0, df_for)`).
pub fn strike_from_call_delta(call_delta: f64, vol: f64, market: &FxMarket) -> Result<f64> {
    strike_from_delta(call_delta, vol, &DeltaConvention::default(), market)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quote(kind: OptionKind) -> BsQuote {
        BsQuote {
            spot: 1.2812,
            strike: 1.30,
            vol: 0.11,
            df_dom: (-0.03f64).exp(),
            df_for: (-0.01f64).exp(),
            expiry: 1.0,
            kind,
        }
    }

    /// Cox-Ross-Rubinstein tree, the oracle for the closed form.
    fn binomial(q: &BsQuote, steps: usize) -> f64 {
        let dt = q.expiry / steps as f64;
        let rd = -q.df_dom.ln() / q.expiry;
        let rf = -q.df_for.ln() / q.expiry;
        let u = (q.vol * dt.sqrt()).exp();
        let d = 1.0 / u;
        let p = (((rd - rf) * dt).exp() - d) / (u - d);
        let disc = (-rd * dt).exp();
        let mut values: Vec<f64> = (0..=steps)
            .map(|j| {
                let s = q.spot * u.powi(j as i32) * d.powi((steps - j) as i32);
                (q.kind.sign() * (s - q.strike)).max(0.0)
            })
            .collect();
        for n in (0..steps).rev() {
            for j in 0..=n {
                values[j] = disc * (p * values[j + 1] + (1.0 - p) * values[j]);
            }
        }
        values[0]
    }

    #[test]
    fn zero_vol_is_discounted_intrinsic() {
        let q = quote(OptionKind::Call).with_vol(0.0).with_spot(1.4);
        let expected = q.df_dom * (q.forward() - q.strike).max(0.0);
        assert_eq!(bs_vanilla_price(&q).unwrap(), expected);
    }

    #[test]
    fn put_call_parity() {
        let mut seed = 7u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..500 {
            let q = BsQuote {
                spot: 0.5 + next(),
                strike: 0.5 + next(),
                vol: 0.01 + 0.5 * next(),
                df_dom: 0.9 + 0.1 * next(),
                df_for: 0.9 + 0.1 * next(),
                expiry: 0.05 + 2.0 * next(),
                kind: OptionKind::Call,
            };
            let c = bs_vanilla_price(&q).unwrap();
            let p = bs_vanilla_price(&BsQuote {
                kind: OptionKind::Put,
                ..q
            })
            .unwrap();
            assert!((c - p - q.df_dom * (q.forward() - q.strike)).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_binomial_tree() {
        let q = BsQuote {
            spot: 1.2812,
            strike: 1.2812,
            vol: 0.0985,
            df_dom: 1.0,
            df_for: 1.0,
            expiry: 1.0,
            kind: OptionKind::Call,
        };
        let tree = binomial(&q, 5000);
        let closed = bs_vanilla_price(&q).unwrap();
        assert!((tree - closed).abs() < 1e-5, "{tree} vs {closed}");
    }

    #[test]
    fn implied_vol_round_trip() {
        let q = quote(OptionKind::Call).with_vol(0.20);
        let price = bs_vanilla_price(&q).unwrap();
        let vol = bs_implied_vol(price, &q).unwrap();
        assert!((vol - 0.20).abs() < 1e-10);
    }

    #[test]
    fn implied_vol_at_lower_bound_is_zero() {
        let q = quote(OptionKind::Call).with_spot(1.5);
        let lower = q.df_dom * (q.forward() - q.strike);
        assert_eq!(bs_implied_vol(lower, &q).unwrap(), 0.0);
        let q = BsQuote {
            strike: 1.5,
            ..quote(OptionKind::Call)
        };
        assert_eq!(bs_implied_vol(0.0, &q).unwrap(), 0.0);
    }

    #[test]
    fn implied_vol_bounds_are_reported() {
        let q = quote(OptionKind::Call).with_spot(1.5);
        let lower = q.df_dom * (q.forward() - q.strike);
        match bs_implied_vol(lower - 1e-6, &q) {
            Err(Error::Domain(msg)) => assert!(msg.contains("lower")),
            other => panic!("{other:?}"),
        }
        match bs_implied_vol(q.spot * q.df_for, &q) {
            Err(Error::Domain(msg)) => assert!(msg.contains("upper")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn implied_vol_batch_round_trip() {
        let mut seed = 11u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut checked = 0;
        while checked < 1000 {
            let kind = if next() < 0.5 {
                OptionKind::Call
            } else {
                OptionKind::Put
            };
            let q = BsQuote {
                spot: 1.0 + 0.5 * next(),
                strike: 0.8 + 0.8 * next(),
                vol: 0.03 + 0.4 * next(),
                df_dom: 0.95 + 0.05 * next(),
                df_for: 0.95 + 0.05 * next(),
                expiry: 0.05 + 2.0 * next(),
                kind,
            };
            let price = bs_vanilla_price(&q).unwrap();
            // skip quotes whose time value is lost to rounding
            if bs_vega(&q) < 1e-6 {
                continue;
            }
            let vol = bs_implied_vol(price, &q).unwrap();
            assert!((vol - q.vol).abs() < 1e-9, "{q:?}: {vol}");
            let back = bs_vanilla_price(&q.with_vol(vol)).unwrap();
            assert!((back - price).abs() < 1e-10);
            checked += 1;
        }
    }

    #[test]
    fn delta_limits_and_parity() {
        let call = quote(OptionKind::Call);
        let put = quote(OptionKind::Put);
        let dc = bs_delta(&call).unwrap();
        let dp = bs_delta(&put).unwrap();
        assert!(dc > 0.0 && dc < 1.0);
        assert!((dc - dp - call.df_for).abs() < 1e-15);
        let deep = BsQuote {
            strike: 1e-6,
            ..call
        };
        assert!((bs_delta(&deep).unwrap() - call.df_for).abs() < 1e-12);
    }

    #[test]
    fn strike_from_delta_round_trip() {
        let market = FxMarket {
            spot: 1.2812,
            df_dom: (-0.02f64).exp(),
            df_for: (-0.01f64).exp(),
            expiry: 0.75,
        };
        let conv = DeltaConvention::default();
        for &(delta, kind) in &[
            (0.25, OptionKind::Call),
            (0.10, OptionKind::Call),
            (-0.25, OptionKind::Put),
            (-0.10, OptionKind::Put),
        ] {
            let k = strike_from_delta(delta, 0.1, &conv, &market).unwrap();
            let back = bs_delta(&market.quote(k, 0.1, kind)).unwrap();
            assert!((back - delta).abs() < 1e-12, "{delta}: {back}");
        }
        assert!(strike_from_delta(0.999, 0.1, &conv, &market).is_err());
        assert!(strike_from_delta(0.0, 0.1, &conv, &market).is_err());
    }

    #[test]
    fn atm_straddle_is_delta_neutral() {
        let market = FxMarket {
            spot: 1.2812,
            df_dom: 0.99,
            df_for: 0.97,
            expiry: 0.5,
        };
        let k = atm_straddle_strike(0.1, &market);
        let dc = bs_delta(&market.quote(k, 0.1, OptionKind::Call)).unwrap();
        let dp = bs_delta(&market.quote(k, 0.1, OptionKind::Put)).unwrap();
        assert!((dc + dp).abs() < 1e-14);
    }

    #[test]
    fn convention_rejects_others() {
        let conv = DeltaConvention {
            premium: PremiumTreatment::Included,
            ..DeltaConvention::default()
        };
        assert!(conv.validate().is_err());
        assert!(DeltaConvention::default().validate().is_ok());
    }
}

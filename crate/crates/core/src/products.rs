//! Contract terms and per-path lifecycle state of the hedged instruments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pricing::OptionKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Long,
    Short,
}

impl Position {
    pub fn sign(self) -> f64 {
        match self {
            Position::Long => 1.0,
            Position::Short => -1.0,
        }
    }
}

/// Pays `notional` (domestic) at expiry unless spot touches either barrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoubleNoTouch {
    pub lower: f64,
    pub upper: f64,
    pub expiry: f64,
    pub notional: f64,
    pub position: Position,
}

/// Forward with contingent notional: on each fading date with spot strictly
/// inside the fading range, `fraction · max_notional` is added. A knock-out
/// stops further accrual but keeps what was accrued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaderForwardLeg {
    pub strike: f64,
    pub fading_dates: Vec<f64>,
    /// Accrual fraction per fading date; sums to one.
    pub fractions: Vec<f64>,
    pub lower_fade: f64,
    #[serde(default)]
    pub upper_fade: Option<f64>,
    #[serde(default)]
    pub ko_lower: Option<f64>,
    #[serde(default)]
    pub ko_upper: Option<f64>,
    pub max_notional: f64,
    pub expiry: f64,
    pub position: Position,
}

/// European vanilla on the foreign currency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vanilla {
    pub strike: f64,
    pub expiry: f64,
    pub kind: OptionKind,
    pub notional: f64,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Product {
    DoubleNoTouch(DoubleNoTouch),
    Fader(FaderForwardLeg),
    Vanilla(Vanilla),
}

/// The hedging instrument: a call re-struck at every rebalance date at the
/// delta-neutral straddle strike, expiring `tenor` years later.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HedgeVanilla {
    pub tenor: f64,
    /// Keep the first strike and expiry for the whole run instead of rolling.
    #[serde(default)]
    pub static_strike: bool,
}

impl Default for HedgeVanilla {
    fn default() -> Self {
        Self {
            tenor: 0.5,
            static_strike: false,
        }
    }
}

fn positive(field: &str, x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid(field, "must be positive and finite"));
    }
    Ok(())
}

impl DoubleNoTouch {
    pub fn validate(&self) -> Result<()> {
        positive("dnt.lower", self.lower)?;
        positive("dnt.upper", self.upper)?;
        positive("dnt.expiry", self.expiry)?;
        if !(self.lower < self.upper) {
            return Err(Error::invalid("dnt.upper", "must exceed the lower barrier"));
        }
        if !self.notional.is_finite() || self.notional < 0.0 {
            return Err(Error::invalid("dnt.notional", "must be >= 0"));
        }
        Ok(())
    }
}

impl FaderForwardLeg {
    /// Evenly spaced fading dates `step, 2·step, …` up to `expiry`, equal
    /// fractions.
    pub fn regular_dates(step: f64, expiry: f64) -> (Vec<f64>, Vec<f64>) {
        let n = ((expiry / step) + 1e-9).floor().max(1.0) as usize;
        let dates: Vec<f64> = (1..=n).map(|i| (i as f64 * step).min(expiry)).collect();
        let fractions = vec![1.0 / n as f64; n];
        (dates, fractions)
    }

    pub fn validate(&self) -> Result<()> {
        positive("fader.strike", self.strike)?;
        positive("fader.expiry", self.expiry)?;
        positive("fader.lower_fade", self.lower_fade)?;
        if !self.max_notional.is_finite() || self.max_notional < 0.0 {
            return Err(Error::invalid("fader.max_notional", "must be >= 0"));
        }
        if self.fading_dates.is_empty() || self.fading_dates.len() != self.fractions.len() {
            return Err(Error::invalid(
                "fader.fractions",
                "need one fraction per fading date and at least one date",
            ));
        }
        if self.fading_dates.iter().any(|&d| !(d > 0.0 && d <= self.expiry))
            || self.fading_dates.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::invalid(
                "fader.fading_dates",
                "must be increasing and inside (0, expiry]",
            ));
        }
        if self.fractions.iter().any(|&f| !(f >= 0.0))
            || (self.fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::invalid("fader.fractions", "must be >= 0 and sum to 1"));
        }
        if let Some(u) = self.upper_fade {
            if !(u > self.lower_fade) {
                return Err(Error::invalid("fader.upper_fade", "must exceed lower_fade"));
            }
        }
        match (self.ko_lower, self.ko_upper) {
            (Some(l), _) if !(l > 0.0) => {
                Err(Error::invalid("fader.ko_lower", "must be positive"))
            }
            (Some(l), Some(u)) if !(l < u) => {
                Err(Error::invalid("fader.ko_upper", "must exceed ko_lower"))
            }
            _ => Ok(()),
        }
    }

    pub fn in_fading_range(&self, spot: f64) -> bool {
        spot > self.lower_fade && self.upper_fade.is_none_or(|u| spot < u)
    }

    pub fn knocked_out_at(&self, spot: f64) -> bool {
        self.ko_lower.is_some_and(|l| spot <= l) || self.ko_upper.is_some_and(|u| spot >= u)
    }

    pub fn has_barriers(&self) -> bool {
        self.ko_lower.is_some() || self.ko_upper.is_some()
    }
}

impl Vanilla {
    pub fn validate(&self) -> Result<()> {
        positive("vanilla.strike", self.strike)?;
        positive("vanilla.expiry", self.expiry)?;
        if !self.notional.is_finite() || self.notional < 0.0 {
            return Err(Error::invalid("vanilla.notional", "must be >= 0"));
        }
        Ok(())
    }
}

impl Product {
    pub fn validate(&self) -> Result<()> {
        match self {
            Product::DoubleNoTouch(d) => d.validate(),
            Product::Fader(f) => f.validate(),
            Product::Vanilla(v) => v.validate(),
        }
    }

    pub fn expiry(&self) -> f64 {
        match self {
            Product::DoubleNoTouch(d) => d.expiry,
            Product::Fader(f) => f.expiry,
            Product::Vanilla(v) => v.expiry,
        }
    }

    /// Copy with every contractual date moved to the first grid date at or
    /// after it.
    pub fn snapped(&self, grid: &[f64]) -> Result<Product> {
        let snap = |t: f64| -> Result<f64> {
            let i = grid.partition_point(|&g| g < t - 1e-9);
            grid.get(i).copied().ok_or_else(|| {
                Error::invalid("expiry", format!("date {t} lies beyond the simulation grid"))
            })
        };
        Ok(match self {
            Product::DoubleNoTouch(d) => Product::DoubleNoTouch(DoubleNoTouch {
                expiry: snap(d.expiry)?,
                ..d.clone()
            }),
            Product::Vanilla(v) => Product::Vanilla(Vanilla {
                expiry: snap(v.expiry)?,
                ..v.clone()
            }),
            Product::Fader(f) => {
                let mut dates: Vec<f64> = Vec::with_capacity(f.fading_dates.len());
                let mut fractions: Vec<f64> = Vec::with_capacity(f.fractions.len());
                for (&d, &w) in f.fading_dates.iter().zip(&f.fractions) {
                    let s = snap(d)?;
                    // two dates landing on one grid day merge their fractions
                    if dates.last() == Some(&s) {
                        *fractions.last_mut().unwrap() += w;
                    } else {
                        dates.push(s);
                        fractions.push(w);
                    }
                }
                Product::Fader(FaderForwardLeg {
                    fading_dates: dates,
                    fractions,
                    expiry: snap(f.expiry)?,
                    ..f.clone()
                })
            }
        })
    }
}

/// A set of products hedged together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Portfolio {
    pub legs: Vec<Product>,
}

impl Portfolio {
    pub fn new(legs: Vec<Product>) -> Self {
        Self { legs }
    }

    pub fn validate(&self) -> Result<()> {
        if self.legs.is_empty() {
            return Err(Error::invalid("portfolio.legs", "at least one leg required"));
        }
        for (i, leg) in self.legs.iter().enumerate() {
            leg.validate().map_err(|e| match e {
                Error::InvalidInput { field, reason } => Error::InvalidInput {
                    field: format!("portfolio.legs[{i}].{field}"),
                    reason,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn expiry(&self) -> f64 {
        self.legs.iter().map(Product::expiry).fold(0.0, f64::max)
    }

    pub fn snapped(&self, grid: &[f64]) -> Result<Portfolio> {
        Ok(Portfolio {
            legs: self
                .legs
                .iter()
                .map(|l| l.snapped(grid))
                .collect::<Result<_>>()?,
        })
    }

    pub fn initial_state(&self) -> LifecycleState {
        LifecycleState {
            legs: vec![LegState::default(); self.legs.len()],
        }
    }

    /// The double-no-touch study: barriers 1.2130 / 1.3622, one year and
    /// seventeen days, unit notional held short.
    pub fn dnt_fixture() -> Portfolio {
        Portfolio::new(vec![Product::DoubleNoTouch(DoubleNoTouch {
            lower: 1.2130,
            upper: 1.3622,
            expiry: 382.0 / 365.0,
            notional: 1.0,
            position: Position::Short,
        })])
    }

    /// The three forward faders struck at 1.29 (spot 1.2096).
    pub fn fader_fixture() -> Portfolio {
        let leg = |notional: f64, expiry: f64, step: f64, ko: Option<f64>, position| {
            let (fading_dates, fractions) = FaderForwardLeg::regular_dates(step, expiry);
            Product::Fader(FaderForwardLeg {
                strike: 1.29,
                fading_dates,
                fractions,
                lower_fade: 1.175,
                upper_fade: None,
                ko_lower: ko,
                ko_upper: None,
                max_notional: notional,
                expiry,
                position,
            })
        };
        Portfolio::new(vec![
            leg(0.54, 1.5, 1.0 / 12.0, Some(1.15), Position::Short),
            leg(0.29, 0.8, 1.0 / 12.0, Some(1.15), Position::Short),
            leg(0.17, 0.5, 14.0 / 365.0, None, Position::Long),
        ])
    }
}

/// Lifecycle of one leg along a path.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LegState {
    /// Barrier touched (DNT) or knocked out (fader).
    pub knocked: bool,
    pub knock_time: Option<f64>,
    /// Fader notional accrued so far.
    pub accrued: f64,
    /// Expiry cash flow already paid.
    pub settled: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LifecycleState {
    pub legs: Vec<LegState>,
}

impl LifecycleState {
    /// True when no leg can produce any further cash flow.
    pub fn is_dead(&self, portfolio: &Portfolio) -> bool {
        portfolio
            .legs
            .iter()
            .zip(&self.legs)
            .all(|(leg, st)| st.settled || matches!(leg, Product::DoubleNoTouch(_) if st.knocked))
    }
}

/// Something that happened to a leg on a date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Event {
    Knock { leg: usize, time: f64, spot: f64 },
    Accrual { leg: usize, time: f64, amount: f64 },
    Expiry { leg: usize, time: f64, cash: f64 },
}

impl Event {
    pub fn tag(&self) -> String {
        match self {
            Event::Knock { leg, .. } => format!("knock:{leg}"),
            Event::Accrual { leg, amount, .. } => format!("accrue:{leg}:{amount}"),
            Event::Expiry { leg, cash, .. } => format!("expiry:{leg}:{cash}"),
        }
    }
}

/// DNT payoff at expiry given its lifecycle.
pub fn dnt_payoff(dnt: &DoubleNoTouch, state: &LegState) -> f64 {
    if state.knocked {
        0.0
    } else {
        dnt.position.sign() * dnt.notional
    }
}

/// Fading-date update: accrue when alive and inside the fading range.
pub fn fader_accrue(leg: &FaderForwardLeg, state: &LegState, fraction: f64, spot: f64) -> LegState {
    let mut next = *state;
    if !state.knocked && leg.in_fading_range(spot) {
        next.accrued += fraction * leg.max_notional;
    }
    next
}

/// Expiry cash flow of one leg (domestic currency) at spot `s_t`.
pub fn terminal_payoff(product: &Product, state: &LegState, s_t: f64) -> f64 {
    match product {
        Product::DoubleNoTouch(d) => dnt_payoff(d, state),
        Product::Fader(f) => f.position.sign() * state.accrued * (s_t - f.strike),
        Product::Vanilla(v) => {
            v.position.sign() * v.notional * (v.kind.sign() * (s_t - v.strike)).max(0.0)
        }
    }
}

/// Applies the events of grid date `t` for the observation `spot`: barrier
/// checks, then fading accrual, then expiry payoffs. `bridge_knock[i]` marks
/// a knock detected between the previous date and `t` for leg `i`.
/// Returns the cash paid into the hedger's account and the events.
pub fn apply_events(
    portfolio: &Portfolio,
    state: &mut LifecycleState,
    t: f64,
    spot: f64,
    bridge_knock: &[bool],
) -> (f64, Vec<Event>) {
    let mut cash = 0.0;
    let mut events = Vec::new();
    for (i, (leg, st)) in portfolio.legs.iter().zip(state.legs.iter_mut()).enumerate() {
        if st.settled || t > leg.expiry() + 1e-12 {
            continue;
        }
        let bridged = bridge_knock.get(i).copied().unwrap_or(false);
        let touched = match leg {
            Product::DoubleNoTouch(d) => spot <= d.lower || spot >= d.upper,
            Product::Fader(f) => f.knocked_out_at(spot),
            Product::Vanilla(_) => false,
        };
        if !st.knocked && (touched || bridged) {
            st.knocked = true;
            st.knock_time = Some(t);
            events.push(Event::Knock { leg: i, time: t, spot });
        }
        if let Product::Fader(f) = leg {
            if let Some(k) = f.fading_dates.iter().position(|&d| (d - t).abs() < 1e-12) {
                let before = st.accrued;
                *st = fader_accrue(f, st, f.fractions[k], spot);
                if st.accrued > before {
                    events.push(Event::Accrual {
                        leg: i,
                        time: t,
                        amount: st.accrued - before,
                    });
                }
            }
        }
        if (t - leg.expiry()).abs() < 1e-12 {
            let flow = terminal_payoff(leg, st, spot);
            st.settled = true;
            cash += flow;
            events.push(Event::Expiry {
                leg: i,
                time: t,
                cash: flow,
            });
        }
    }
    (cash, events)
}

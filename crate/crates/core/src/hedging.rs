//! Discrete self-financing hedge of a portfolio along one simulated path.
//!
//! On every grid date the contract events are applied first, then the
//! previous hedge is sold, the portfolio is valued with the model under test,
//! its external sensitivities to spot and variance fix the new units of the
//! underlying security and of the hedge vanilla, and the cash account is
//! accrued to the next date.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{expected_variance_integral, path_rng, HestonParams, PathGrid};
use crate::pricers::{bridge_survival, BarrierMonitoring, ModelPricer, Snapshot};
use crate::pricing::{bs_implied_vol, FxMarket, HestonSlice, OptionKind};
use crate::products::{apply_events, HedgeVanilla, LifecycleState, Portfolio, Product};
use crate::rates::Curves;
use crate::surface::{build_surface_from, SurfaceSpec, VolSurface};

/// Relative spot bump for Δ (central).
pub const SPOT_BUMP: f64 = 1e-4;
/// Variance bump for ϑ (forward).
pub const VARIANCE_BUMP: f64 = 1e-6;
/// Smallest hedge-vanilla ϑ for which β is computed.
pub const MIN_HEDGE_VARTHETA: f64 = 1e-12;
/// Node-vol bump for the chain-rule ϑ.
pub const NODE_VOL_BUMP: f64 = 1e-4;
/// Quadrature accuracy for vanillas priced with the market model.
pub const VANILLA_TOLERANCE: f64 = 1e-13;

const BRIDGE_STREAM_KEY: u64 = 0x6272_6964_6765_7531;

/// How the portfolio's variance sensitivity is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarthetaMode {
    /// Reprice on a surface rebuilt from the bumped variance.
    #[default]
    External,
    /// Sum of per-node model vegas times node sensitivities to variance.
    ChainRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HedgeSpec {
    pub hedge: HedgeVanilla,
    pub monitoring: BarrierMonitoring,
    /// With `false` the book holds no hedge at all.
    pub hedged: bool,
    pub vartheta_mode: VarthetaMode,
    /// Surface grid for pricers that read one. The tolerance must sit well
    /// below the vol move caused by `VARIANCE_BUMP`.
    pub surface: SurfaceSpec,
}

impl Default for HedgeSpec {
    fn default() -> Self {
        Self {
            hedge: HedgeVanilla::default(),
            monitoring: BarrierMonitoring::Daily,
            hedged: true,
            vartheta_mode: VarthetaMode::External,
            surface: SurfaceSpec {
                tolerance: 1e-11,
                ..SurfaceSpec::default()
            },
        }
    }
}

impl HedgeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.hedge.tenor > 0.0) || !self.hedge.tenor.is_finite() {
            return Err(Error::invalid("hedge.tenor", "must be positive"));
        }
        self.surface.validate()
    }
}

/// Sensitivities to the two market factors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExternalGreeks {
    pub delta: f64,
    pub vartheta: f64,
}

/// Units of the underlying security `S·B^f` and of the hedge vanilla.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HedgeRatios {
    pub alpha: f64,
    pub beta: f64,
}

impl HedgeRatios {
    /// `β = −ϑ^Π/ϑ^C`, `α = −(Δ^Π + βΔ^C)/B^f`. With no variance exposure on
    /// either side β is 0.
    pub fn new(portfolio: &ExternalGreeks, hedge: &ExternalGreeks, foreign_account: f64) -> Result<Self> {
        if hedge.vartheta.abs() < MIN_HEDGE_VARTHETA && portfolio.vartheta.abs() < MIN_HEDGE_VARTHETA {
            return Ok(Self {
                alpha: -portfolio.delta / foreign_account,
                beta: 0.0,
            });
        }
        if !(hedge.vartheta.abs() >= MIN_HEDGE_VARTHETA) {
            return Err(Error::HedgeDegenerate {
                theta_c: hedge.vartheta,
            });
        }
        let beta = -portfolio.vartheta / hedge.vartheta;
        let alpha = -(portfolio.delta + beta * hedge.delta) / foreign_account;
        Ok(Self { alpha, beta })
    }
}

/// A hedge call held between two rebalance dates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeOption {
    pub strike: f64,
    pub expiry: f64,
}

fn vanilla_market(curves: &Curves, t: f64, spot: f64, tau: f64) -> FxMarket {
    let (df_dom, df_for) = curves.discounts(t, tau);
    FxMarket {
        spot,
        df_dom,
        df_for,
        expiry: tau,
    }
}

/// The call struck at the delta-neutral straddle strike `F·exp(σ²τ/2)` of
/// the market smile, `tenor` years after `t`.
pub fn hedge_option_at(
    params: &HestonParams,
    curves: &Curves,
    t: f64,
    spot: f64,
    variance: f64,
    tenor: f64,
) -> Result<HedgeOption> {
    let p = params.with_state(spot, variance);
    let mut slice = HestonSlice::new(&p, tenor)?.with_tolerance(VANILLA_TOLERANCE);
    atm_option(&mut slice, &p, curves, t, spot, variance)
}

fn atm_option(
    slice: &mut HestonSlice,
    p: &HestonParams,
    curves: &Curves,
    t: f64,
    spot: f64,
    variance: f64,
) -> Result<HedgeOption> {
    let tenor = slice.tau();
    let market = vanilla_market(curves, t, spot, tenor);
    let forward = market.forward();
    let mut sigma = (expected_variance_integral(p, tenor)? / tenor).sqrt().max(1e-4);
    for _ in 0..100 {
        let strike = forward * (0.5 * sigma * sigma * tenor).exp();
        let price = slice.price(forward, strike, market.df_dom, OptionKind::Call)?;
        let next = bs_implied_vol(price, &market.quote(strike, sigma, OptionKind::Call))?;
        if (next - sigma).abs() < 1e-12 {
            return Ok(HedgeOption {
                strike: forward * (0.5 * next * next * tenor).exp(),
                expiry: t + tenor,
            });
        }
        sigma = next;
    }
    Err(Error::Numeric(format!(
        "ATM strike iteration did not settle at t={t}, spot={spot}, variance={variance}"
    )))
}

/// Market-model value of the hedge call, its Δ and ϑ (bumps as for the
/// portfolio). Past expiry it is worth its intrinsic value.
pub fn hedge_option_greeks(
    params: &HestonParams,
    curves: &Curves,
    option: &HedgeOption,
    t: f64,
    spot: f64,
    variance: f64,
) -> Result<(f64, ExternalGreeks)> {
    let tau = option.expiry - t;
    if tau <= 1e-12 {
        let up = spot > option.strike;
        return Ok((
            (spot - option.strike).max(0.0),
            ExternalGreeks {
                delta: if up { 1.0 } else { 0.0 },
                vartheta: 0.0,
            },
        ));
    }
    let mut slice = HestonSlice::new(&params.with_state(spot, variance), tau)?.with_tolerance(VANILLA_TOLERANCE);
    greeks_on(&mut slice, params, curves, option, t, spot, variance)
}

fn greeks_on(
    slice: &mut HestonSlice,
    params: &HestonParams,
    curves: &Curves,
    option: &HedgeOption,
    t: f64,
    spot: f64,
    variance: f64,
) -> Result<(f64, ExternalGreeks)> {
    let tau = slice.tau();
    let market = vanilla_market(curves, t, spot, tau);
    let f = |s: f64| s * market.df_for / market.df_dom;
    let k = option.strike;
    let c = slice.price(f(spot), k, market.df_dom, OptionKind::Call)?;
    let ds = spot * SPOT_BUMP;
    let cu = slice.price(f(spot + ds), k, market.df_dom, OptionKind::Call)?;
    let cd = slice.price(f(spot - ds), k, market.df_dom, OptionKind::Call)?;
    let mut bumped = HestonSlice::new(&params.with_state(spot, variance + VARIANCE_BUMP), tau)?
        .with_tolerance(VANILLA_TOLERANCE);
    let cv = bumped.price(f(spot), k, market.df_dom, OptionKind::Call)?;
    Ok((
        c,
        ExternalGreeks {
            delta: (cu - cd) / (2.0 * ds),
            vartheta: (cv - c) / VARIANCE_BUMP,
        },
    ))
}

/// A freshly struck hedge call with its value and greeks.
pub fn new_hedge_option(
    params: &HestonParams,
    curves: &Curves,
    t: f64,
    spot: f64,
    variance: f64,
    tenor: f64,
) -> Result<(HedgeOption, f64, ExternalGreeks)> {
    let p = params.with_state(spot, variance);
    let mut slice = HestonSlice::new(&p, tenor)?.with_tolerance(VANILLA_TOLERANCE);
    let option = atm_option(&mut slice, &p, curves, t, spot, variance)?;
    let (c, g) = greeks_on(&mut slice, params, curves, &option, t, spot, variance)?;
    Ok((option, c, g))
}

/// Market-model value of the hedge call.
pub fn hedge_option_value(
    params: &HestonParams,
    curves: &Curves,
    option: &HedgeOption,
    t: f64,
    spot: f64,
    variance: f64,
) -> Result<f64> {
    let tau = option.expiry - t;
    if tau <= 1e-12 {
        return Ok((spot - option.strike).max(0.0));
    }
    let market = vanilla_market(curves, t, spot, tau);
    HestonSlice::new(&params.with_state(spot, variance), tau)?
        .with_tolerance(VANILLA_TOLERANCE)
        .price(market.forward(), option.strike, market.df_dom, OptionKind::Call)
}

/// Remaining lives of the legs that can still pay.
fn live_tenors(portfolio: &Portfolio, state: &LifecycleState, t: f64) -> Vec<f64> {
    portfolio
        .legs
        .iter()
        .zip(&state.legs)
        .filter(|(leg, st)| {
            !st.settled && !(matches!(leg, Product::DoubleNoTouch(_)) && st.knocked)
        })
        .map(|(leg, _)| leg.expiry() - t)
        .filter(|&tau| tau > 1e-12)
        .collect()
}

/// Values a portfolio with one pricer and builds the surfaces it needs.
pub struct PortfolioValuer<'a> {
    pricer: &'a dyn ModelPricer,
    params: HestonParams,
    curves: &'a Curves,
    spec: SurfaceSpec,
    last: Option<VolSurface>,
}

impl<'a> PortfolioValuer<'a> {
    pub fn new(pricer: &'a dyn ModelPricer, params: &HestonParams, curves: &'a Curves, spec: &SurfaceSpec) -> Self {
        let mut spec = spec.clone();
        if let Some(b) = pricer.surface_buckets() {
            spec.buckets = b;
        }
        Self {
            pricer,
            params: *params,
            curves,
            spec,
            last: None,
        }
    }

    /// Surface generated by `(spot, variance)` at `t` covering the live legs.
    pub fn surface(
        &self,
        portfolio: &Portfolio,
        state: &LifecycleState,
        t: f64,
        spot: f64,
        variance: f64,
        hint: Option<&VolSurface>,
    ) -> Result<Option<VolSurface>> {
        if !self.pricer.needs_surface() {
            return Ok(None);
        }
        let tenors = live_tenors(portfolio, state, t);
        if tenors.is_empty() {
            return Ok(None);
        }
        let spec = self.spec.restricted_to(&tenors);
        let hint = hint.or(self.last.as_ref());
        build_surface_from(&self.params.with_state(spot, variance), &spec, self.curves, t, hint).map(Some)
    }

    fn price_on(
        &self,
        portfolio: &Portfolio,
        state: &LifecycleState,
        t: f64,
        spot: f64,
        variance: f64,
        surface: Option<&VolSurface>,
    ) -> Result<f64> {
        self.pricer.price(
            portfolio,
            state,
            &Snapshot {
                time: t,
                spot,
                variance,
                surface,
                curves: self.curves,
            },
        )
    }

    /// Price with Δ (spot bump, delta-quoted vols kept) and ϑ (variance bump
    /// with the surface regenerated, or the chain rule).
    pub fn value_and_greeks(
        &mut self,
        portfolio: &Portfolio,
        state: &LifecycleState,
        t: f64,
        spot: f64,
        variance: f64,
        mode: VarthetaMode,
    ) -> Result<(f64, ExternalGreeks)> {
        let base = self.surface(portfolio, state, t, spot, variance, None)?;
        let price = self.price_on(portfolio, state, t, spot, variance, base.as_ref())?;
        let ds = spot * SPOT_BUMP;
        let shifted = |s: f64| base.as_ref().map(|b| b.with_spot(s));
        let up = self.price_on(portfolio, state, t, spot + ds, variance, shifted(spot + ds).as_ref())?;
        let dn = self.price_on(portfolio, state, t, spot - ds, variance, shifted(spot - ds).as_ref())?;
        let v_up = variance + VARIANCE_BUMP;
        let bumped = self.surface(portfolio, state, t, spot, v_up, base.as_ref())?;
        let vartheta = match (mode, &base, &bumped) {
            (VarthetaMode::ChainRule, Some(b), Some(u)) => {
                let vegas = self.node_vegas(portfolio, state, b)?;
                let sens = node_sensitivities(b, u, VARIANCE_BUMP);
                model_vega_theta(&vegas, &sens)
            }
            (VarthetaMode::ChainRule, _, _) if self.pricer.needs_surface() => 0.0,
            (VarthetaMode::ChainRule, _, _) => {
                return Err(Error::Unsupported(format!(
                    "chain-rule vartheta needs a surface-based pricer, not {}",
                    self.pricer.name()
                )))
            }
            (VarthetaMode::External, _, _) => {
                let pv = self.price_on(portfolio, state, t, spot, v_up, bumped.as_ref())?;
                (pv - price) / VARIANCE_BUMP
            }
        };
        if base.is_some() {
            self.last = base;
        }
        Ok((
            price,
            ExternalGreeks {
                delta: (up - dn) / (2.0 * ds),
                vartheta,
            },
        ))
    }

    /// `∂P/∂σ` per surface node (central bumps), indexed `[pillar][bucket]`.
    pub fn node_vegas(
        &self,
        portfolio: &Portfolio,
        state: &LifecycleState,
        surface: &VolSurface,
    ) -> Result<Vec<Vec<f64>>> {
        let (t, s, v) = (surface.time(), surface.spot(), surface.variance());
        let mut out = Vec::with_capacity(surface.pillars().len());
        for i in 0..surface.pillars().len() {
            let mut row = Vec::with_capacity(surface.buckets().len());
            for j in 0..surface.buckets().len() {
                let up = surface.with_node_shift(i, j, NODE_VOL_BUMP)?;
                let dn = surface.with_node_shift(i, j, -NODE_VOL_BUMP)?;
                let pu = self.price_on(portfolio, state, t, s, v, Some(&up))?;
                let pd = self.price_on(portfolio, state, t, s, v, Some(&dn))?;
                row.push((pu - pd) / (2.0 * NODE_VOL_BUMP));
            }
            out.push(row);
        }
        Ok(out)
    }
}

/// `∂σ/∂v` per node from a base and a variance-bumped surface.
pub fn node_sensitivities(base: &VolSurface, bumped: &VolSurface, dv: f64) -> Vec<Vec<f64>> {
    base.pillars()
        .iter()
        .zip(bumped.pillars())
        .map(|(a, b)| a.vols.iter().zip(&b.vols).map(|(x, y)| (y - x) / dv).collect())
        .collect()
}

/// `Σᵢ (∂P/∂σᵢ)(∂σᵢ/∂v)`.
pub fn model_vega_theta(node_vegas: &[Vec<f64>], node_sens: &[Vec<f64>]) -> f64 {
    node_vegas
        .iter()
        .zip(node_sens)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y))
        .sum()
}

/// External greeks of `portfolio` under `pricer` at one market state.
#[allow(clippy::too_many_arguments)]
pub fn external_greeks(
    pricer: &dyn ModelPricer,
    portfolio: &Portfolio,
    state: &LifecycleState,
    params: &HestonParams,
    curves: &Curves,
    spec: &SurfaceSpec,
    t: f64,
    spot: f64,
    variance: f64,
) -> Result<(f64, ExternalGreeks)> {
    PortfolioValuer::new(pricer, params, curves, spec).value_and_greeks(
        portfolio,
        state,
        t,
        spot,
        variance,
        VarthetaMode::External,
    )
}

/// Cash after selling the held hedge and buying the new one.
pub fn rebalance(cash: f64, held_value_now: f64, new_value: f64) -> f64 {
    cash + held_value_now - new_value
}

/// Cash and foreign bank account carried from `t0` to `t1`.
pub fn accrue(cash: f64, foreign_account: f64, curves: &Curves, t0: f64, t1: f64) -> (f64, f64) {
    (
        cash / curves.domestic.discount(t0, t1),
        foreign_account / curves.foreign.discount(t0, t1),
    )
}

/// One date of the hedge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub time: f64,
    pub spot: f64,
    pub variance: f64,
    /// Model value Π of the portfolio after the date's events.
    pub price: f64,
    pub delta: f64,
    pub vartheta: f64,
    /// NaN once no hedge option is held; travels as `null` on the wire.
    #[serde(with = "nullable")]
    pub hedge_strike: f64,
    pub hedge_price: f64,
    pub hedge_delta: f64,
    pub hedge_vartheta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub foreign_account: f64,
    /// After rebalancing, before accrual.
    pub cash: f64,
    /// `α·S·B^f + β·C`.
    pub hedge_value: f64,
    /// `cash + hedge_value + price`.
    pub total: f64,
    pub events: Vec<String>,
}

mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeLedger {
    pub path_id: u64,
    pub rows: Vec<LedgerRow>,
}

impl HedgeLedger {
    /// Model price of the portfolio at the first date.
    pub fn initial_price(&self) -> f64 {
        self.rows[0].price
    }

    pub fn terminal_total(&self) -> f64 {
        self.rows[self.rows.len() - 1].total
    }

    /// Terminal total discounted to the first date.
    pub fn discounted_terminal(&self, curves: &Curves) -> f64 {
        let (t0, t1) = (self.rows[0].time, self.rows[self.rows.len() - 1].time);
        self.terminal_total() * curves.domestic.discount(t0, t1)
    }

    pub fn totals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.total).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "date,spot,variance,delta,vartheta,alpha,beta,cash,price,total,events,\
             hedge_strike,hedge_price,hedge_delta,hedge_vartheta,foreign_account,hedge_value\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.time,
                r.spot,
                r.variance,
                r.delta,
                r.vartheta,
                r.alpha,
                r.beta,
                r.cash,
                r.price,
                r.total,
                r.events.join(";"),
                r.hedge_strike,
                r.hedge_price,
                r.hedge_delta,
                r.hedge_vartheta,
                r.foreign_account,
                r.hedge_value
            ));
        }
        out
    }
}

/// Everything that stays fixed across the paths of a run.
#[derive(Debug, Clone)]
pub struct HedgeSetup {
    /// Market dynamics; the state fields are ignored.
    pub params: HestonParams,
    pub curves: Curves,
    pub spec: HedgeSpec,
    /// Seed of the barrier-bridge draws (used with bridge monitoring).
    pub seed: u64,
}

/// Barrier knocks between the previous and the current date drawn from the
/// bridge survival probability of each leg.
fn bridge_knocks(
    portfolio: &Portfolio,
    path: &PathGrid,
    k: usize,
    rng: &mut impl Rng,
) -> Vec<bool> {
    let (x0, x1) = (path.spots[k - 1].ln(), path.spots[k].ln());
    let (v0, v1) = (path.variances[k - 1], path.variances[k]);
    let dt = path.dates[k] - path.dates[k - 1];
    portfolio
        .legs
        .iter()
        .map(|leg| {
            let u: f64 = rng.random();
            let (lo, hi) = match leg {
                Product::DoubleNoTouch(d) => (Some(d.lower), Some(d.upper)),
                Product::Fader(f) => (f.ko_lower, f.ko_upper),
                Product::Vanilla(_) => (None, None),
            };
            if lo.is_none() && hi.is_none() {
                return false;
            }
            let survival = bridge_survival(x0, x1, v0, v1, dt, lo.map(f64::ln), hi.map(f64::ln));
            u >= survival
        })
        .collect()
}

/// Hedges `portfolio` (snapped to `path.dates`) along `path`, valuing it
/// with `pricer` and the hedge vanilla with the market model.
pub fn run_hedge_path(
    portfolio: &Portfolio,
    pricer: &dyn ModelPricer,
    path: &PathGrid,
    setup: &HedgeSetup,
) -> Result<HedgeLedger> {
    let at = |i: usize| path.dates.get(i).copied().unwrap_or(f64::NAN);
    let mut current = 0usize;
    run_inner(portfolio, pricer, path, setup, &mut current).map_err(|e| Error::Path {
        path: path.path_id,
        time: at(current),
        source: Box::new(e),
    })
}

fn run_inner(
    portfolio: &Portfolio,
    pricer: &dyn ModelPricer,
    path: &PathGrid,
    setup: &HedgeSetup,
    current: &mut usize,
) -> Result<HedgeLedger> {
    setup.spec.validate()?;
    let n = path.dates.len();
    if n < 2 || path.spots.len() != n || path.variances.len() != n {
        return Err(Error::invalid("path", "needs at least two dates with spot and variance on each"));
    }
    let spec = &setup.spec;
    let params = &setup.params;
    let curves = &setup.curves;
    let mut valuer = PortfolioValuer::new(pricer, params, curves, &spec.surface);
    let mut rng = path_rng(setup.seed ^ BRIDGE_STREAM_KEY, path.path_id);
    let mut state = portfolio.initial_state();
    let mut cash = 0.0;
    let mut bf = 1.0;
    let mut ratios = HedgeRatios::default();
    let mut option: Option<HedgeOption> = None;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        *current = i;
        let (t, s, v) = (path.dates[i], path.spots[i], path.variances[i]);
        let mut events = Vec::new();
        if i > 0 {
            let knocks = match spec.monitoring {
                BarrierMonitoring::BrownianBridge => bridge_knocks(portfolio, path, i, &mut rng),
                BarrierMonitoring::Daily => Vec::new(),
            };
            let (flow, ev) = apply_events(portfolio, &mut state, t, s, &knocks);
            cash += flow;
            events = ev.iter().map(|e| e.tag()).collect();
            let held = match (&option, ratios.beta) {
                (Some(o), b) if b != 0.0 => b * hedge_option_value(params, curves, o, t, s, v)?,
                _ => 0.0,
            };
            cash = rebalance(cash, ratios.alpha * s * bf + held, 0.0);
        }
        let dead = state.is_dead(portfolio);
        let (price, greeks) = if dead {
            (0.0, ExternalGreeks::default())
        } else {
            valuer.value_and_greeks(portfolio, &state, t, s, v, spec.vartheta_mode)?
        };
        if i == 0 {
            cash = -price;
        }
        let (c, c_greeks) = if dead {
            if !spec.hedge.static_strike {
                option = None;
            }
            (0.0, ExternalGreeks::default())
        } else if spec.hedge.static_strike && option.is_some() {
            hedge_option_greeks(params, curves, option.as_ref().unwrap(), t, s, v)?
        } else {
            let (o, c, g) = new_hedge_option(params, curves, t, s, v, spec.hedge.tenor)?;
            option = Some(o);
            (c, g)
        };
        ratios = if dead || !spec.hedged {
            HedgeRatios::default()
        } else {
            HedgeRatios::new(&greeks, &c_greeks, bf)?
        };
        let hedge_value = ratios.alpha * s * bf + ratios.beta * c;
        cash = rebalance(cash, 0.0, hedge_value);
        rows.push(LedgerRow {
            time: t,
            spot: s,
            variance: v,
            price,
            delta: greeks.delta,
            vartheta: greeks.vartheta,
            hedge_strike: option.map_or(f64::NAN, |o| o.strike),
            hedge_price: c,
            hedge_delta: c_greeks.delta,
            hedge_vartheta: c_greeks.vartheta,
            alpha: ratios.alpha,
            beta: ratios.beta,
            foreign_account: bf,
            cash,
            hedge_value,
            total: cash + hedge_value + price,
            events,
        });
        if i + 1 < n {
            (cash, bf) = accrue(cash, bf, curves, t, path.dates[i + 1]);
        }
    }
    Ok(HedgeLedger {
        path_id: path.path_id,
        rows,
    })
}

//! Delta-bucketed implied-volatility surface generated by a Heston state.
//!
//! Each pillar is solved independently by a fixed point on the bucket vols:
//! strikes from the target deltas, Heston prices at those strikes, implied
//! vols and deltas from the prices, then a monotone cubic in call-delta space
//! read back at the target deltas. Across expiries the bucket vols are
//! interpolated linearly in total variance and held flat outside the pillars.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::market::{expected_variance_integral, HestonParams};
use crate::pricing::{
    bs_delta, bs_implied_vol, strike_from_delta, DeltaConvention, FxMarket, HestonSlice,
    OptionKind,
};
use crate::rates::Curves;

/// One quotation bucket of the smile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Bucket {
    /// Put with the given absolute spot delta, e.g. `Put(0.25)`.
    Put(f64),
    /// Delta-neutral straddle.
    Atm,
    Call(f64),
}

impl Bucket {
    /// Spot call delta targeted by this bucket when the foreign discount
    /// factor to expiry is `df_for`.
    pub fn call_delta(self, df_for: f64) -> f64 {
        match self {
            Bucket::Put(d) => df_for - d,
            Bucket::Atm => 0.5 * df_for,
            Bucket::Call(d) => d,
        }
    }

    /// Signed delta as quoted: negative for puts.
    pub fn quoted_delta(self, df_for: f64) -> f64 {
        match self {
            Bucket::Put(d) => -d,
            Bucket::Atm => 0.5 * df_for,
            Bucket::Call(d) => d,
        }
    }

    pub fn standard() -> Vec<Bucket> {
        vec![
            Bucket::Put(0.10),
            Bucket::Put(0.25),
            Bucket::Atm,
            Bucket::Call(0.25),
            Bucket::Call(0.10),
        ]
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bucket::Put(d) => write!(f, "{}P", d * 100.0),
            Bucket::Atm => write!(f, "ATM"),
            Bucket::Call(d) => write!(f, "{}C", d * 100.0),
        }
    }
}

impl FromStr for Bucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("atm") {
            return Ok(Bucket::Atm);
        }
        let bad = || Error::invalid("bucket", format!("cannot parse {s:?}; expected e.g. 25P, ATM, 10C"));
        if s.len() < 2 {
            return Err(bad());
        }
        let (num, side) = s.split_at(s.len() - 1);
        let pct: f64 = num.parse().map_err(|_| bad())?;
        if !(pct > 0.0 && pct < 50.0) {
            return Err(Error::invalid("bucket", format!("{s}: delta must lie in (0, 50)")));
        }
        match side {
            "P" | "p" => Ok(Bucket::Put(pct / 100.0)),
            "C" | "c" => Ok(Bucket::Call(pct / 100.0)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Bucket {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Bucket> for String {
    fn from(b: Bucket) -> String {
        b.to_string()
    }
}

/// Grid and solver settings for a surface build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSpec {
    /// Pillar expiries in years, increasing.
    pub pillars: Vec<f64>,
    /// Buckets ordered by increasing strike.
    pub buckets: Vec<Bucket>,
    pub convention: DeltaConvention,
    /// Convergence tolerance, in delta units and in vol units.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        Self {
            pillars: vec![1.0 / 12.0, 0.25, 0.5, 1.0, 2.0],
            buckets: Bucket::standard(),
            convention: DeltaConvention::default(),
            tolerance: 1e-6,
            max_iterations: 50,
        }
    }
}

impl SurfaceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.pillars.is_empty() {
            return Err(Error::invalid("surface.pillars", "at least one pillar required"));
        }
        if self.pillars.iter().any(|&p| !(p > 0.0) || !p.is_finite())
            || self.pillars.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::invalid("surface.pillars", "must be positive and strictly increasing"));
        }
        if self.buckets.len() < 2 {
            return Err(Error::invalid("surface.buckets", "at least two buckets required"));
        }
        if !self.buckets.contains(&Bucket::Atm) {
            return Err(Error::invalid("surface.buckets", "the ATM bucket is required"));
        }
        // strikes increase iff call deltas decrease
        if self
            .buckets
            .windows(2)
            .any(|w| w[1].call_delta(1.0) >= w[0].call_delta(1.0))
        {
            return Err(Error::invalid(
                "surface.buckets",
                "must be ordered by increasing strike (puts by decreasing delta, ATM, calls by decreasing delta)",
            ));
        }
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(Error::invalid("surface.tolerance", "must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("surface.max_iterations", "must be >= 1"));
        }
        self.convention.validate()
    }

    /// The same spec keeping only the pillars that queries at `tenors` read.
    /// A surface built from it answers those queries exactly as the full one.
    pub fn restricted_to(&self, tenors: &[f64]) -> SurfaceSpec {
        let n = self.pillars.len();
        let mut keep = vec![false; n];
        for &tau in tenors {
            let j = self.pillars.partition_point(|&p| p < tau);
            if j < n {
                keep[j] = true;
            }
            if j > 0 && (j == n || self.pillars[j] != tau) {
                keep[j - 1] = true;
            }
        }
        SurfaceSpec {
            pillars: self
                .pillars
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(&p, _)| p)
                .collect(),
            ..self.clone()
        }
    }

    /// Absolute accuracy asked of the Heston quadrature during a build.
    fn pricing_tolerance(&self) -> f64 {
        (self.tolerance * 1e-3).clamp(1e-13, 1e-9)
    }
}

/// Solved smile at one pillar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PillarSmile {
    pub tenor: f64,
    pub df_dom: f64,
    pub df_for: f64,
    /// One vol per bucket, in bucket order.
    pub vols: Vec<f64>,
    pub iterations: usize,
    /// Worst delta residual at the last iterate.
    pub residual: f64,
}

/// Implied-vol surface generated by a Heston state `(S, v)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolSurface {
    spot: f64,
    variance: f64,
    time: f64,
    curves: Curves,
    buckets: Vec<Bucket>,
    pillars: Vec<PillarSmile>,
}

/// Smile at one expiry in call-delta space.
#[derive(Debug, Clone)]
pub struct Smile {
    pub market: FxMarket,
    /// Target call delta per bucket, in bucket order (decreasing).
    pub call_deltas: Vec<f64>,
    pub vols: Vec<f64>,
    interp: MonotoneCubic,
}

impl Smile {
    fn new(market: FxMarket, call_deltas: Vec<f64>, vols: Vec<f64>) -> Self {
        let interp = MonotoneCubic::new(
            call_deltas.iter().rev().copied().collect(),
            vols.iter().rev().copied().collect(),
        );
        Self {
            market,
            call_deltas,
            vols,
            interp,
        }
    }

    pub fn vol_at_call_delta(&self, call_delta: f64) -> f64 {
        self.interp.eval(call_delta)
    }

    /// Vol at a strike: solves `σ = smile(Δ_call(K, σ))`.
    pub fn vol_at_strike(&self, strike: f64) -> Result<f64> {
        if !(strike > 0.0) || !strike.is_finite() {
            return Err(Error::invalid("strike", "must be positive and finite"));
        }
        let atm = self.vol_at_call_delta(0.5 * self.market.df_for);
        let mut sigma = atm;
        for it in 0..200 {
            let delta = bs_delta(&self.market.quote(strike, sigma, OptionKind::Call))?;
            let next = self.vol_at_call_delta(delta);
            let next = if it < 20 { next } else { 0.5 * (next + sigma) };
            if (next - sigma).abs() < 1e-14 {
                return Ok(next);
            }
            sigma = next;
        }
        Ok(sigma)
    }
}

impl VolSurface {
    pub fn spot(&self) -> f64 {
        self.spot
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Valuation time the expiries are measured from.
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    pub fn pillars(&self) -> &[PillarSmile] {
        &self.pillars
    }

    pub fn curves(&self) -> &Curves {
        &self.curves
    }

    /// The same delta-quoted vols seen from another spot.
    pub fn with_spot(&self, spot: f64) -> VolSurface {
        VolSurface {
            spot,
            ..self.clone()
        }
    }

    fn market(&self, expiry: f64) -> FxMarket {
        let (df_dom, df_for) = self.curves.discounts(self.time, expiry);
        FxMarket {
            spot: self.spot,
            df_dom,
            df_for,
            expiry,
        }
    }

    /// Bucket vols at `expiry`, linear in total variance between pillars and
    /// flat outside.
    pub fn bucket_vols(&self, expiry: f64) -> Vec<f64> {
        let p = &self.pillars;
        let j = p.partition_point(|s| s.tenor < expiry);
        if j == 0 {
            return p[0].vols.clone();
        }
        if j == p.len() {
            return p[j - 1].vols.clone();
        }
        if p[j].tenor == expiry {
            return p[j].vols.clone();
        }
        let (a, b) = (&p[j - 1], &p[j]);
        let x = (expiry - a.tenor) / (b.tenor - a.tenor);
        a.vols
            .iter()
            .zip(&b.vols)
            .map(|(&va, &vb)| {
                let w = (1.0 - x) * va * va * a.tenor + x * vb * vb * b.tenor;
                (w / expiry).sqrt()
            })
            .collect()
    }

    pub fn smile(&self, expiry: f64) -> Result<Smile> {
        if !(expiry > 0.0) || !expiry.is_finite() {
            return Err(Error::invalid("expiry", "must be > 0"));
        }
        let market = self.market(expiry);
        let deltas = self
            .buckets
            .iter()
            .map(|b| b.call_delta(market.df_for))
            .collect();
        Ok(Smile::new(market, deltas, self.bucket_vols(expiry)))
    }

    pub fn atm_vol(&self, expiry: f64) -> f64 {
        let i = self.buckets.iter().position(|b| *b == Bucket::Atm).unwrap_or(0);
        self.bucket_vols(expiry)[i]
    }

    /// Strike of the `(pillar, bucket)` node.
    pub fn node_strike(&self, pillar: usize, bucket: usize) -> Result<f64> {
        let p = &self.pillars[pillar];
        let market = self.market(p.tenor);
        let b = self.buckets[bucket];
        strike_from_delta(
            b.quoted_delta(market.df_for),
            p.vols[bucket],
            &DeltaConvention::default(),
            &market,
        )
    }

    /// The surface with one node vol moved by `dvol`.
    pub fn with_node_shift(&self, pillar: usize, bucket: usize, dvol: f64) -> Result<VolSurface> {
        if pillar >= self.pillars.len() || bucket >= self.buckets.len() {
            return Err(Error::invalid("node", format!("({pillar}, {bucket}) is not a surface node")));
        }
        let mut out = self.clone();
        out.pillars[pillar].vols[bucket] += dvol;
        Ok(out)
    }

    /// The surface with every node vol moved by `dvol`.
    pub fn with_parallel_shift(&self, dvol: f64) -> VolSurface {
        let mut out = self.clone();
        for p in &mut out.pillars {
            p.vols.iter_mut().for_each(|v| *v += dvol);
        }
        out
    }

    /// `pillar,bucket,strike,vol` rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::from("pillar,bucket,strike,vol\n");
        for (i, p) in self.pillars.iter().enumerate() {
            for (j, b) in self.buckets.iter().enumerate() {
                let k = self.node_strike(i, j)?;
                out.push_str(&format!("{},{},{:.10},{:.10}\n", p.tenor, b, k, p.vols[j]));
            }
        }
        Ok(out)
    }
}

/// Vol at `(strike, expiry)` with `expiry` measured from the surface time.
pub fn query_vol(surface: &VolSurface, strike: f64, expiry: f64) -> Result<f64> {
    surface.smile(expiry)?.vol_at_strike(strike)
}

/// Surface implied by `params` restarted from its `(s0, v0)` at time `t`.
pub fn build_surface(
    params: &HestonParams,
    spec: &SurfaceSpec,
    curves: &Curves,
    t: f64,
) -> Result<VolSurface> {
    build_surface_from(params, spec, curves, t, None)
}

/// `build_surface` starting the iteration at the vols of `hint` wherever it
/// has the same pillar and buckets. The converged surface is the same to
/// within the tolerance; close hints just need fewer iterations.
pub fn build_surface_from(
    params: &HestonParams,
    spec: &SurfaceSpec,
    curves: &Curves,
    t: f64,
    hint: Option<&VolSurface>,
) -> Result<VolSurface> {
    params.validate()?;
    spec.validate()?;
    let mut pillars = Vec::with_capacity(spec.pillars.len());
    for &tenor in &spec.pillars {
        let (df_dom, df_for) = curves.discounts(t, tenor);
        let market = FxMarket {
            spot: params.s0,
            df_dom,
            df_for,
            expiry: tenor,
        };
        let mut slice = HestonSlice::new(params, tenor)?.with_tolerance(spec.pricing_tolerance());
        let warm = hint
            .filter(|h| h.buckets == spec.buckets)
            .and_then(|h| h.pillars.iter().find(|p| p.tenor == tenor))
            .map(|p| p.vols.clone());
        let seed = match warm {
            Some(v) => v,
            None => {
                let term = (expected_variance_integral(params, tenor)? / tenor).sqrt();
                vec![term; spec.buckets.len()]
            }
        };
        pillars.push(solve_pillar(&mut slice, &market, spec, seed)?);
    }
    Ok(VolSurface {
        spot: params.s0,
        variance: params.v0,
        time: t,
        curves: curves.clone(),
        buckets: spec.buckets.clone(),
        pillars,
    })
}

/// `build_surface` with the initial variance shifted by `dv`.
pub fn bumped_surface(
    params: &HestonParams,
    spec: &SurfaceSpec,
    curves: &Curves,
    t: f64,
    dv: f64,
) -> Result<VolSurface> {
    build_surface(&params.with_state(params.s0, params.v0 + dv), spec, curves, t)
}

/// Applies one more step of the build iteration to every pillar of `surface`,
/// which `params` (restarted from the surface state) must have produced.
pub fn refine_once(params: &HestonParams, surface: &VolSurface, spec: &SurfaceSpec) -> Result<VolSurface> {
    let params = params.with_state(surface.spot, surface.variance);
    let mut out = surface.clone();
    for pillar in &mut out.pillars {
        let mut slice = HestonSlice::new(&params, pillar.tenor)?.with_tolerance(spec.pricing_tolerance());
        let targets: Vec<f64> = surface
            .buckets
            .iter()
            .map(|b| b.call_delta(pillar.df_for) / pillar.df_for)
            .collect();
        let (implied, deltas) = heston_reprice(&mut slice, pillar.tenor, &targets, &pillar.vols)?;
        pillar.vols = interpolate_at(deltas, implied, &targets);
    }
    Ok(out)
}

fn interpolate_at(deltas: Vec<f64>, implied: Vec<f64>, targets: &[f64]) -> Vec<f64> {
    // implied deltas may come out of order far in the wings
    let mut pts: Vec<(f64, f64)> = deltas.into_iter().zip(implied).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    if pts.len() >= 2 {
        let (xs, ys) = pts.into_iter().unzip();
        let f = MonotoneCubic::new(xs, ys);
        targets.iter().map(|&d| f.eval(d)).collect()
    } else {
        vec![pts[0].1; targets.len()]
    }
}

/// One pass of the map on a unit forward with unit discount factors:
/// strikes from `vols`, then implied vols and normalized call deltas `N(d1)`
/// of the Heston prices at those strikes. Nothing here depends on the spot.
pub(crate) fn heston_reprice(
    slice: &mut HestonSlice,
    expiry: f64,
    targets: &[f64],
    vols: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let unit = FxMarket {
        spot: 1.0,
        df_dom: 1.0,
        df_for: 1.0,
        expiry,
    };
    let conv = DeltaConvention::default();
    let mut implied = Vec::with_capacity(vols.len());
    let mut deltas = Vec::with_capacity(vols.len());
    for (&target, &vol) in targets.iter().zip(vols) {
        let k = strike_from_delta(target, vol, &conv, &unit)?;
        let premium = slice.normalized_call(k)?;
        let q = unit.quote(k, vol, OptionKind::Call);
        let iv = bs_implied_vol(premium, &q)?;
        if !(iv > 0.0) {
            return Err(Error::Numeric(format!(
                "zero implied vol at moneyness {k}, expiry {expiry}"
            )));
        }
        deltas.push(bs_delta(&q.with_vol(iv))?);
        implied.push(iv);
    }
    Ok((implied, deltas))
}

fn solve_pillar(
    slice: &mut HestonSlice,
    market: &FxMarket,
    spec: &SurfaceSpec,
    seed: Vec<f64>,
) -> Result<PillarSmile> {
    let df_for = market.df_for;
    let targets: Vec<f64> = spec
        .buckets
        .iter()
        .map(|b| b.call_delta(df_for) / df_for)
        .collect();
    let mut vols = seed;
    let mut residual = f64::INFINITY;
    for iteration in 1..=spec.max_iterations {
        let (implied, deltas) = heston_reprice(slice, market.expiry, &targets, &vols)?;
        residual = df_for
            * deltas
                .iter()
                .zip(&targets)
                .map(|(d, t)| (d - t).abs())
                .fold(0.0, f64::max);
        let next = interpolate_at(deltas, implied, &targets);
        let step = next
            .iter()
            .zip(&vols)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual < spec.tolerance && step < spec.tolerance {
            return Ok(PillarSmile {
                tenor: market.expiry,
                df_dom: market.df_dom,
                df_for,
                vols,
                iterations: iteration,
                residual,
            });
        }
        vols = next;
    }
    Err(Error::Numeric(format!(
        "surface iteration did not converge at pillar {} after {} iterations; worst delta residual {residual:.3e}",
        market.expiry, spec.max_iterations
    )))
}

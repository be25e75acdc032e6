//! The reference Heston market: parameters, the deterministic variance term
//! structure, and path simulation of the two driving factors `(S_t, v_t)`.
//!
//! Paths are advanced with a full-truncation Euler scheme on `(ln S, v)`.
//! Every path draws from its own ChaCha stream keyed by `(seed, path index)`,
//! so a path set is bit-identical however it is split across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::Curves;

/// ACT/365 fixed.
pub const DAYS_PER_YEAR: f64 = 365.0;

/// Heston parameters together with the initial state `(v0, s0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HestonParams {
    pub kappa: f64,
    pub theta: f64,
    pub eta: f64,
    pub rho: f64,
    pub v0: f64,
    pub s0: f64,
}

impl HestonParams {
    /// EUR/USD one-year calibration used by the double-no-touch study.
    pub fn eurusd_2006() -> Self {
        Self {
            kappa: 1.1,
            theta: 0.0097,
            eta: 0.14,
            rho: 0.14,
            v0: 0.0097,
            s0: 1.2812,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("kappa", self.kappa),
            ("theta", self.theta),
            ("eta", self.eta),
            ("rho", self.rho),
            ("v0", self.v0),
            ("s0", self.s0),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(Error::invalid(format!("heston.{name}"), "non-finite"));
            }
        }
        for (name, value) in &fields[..3] {
            if *value < 0.0 {
                return Err(Error::invalid(format!("heston.{name}"), "must be >= 0"));
            }
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid("heston.rho", "must lie in [-1, 1]"));
        }
        if self.v0 < 0.0 {
            return Err(Error::invalid("heston.v0", "must be >= 0"));
        }
        if self.s0 <= 0.0 {
            return Err(Error::invalid("heston.s0", "must be > 0"));
        }
        Ok(())
    }

    /// Same dynamics, restarted from state `(spot, variance)`.
    pub fn with_state(&self, spot: f64, variance: f64) -> Self {
        Self {
            s0: spot,
            v0: variance,
            ..*self
        }
    }

    /// `E[v_t]` from the current state.
    pub fn mean_variance(&self, t: f64) -> f64 {
        self.theta + (self.v0 - self.theta) * (-self.kappa * t).exp()
    }
}

/// `∫_0^T E[v_u] du`, the total variance of the deterministic part of the
/// variance process.
pub fn expected_variance_integral(params: &HestonParams, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid("T", "must be > 0"));
    }
    let x = params.kappa * t;
    // (1 - e^{-x}) / kappa = t * (1 - e^{-x}) / x, expanded near x = 0
    let decay = if x < 1e-8 {
        t * (1.0 - 0.5 * x + x * x / 6.0)
    } else {
        -(-x).exp_m1() / params.kappa
    };
    Ok(params.theta * t + (params.v0 - params.theta) * decay)
}

/// Daily observation dates `0, 1/365, ..., days/365`.
pub fn daily_grid(days: usize) -> Vec<f64> {
    (0..=days).map(|d| d as f64 / DAYS_PER_YEAR).collect()
}

/// Number of whole days in a year fraction on the daily grid.
pub fn to_days(t: f64) -> usize {
    (t * DAYS_PER_YEAR - 1e-9).ceil().max(0.0) as usize
}

pub fn validate_grid(dates: &[f64]) -> Result<()> {
    if dates.len() < 2 {
        return Err(Error::invalid("dates", "grid needs at least two dates"));
    }
    if dates.iter().any(|d| !d.is_finite()) || dates[0] < 0.0 {
        return Err(Error::invalid("dates", "dates must be finite and >= 0"));
    }
    if dates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("dates", "dates must be strictly increasing"));
    }
    Ok(())
}

/// One simulated market path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub path_id: u64,
    pub dates: Vec<f64>,
    pub spots: Vec<f64>,
    pub variances: Vec<f64>,
}

impl PathGrid {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Random stream for one path. The seed keys the ChaCha instance and the path
/// index selects its stream, so streams never overlap.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Pre-computed per-interval quantities for the Euler scheme.
#[derive(Debug, Clone)]
pub struct EulerSchedule {
    dts: Vec<f64>,
    carry: Vec<f64>,
}

impl EulerSchedule {
    /// `dates` are absolute times; carry uses `∫(r_d - r_f)` over each interval.
    pub fn new(dates: &[f64], curves: &Curves) -> Self {
        let dts = dates.windows(2).map(|w| w[1] - w[0]).collect();
        let carry = dates
            .windows(2)
            .map(|w| {
                (curves.domestic.integral(w[1]) - curves.domestic.integral(w[0]))
                    - (curves.foreign.integral(w[1]) - curves.foreign.integral(w[0]))
            })
            .collect();
        Self { dts, carry }
    }

    pub fn steps(&self) -> usize {
        self.dts.len()
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.dts[k]
    }

    pub fn carry(&self, k: usize) -> f64 {
        self.carry[k]
    }
}

/// Correlated Heston increment driver.
#[derive(Debug, Clone, Copy)]
pub struct EulerStepper {
    kappa: f64,
    theta: f64,
    eta: f64,
    rho: f64,
    rho_bar: f64,
}

impl EulerStepper {
    pub fn new(params: &HestonParams) -> Self {
        Self {
            kappa: params.kappa,
            theta: params.theta,
            eta: params.eta,
            rho: params.rho,
            rho_bar: (1.0 - params.rho * params.rho).max(0.0).sqrt(),
        }
    }

    /// Advances `(ln S, v)` over `dt` with independent normals `z1`, `z2`.
    /// `v` is the untruncated state; only `v⁺` enters drift and diffusion.
    #[inline]
    pub fn step(&self, ln_s: f64, v: f64, dt: f64, carry: f64, z1: f64, z2: f64) -> (f64, f64) {
        let vp = v.max(0.0);
        let sd = (vp * dt).sqrt();
        let ln_s = ln_s + carry - 0.5 * vp * dt + sd * z1;
        let zv = self.rho * z1 + self.rho_bar * z2;
        let v = v + self.kappa * (self.theta - vp) * dt + self.eta * sd * zv;
        (ln_s, v)
    }
}

/// Draws two independent standard normals.
#[inline]
pub fn normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    (z1, z2)
}

/// Simulates one path; a pure function of `(params, curves, dates, seed, path_id)`.
pub fn simulate_path(
    params: &HestonParams,
    schedule: &EulerSchedule,
    dates: &[f64],
    seed: u64,
    path_id: u64,
) -> PathGrid {
    let stepper = EulerStepper::new(params);
    let mut rng = path_rng(seed, path_id);
    let mut spots = Vec::with_capacity(dates.len());
    let mut variances = Vec::with_capacity(dates.len());
    let mut ln_s = params.s0.ln();
    let mut v = params.v0;
    spots.push(params.s0);
    variances.push(v.max(0.0));
    for k in 0..schedule.steps() {
        let (z1, z2) = normal_pair(&mut rng);
        (ln_s, v) = stepper.step(ln_s, v, schedule.dt(k), schedule.carry(k), z1, z2);
        spots.push(ln_s.exp());
        variances.push(v.max(0.0));
    }
    PathGrid {
        path_id,
        dates: dates.to_vec(),
        spots,
        variances,
    }
}

/// Simulates paths `path_ids` on `dates` (absolute year fractions).
pub fn simulate_paths_range(
    params: &HestonParams,
    curves: &Curves,
    dates: &[f64],
    path_ids: std::ops::Range<u64>,
    seed: u64,
) -> Result<Vec<PathGrid>> {
    params.validate()?;
    curves.validate()?;
    validate_grid(dates)?;
    let schedule = EulerSchedule::new(dates, curves);
    Ok(path_ids
        .map(|id| simulate_path(params, &schedule, dates, seed, id))
        .collect())
}

/// Simulates `n_paths` independent paths with ids `0..n_paths`.
pub fn simulate_paths(
    params: &HestonParams,
    curves: &Curves,
    dates: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PathGrid>> {
    if n_paths == 0 {
        return Err(Error::invalid("n_paths", "must be >= 1"));
    }
    simulate_paths_range(params, curves, dates, 0..n_paths as u64, seed)
}

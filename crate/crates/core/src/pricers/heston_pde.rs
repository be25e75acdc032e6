//! Heston pricer for use inside the hedging loop.
//!
//! Barrier legs are solved once, backwards on a (log-spot, variance) grid
//! with a Douglas ADI scheme, and the value surface is stored for every
//! simulation day. With daily monitoring the value is zeroed outside the
//! corridor on each day; with bridge monitoring the barriers are absorbing
//! boundaries. Vanillas use the characteristic-function pricer.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::heston_mc::BarrierMonitoring;
use super::{ModelPricer, Snapshot};
use crate::error::{Error, Result};
use crate::market::{HestonParams, DAYS_PER_YEAR};
use crate::pricing::HestonSlice;
use crate::products::{DoubleNoTouch, LifecycleState, Portfolio, Product};
use crate::rates::Curves;

/// Resolution of the finite-difference grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeGrid {
    /// Log-spot intervals between the two barriers.
    pub nx_inside: usize,
    pub nv: usize,
    pub steps_per_day: usize,
    /// Upper variance boundary as a multiple of `max(θ, v0)`.
    pub v_max_factor: f64,
}

impl Default for PdeGrid {
    fn default() -> Self {
        Self {
            nx_inside: 160,
            nv: 64,
            steps_per_day: 2,
            v_max_factor: 12.0,
        }
    }
}

impl PdeGrid {
    pub fn validate(&self) -> Result<()> {
        if self.nx_inside < 8 || self.nv < 8 || self.steps_per_day == 0 {
            return Err(Error::invalid("pde", "grid too coarse (nx_inside, nv >= 8; steps_per_day >= 1)"));
        }
        if !(self.v_max_factor > 1.0) {
            return Err(Error::invalid("pde.v_max_factor", "must exceed 1"));
        }
        Ok(())
    }
}

/// Values of one leg on the grid for every simulation day up to expiry.
#[derive(Debug)]
struct ValueTable {
    xs: Vec<f64>,
    vs: Vec<f64>,
    /// `days[k][j * nx + i]` at time `k / 365`.
    days: Vec<Vec<f64>>,
}

/// Four-point Lagrange weights for `x` on `nodes`, starting index included.
fn lagrange4(nodes: &[f64], x: f64) -> (usize, [f64; 4]) {
    let n = nodes.len();
    let j = nodes.partition_point(|&v| v <= x).clamp(2, n - 2) - 2;
    let p = &nodes[j..j + 4];
    let mut w = [1.0; 4];
    for a in 0..4 {
        for b in 0..4 {
            if a != b {
                w[a] *= (x - p[b]) / (p[a] - p[b]);
            }
        }
    }
    (j, w)
}

impl ValueTable {
    fn value(&self, day: usize, x: f64, v: f64) -> f64 {
        let nx = self.xs.len();
        if x < self.xs[0] || x > self.xs[nx - 1] {
            return 0.0;
        }
        let v = v.clamp(0.0, self.vs[self.vs.len() - 1]);
        let u = &self.days[day];
        let (i0, wx) = lagrange4(&self.xs, x);
        let (j0, wv) = lagrange4(&self.vs, v);
        let mut acc = 0.0;
        for (b, &wb) in wv.iter().enumerate() {
            let row = (j0 + b) * nx;
            let mut line = 0.0;
            for (a, &wa) in wx.iter().enumerate() {
                line += wa * u[row + i0 + a];
            }
            acc += wb * line;
        }
        acc
    }
}

/// Central-difference weights on a non-uniform grid at interior node `j`.
fn stencil(nodes: &[f64], j: usize) -> ([f64; 3], [f64; 3]) {
    let hm = nodes[j] - nodes[j - 1];
    let hp = nodes[j + 1] - nodes[j];
    let d1 = [
        -hp / (hm * (hm + hp)),
        (hp - hm) / (hm * hp),
        hm / (hp * (hm + hp)),
    ];
    let d2 = [
        2.0 / (hm * (hm + hp)),
        -2.0 / (hm * hp),
        2.0 / (hp * (hm + hp)),
    ];
    (d1, d2)
}

/// Thomas algorithm; `a` sub, `b` diagonal, `c` super-diagonal.
fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64], scratch: &mut [f64]) {
    let n = d.len();
    scratch[0] = c[0] / b[0];
    d[0] /= b[0];
    for i in 1..n {
        let m = b[i] - a[i] * scratch[i - 1];
        scratch[i] = c[i] / m;
        d[i] = (d[i] - a[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        d[i] -= scratch[i] * d[i + 1];
    }
}

struct Operators {
    nx: usize,
    nv: usize,
    dx: f64,
    vs: Vec<f64>,
    d1v: Vec<[f64; 3]>,
    d2v: Vec<[f64; 3]>,
    p: HestonParams,
}

impl Operators {
    /// `(A0 u, A1 u, A2 u)`: mixed, log-spot and variance parts; the
    /// discounting is split evenly between A1 and A2.
    fn apply(&self, u: &[f64], rd: f64, rf: f64, out: &mut [Vec<f64>; 3]) {
        let (nx, nv, dx) = (self.nx, self.nv, self.dx);
        let p = &self.p;
        for o in out.iter_mut() {
            o.iter_mut().for_each(|x| *x = 0.0);
        }
        for j in 0..nv {
            let v = self.vs[j];
            for i in 1..nx - 1 {
                let k = j * nx + i;
                let ux = (u[k + 1] - u[k - 1]) / (2.0 * dx);
                let uxx = (u[k + 1] - 2.0 * u[k] + u[k - 1]) / (dx * dx);
                out[1][k] = 0.5 * v * uxx + (rd - rf - 0.5 * v) * ux - 0.5 * rd * u[k];
                if j == 0 {
                    let uv = (u[k + nx] - u[k]) / (self.vs[1] - self.vs[0]);
                    out[2][k] = p.kappa * p.theta * uv - 0.5 * rd * u[k];
                } else if j == nv - 1 {
                    let h = self.vs[j] - self.vs[j - 1];
                    let uvv = 2.0 * (u[k - nx] - u[k]) / (h * h);
                    out[2][k] = 0.5 * p.eta * p.eta * v * uvv - 0.5 * rd * u[k];
                } else {
                    let (d1, d2) = (&self.d1v[j], &self.d2v[j]);
                    let uv = d1[0] * u[k - nx] + d1[1] * u[k] + d1[2] * u[k + nx];
                    let uvv = d2[0] * u[k - nx] + d2[1] * u[k] + d2[2] * u[k + nx];
                    out[2][k] = 0.5 * p.eta * p.eta * v * uvv
                        + p.kappa * (p.theta - v) * uv
                        - 0.5 * rd * u[k];
                    let d1 = &self.d1v[j];
                    let mut uxv = 0.0;
                    for (b, off) in [(0usize, -1isize), (1, 0), (2, 1)] {
                        let r = (k as isize + off * nx as isize) as usize;
                        uxv += d1[b] * (u[r + 1] - u[r - 1]) / (2.0 * dx);
                    }
                    out[0][k] = p.rho * p.eta * v * uxv;
                }
            }
        }
    }

    /// One Douglas step of size `dt` with implicitness `theta`. Boundary
    /// columns in x stay at their current values.
    fn douglas(&self, u: &mut [f64], dt: f64, theta: f64, rd: f64, rf: f64, work: &mut Work) {
        let (nx, nv, dx) = (self.nx, self.nv, self.dx);
        self.apply(u, rd, rf, &mut work.a);
        let y = &mut work.y;
        for k in 0..u.len() {
            y[k] = u[k] + dt * (work.a[0][k] + work.a[1][k] + work.a[2][k]);
        }
        // x sweeps
        for j in 0..nv {
            let v = self.vs[j];
            let n = nx - 2;
            let diff = 0.5 * v / (dx * dx);
            let conv = (rd - rf - 0.5 * v) / (2.0 * dx);
            for m in 0..n {
                let k = j * nx + m + 1;
                work.la[m] = -theta * dt * (diff - conv);
                work.lb[m] = 1.0 + theta * dt * (2.0 * diff + 0.5 * rd);
                work.lc[m] = -theta * dt * (diff + conv);
                work.rhs[m] = y[k] - theta * dt * work.a[1][k];
            }
            // Dirichlet neighbours
            work.rhs[0] -= work.la[0] * u[j * nx];
            work.rhs[n - 1] -= work.lc[n - 1] * u[j * nx + nx - 1];
            work.la[0] = 0.0;
            work.lc[n - 1] = 0.0;
            solve_tridiagonal(&work.la[..n], &work.lb[..n], &work.lc[..n], &mut work.rhs[..n], &mut work.scratch);
            for m in 0..n {
                y[j * nx + m + 1] = work.rhs[m];
            }
        }
        // v sweeps
        let p = &self.p;
        for i in 1..nx - 1 {
            for j in 0..nv {
                let k = j * nx + i;
                let v = self.vs[j];
                let (a, b, c) = if j == 0 {
                    let h = self.vs[1] - self.vs[0];
                    let w = p.kappa * p.theta / h;
                    (0.0, -w - 0.5 * rd, w)
                } else if j == nv - 1 {
                    let h = self.vs[j] - self.vs[j - 1];
                    let w = p.eta * p.eta * v / (h * h);
                    (w, -w - 0.5 * rd, 0.0)
                } else {
                    let (d1, d2) = (&self.d1v[j], &self.d2v[j]);
                    let diff = 0.5 * p.eta * p.eta * v;
                    let drift = p.kappa * (p.theta - v);
                    (
                        diff * d2[0] + drift * d1[0],
                        diff * d2[1] + drift * d1[1] - 0.5 * rd,
                        diff * d2[2] + drift * d1[2],
                    )
                };
                work.va[j] = -theta * dt * a;
                work.vb[j] = 1.0 - theta * dt * b;
                work.vc[j] = -theta * dt * c;
                work.vrhs[j] = y[k] - theta * dt * work.a[2][k];
            }
            solve_tridiagonal(&work.va, &work.vb, &work.vc, &mut work.vrhs, &mut work.scratch);
            for j in 0..nv {
                u[j * nx + i] = work.vrhs[j];
            }
        }
    }
}

struct Work {
    a: [Vec<f64>; 3],
    y: Vec<f64>,
    la: Vec<f64>,
    lb: Vec<f64>,
    lc: Vec<f64>,
    rhs: Vec<f64>,
    va: Vec<f64>,
    vb: Vec<f64>,
    vc: Vec<f64>,
    vrhs: Vec<f64>,
    scratch: Vec<f64>,
}

impl Work {
    fn new(nx: usize, nv: usize) -> Self {
        let n = nx * nv;
        Self {
            a: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            y: vec![0.0; n],
            la: vec![0.0; nx],
            lb: vec![0.0; nx],
            lc: vec![0.0; nx],
            rhs: vec![0.0; nx],
            va: vec![0.0; nv],
            vb: vec![0.0; nv],
            vc: vec![0.0; nv],
            vrhs: vec![0.0; nv],
            scratch: vec![0.0; nx.max(nv)],
        }
    }
}

/// Variance nodes clustered near zero: `v = d sinh(ξ)`.
fn variance_nodes(nv: usize, v_max: f64) -> Vec<f64> {
    let d = v_max / 40.0;
    let top = (v_max / d).asinh();
    (0..nv)
        .map(|j| d * (top * j as f64 / (nv - 1) as f64).sinh())
        .collect()
}

/// Solves the double-no-touch backwards from its expiry to day 0.
fn solve_dnt(
    dnt: &DoubleNoTouch,
    params: &HestonParams,
    curves: &Curves,
    monitoring: BarrierMonitoring,
    grid: &PdeGrid,
) -> Result<ValueTable> {
    let (lo, hi) = (dnt.lower.ln(), dnt.upper.ln());
    let dx = (hi - lo) / grid.nx_inside as f64;
    let v_max = grid.v_max_factor * params.theta.max(params.v0).max(1e-4);
    let ext = match monitoring {
        BarrierMonitoring::BrownianBridge => 0,
        BarrierMonitoring::Daily => ((4.0 * (v_max / DAYS_PER_YEAR).sqrt()) / dx).ceil() as usize,
    };
    let nx = grid.nx_inside + 1 + 2 * ext;
    let xs: Vec<f64> = (0..nx)
        .map(|i| lo + (i as f64 - ext as f64) * dx)
        .collect();
    let vs = variance_nodes(grid.nv, v_max);
    let nv = vs.len();
    let mut d1v = vec![[0.0; 3]; nv];
    let mut d2v = vec![[0.0; 3]; nv];
    for j in 1..nv - 1 {
        (d1v[j], d2v[j]) = stencil(&vs, j);
    }
    let ops = Operators {
        nx,
        nv,
        dx,
        vs: vs.clone(),
        d1v,
        d2v,
        p: *params,
    };
    let inside = |i: usize| i > ext && i < ext + grid.nx_inside;
    let expiry_day = (dnt.expiry * DAYS_PER_YEAR).round() as usize;
    let mut u = vec![0.0; nx * nv];
    for j in 0..nv {
        for i in 0..nx {
            if inside(i) || (ext > 0 && i > 0 && i < nx - 1) {
                u[j * nx + i] = dnt.notional;
            }
        }
    }
    let mut days = vec![Vec::new(); expiry_day + 1];
    days[expiry_day] = u.clone();
    let mut work = Work::new(nx, nv);
    let sub = grid.steps_per_day;
    for day in (0..expiry_day).rev() {
        // knock-out on the later date, then roll back one day
        for j in 0..nv {
            for i in 0..nx {
                if !inside(i) {
                    u[j * nx + i] = 0.0;
                }
            }
        }
        let t_end = (day + 1) as f64 / DAYS_PER_YEAR;
        let dt = 1.0 / (DAYS_PER_YEAR * sub as f64);
        let damped = monitoring == BarrierMonitoring::Daily || day + 1 == expiry_day;
        for s in 0..sub {
            let t_mid = t_end - (s as f64 + 0.5) * dt;
            let rd = curves.domestic.rate_at(t_mid);
            let rf = curves.foreign.rate_at(t_mid);
            if damped && s == 0 {
                // two half steps of the implicit variant smooth the kink
                ops.douglas(&mut u, 0.5 * dt, 1.0, rd, rf, &mut work);
                ops.douglas(&mut u, 0.5 * dt, 1.0, rd, rf, &mut work);
            } else {
                ops.douglas(&mut u, dt, 0.5, rd, rf, &mut work);
            }
        }
        days[day] = u.clone();
    }
    Ok(ValueTable { xs, vs, days })
}

enum LegModel {
    Table(ValueTable),
    Vanilla,
}

/// Heston prices for the legs of one portfolio on the daily grid.
pub struct HestonPdePricer {
    params: HestonParams,
    curves: Curves,
    portfolio: Portfolio,
    legs: Arc<Vec<LegModel>>,
}

impl std::fmt::Debug for HestonPdePricer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HestonPdePricer")
            .field("params", &self.params)
            .field("legs", &self.portfolio.legs.len())
            .finish()
    }
}

impl HestonPdePricer {
    /// `portfolio` must already be snapped to the daily grid starting at 0.
    pub fn new(
        params: &HestonParams,
        curves: &Curves,
        portfolio: &Portfolio,
        monitoring: BarrierMonitoring,
        grid: &PdeGrid,
    ) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        portfolio.validate()?;
        let mut legs = Vec::with_capacity(portfolio.legs.len());
        for leg in &portfolio.legs {
            legs.push(match leg {
                Product::DoubleNoTouch(d) => {
                    LegModel::Table(solve_dnt(d, params, curves, monitoring, grid)?)
                }
                Product::Vanilla(_) => LegModel::Vanilla,
                Product::Fader(_) => {
                    return Err(Error::Unsupported(
                        "the Heston pricer values double-no-touch and vanilla legs only".into(),
                    ))
                }
            });
        }
        Ok(Self {
            params: *params,
            curves: curves.clone(),
            portfolio: portfolio.clone(),
            legs: Arc::new(legs),
        })
    }
}

impl ModelPricer for HestonPdePricer {
    fn name(&self) -> &'static str {
        "heston_mc"
    }

    fn needs_surface(&self) -> bool {
        false
    }

    fn price(&self, portfolio: &Portfolio, state: &LifecycleState, snap: &Snapshot) -> Result<f64> {
        if portfolio.legs.len() != self.portfolio.legs.len() {
            return Err(Error::invalid("portfolio", "differs from the one the Heston pricer was built for"));
        }
        let day_f = snap.time * DAYS_PER_YEAR;
        let day = day_f.round();
        let mut total = 0.0;
        for ((leg, st), model) in portfolio.legs.iter().zip(&state.legs).zip(self.legs.iter()) {
            let tau = leg.expiry() - snap.time;
            if st.settled || tau <= 1e-12 {
                continue;
            }
            match (leg, model) {
                (Product::DoubleNoTouch(d), LegModel::Table(table)) => {
                    if st.knocked {
                        continue;
                    }
                    if (day_f - day).abs() > 1e-6 || day as usize >= table.days.len() {
                        return Err(Error::invalid("snapshot.time", "Heston barrier values exist on simulation days only"));
                    }
                    let v = table.value(day as usize, snap.spot.ln(), snap.variance);
                    total += d.position.sign() * v;
                }
                (Product::Vanilla(v), _) => {
                    let (df_dom, df_for) = self.curves.discounts(snap.time, tau);
                    let forward = snap.spot * df_for / df_dom;
                    let p = self.params.with_state(snap.spot, snap.variance);
                    let premium = HestonSlice::new(&p, tau)?
                        .with_tolerance(crate::hedging::VANILLA_TOLERANCE)
                        .price(forward, v.strike, df_dom, v.kind)?;
                    total += v.position.sign() * v.notional * premium;
                }
                _ => return Err(Error::Unsupported("leg without a Heston model".into())),
            }
        }
        Ok(total)
    }
}

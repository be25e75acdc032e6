//! Expected shortfall of a hedging P&L sample and the running tail bands.
//!
//! All estimators work on the empirical distribution with equal weights.
//! The quantile is the upper one, `x_α = sup{x : P[X < x] ≤ α}`, and the
//! shortfall carries the atom correction
//! `ρ = −(E[X·1{X ≤ x_α}] − x_α·(P[X ≤ x_α] − α)) / α`,
//! which makes it the mean of the worst `α` fraction of outcomes with the
//! boundary atom counted fractionally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(sample: &[f64], alpha: f64) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::invalid("sample", "must not be empty"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", "must lie in (0, 1)"));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("sample", "contains non-finite values"));
    }
    Ok(())
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Index of the upper `α`-quantile in the sorted sample.
fn quantile_index(n: usize, alpha: f64) -> usize {
    ((n as f64 * alpha).floor() as usize).min(n - 1)
}

pub fn quantile(sample: &[f64], alpha: f64) -> Result<f64> {
    check(sample, alpha)?;
    let s = sorted(sample);
    Ok(s[quantile_index(s.len(), alpha)])
}

fn shortfall_sorted(s: &[f64], alpha: f64) -> f64 {
    let n = s.len() as f64;
    let x = s[quantile_index(s.len(), alpha)];
    let at_or_below = s.partition_point(|&v| v <= x);
    // same expression regrouped around x so a constant sample is exact
    let excess: f64 = s[..at_or_below].iter().map(|v| v - x).sum();
    -x - excess / (n * alpha)
}

/// Expected shortfall at significance `alpha`, reported as a positive loss.
pub fn expected_shortfall(sample: &[f64], alpha: f64) -> Result<f64> {
    check(sample, alpha)?;
    Ok(shortfall_sorted(&sorted(sample), alpha))
}

/// Per-date tail means of a set of P&L paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bands {
    /// Mean of the best `α` fraction.
    pub upper: Vec<f64>,
    pub mean: Vec<f64>,
    /// Mean of the worst `α` fraction: the negated shortfall.
    pub lower: Vec<f64>,
}

impl Bands {
    pub fn to_csv(&self, dates: &[f64]) -> String {
        let mut out = String::from("date,upper,mean,lower\n");
        for (i, d) in dates.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", d, self.upper[i], self.mean[i], self.lower[i]));
        }
        out
    }
}

/// `paths[p][t]`: P&L of path `p` at date `t`; every path has the same length.
pub fn confidence_bands(paths: &[Vec<f64>], alpha: f64) -> Result<Bands> {
    if paths.is_empty() {
        return Err(Error::invalid("paths", "must not be empty"));
    }
    let len = paths[0].len();
    if paths.iter().any(|p| p.len() != len) {
        return Err(Error::invalid("paths", "all paths need the same number of dates"));
    }
    let mut bands = Bands {
        upper: Vec::with_capacity(len),
        mean: Vec::with_capacity(len),
        lower: Vec::with_capacity(len),
    };
    let mut column = vec![0.0; paths.len()];
    for t in 0..len {
        for (c, p) in column.iter_mut().zip(paths) {
            *c = p[t];
        }
        check(&column, alpha)?;
        let s = sorted(&column);
        let negated: Vec<f64> = s.iter().rev().map(|x| -x).collect();
        bands.lower.push(-shortfall_sorted(&s, alpha));
        bands.upper.push(shortfall_sorted(&negated, alpha));
        bands.mean.push(column.iter().sum::<f64>() / column.len() as f64);
    }
    Ok(bands)
}

/// Mean and standard error of a sample.
pub fn mean_and_error(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    if sample.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = sample.iter().sum::<f64>() / n;
    if sample.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One pricer's column of the study summary. Prices are quoted as the
/// value of the contracts to the counterparty (positive for a sold DNT).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryColumn {
    pub pricer: String,
    /// `P₀`: model price at inception.
    pub initial_price: f64,
    /// Mean discounted terminal hedging loss.
    pub hedging_cost: f64,
    pub hedging_cost_error: f64,
    /// Market-model price of the same contracts.
    pub reference_price: f64,
    pub reference_error: f64,
    /// Expected shortfall of the discounted terminal P&L.
    pub model_risk: f64,
    pub alpha: f64,
    pub paths: usize,
    pub failed_paths: usize,
}

impl SummaryColumn {
    /// Builds the column from the discounted terminal P&L of every path.
    #[allow(clippy::too_many_arguments)]
    pub fn from_terminal(
        pricer: &str,
        initial_value: f64,
        discounted_terminal: &[f64],
        reference_value: f64,
        reference_error: f64,
        alpha: f64,
        failed_paths: usize,
    ) -> Result<Self> {
        let (mean, se) = mean_and_error(discounted_terminal);
        Ok(Self {
            pricer: pricer.to_string(),
            initial_price: -initial_value,
            hedging_cost: -mean,
            hedging_cost_error: se,
            reference_price: -reference_value,
            reference_error,
            model_risk: expected_shortfall(discounted_terminal, alpha)?,
            alpha,
            paths: discounted_terminal.len(),
            failed_paths,
        })
    }

    /// `P₀ + EHC`, which should match the reference price.
    pub fn implied_market_price(&self) -> f64 {
        self.initial_price + self.hedging_cost
    }

    /// `P₀ + ρ`.
    pub fn final_price(&self) -> f64 {
        self.initial_price + self.model_risk
    }
}

const ROWS: [&str; 6] = [
    "initial_price",
    "expected_hedging_cost",
    "initial_plus_cost",
    "reference_price",
    "model_risk",
    "final_price",
];

fn row_values(c: &SummaryColumn) -> [f64; 6] {
    [
        c.initial_price,
        c.hedging_cost,
        c.implied_market_price(),
        c.reference_price,
        c.model_risk,
        c.final_price(),
    ]
}

/// Quantities down, pricers across.
pub fn summary_table(columns: &[SummaryColumn]) -> String {
    let mut out = String::from("quantity");
    for c in columns {
        out.push(',');
        out.push_str(&c.pricer);
    }
    out.push('\n');
    for (r, name) in ROWS.iter().enumerate() {
        out.push_str(name);
        for c in columns {
            out.push_str(&format!(",{}", row_values(c)[r]));
        }
        out.push('\n');
    }
    for (name, f) in [
        ("hedging_cost_error", (|c: &SummaryColumn| c.hedging_cost_error) as fn(&SummaryColumn) -> f64),
        ("reference_error", |c| c.reference_error),
        ("alpha", |c| c.alpha),
        ("paths", |c| c.paths as f64),
        ("failed_paths", |c| c.failed_paths as f64),
    ] {
        out.push_str(name);
        for c in columns {
            out.push_str(&format!(",{}", f(c)));
        }
        out.push('\n');
    }
    out
}

/// The same table aligned for a terminal.
pub fn summary_text(columns: &[SummaryColumn]) -> String {
    let mut out = format!("{:<24}", "");
    for c in columns {
        out.push_str(&format!("{:>14}", c.pricer));
    }
    out.push('\n');
    for (r, name) in ROWS.iter().enumerate() {
        out.push_str(&format!("{name:<24}"));
        for c in columns {
            out.push_str(&format!("{:>14.4}", row_values(c)[r]));
        }
        out.push('\n');
    }
    out
}

//! Client side of a study: path generation, dispatch and aggregation.

use serde::Serialize;

use super::pool::WorkerPool;
use super::protocol::{RequestMsg, ResultMsg, StudySpec};
use crate::error::{Error, Result};
use crate::market::{daily_grid, simulate_paths_range, to_days};
use crate::pricers::{heston_mc_price, McEstimate};
use crate::products::Portfolio;
use crate::rates::Curves;
use crate::risk::{confidence_bands, Bands, SummaryColumn};

/// Daily dates from zero through the last expiry of `portfolio`.
pub fn study_dates(portfolio: &Portfolio) -> Vec<f64> {
    daily_grid(to_days(portfolio.expiry()).max(1))
}

pub fn validate_study(spec: &StudySpec, portfolio: &Portfolio) -> Result<()> {
    spec.params.validate()?;
    spec.curves.validate()?;
    spec.hedge.validate()?;
    spec.vv.validate()?;
    spec.pde.validate()?;
    portfolio.validate()
}

/// Requests for paths `ids`, simulated here from the study seed.
pub fn build_requests(
    spec: &StudySpec,
    portfolio: &Portfolio,
    ids: std::ops::Range<u64>,
) -> Result<(Vec<f64>, Vec<RequestMsg>)> {
    validate_study(spec, portfolio)?;
    let dates = study_dates(portfolio);
    let snapped = portfolio.snapped(&dates)?;
    let paths = simulate_paths_range(&spec.params, &spec.curves, &dates, ids, spec.seed)?;
    let requests = paths.iter().map(|p| RequestMsg::new(p, &snapped, spec)).collect();
    Ok((dates, requests))
}

/// Every path's result, sorted by path id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResults {
    pub dates: Vec<f64>,
    pub results: Vec<ResultMsg>,
}

pub fn run_study(spec: &StudySpec, portfolio: &Portfolio, n_paths: usize, pool: &WorkerPool) -> Result<StudyResults> {
    validate_study(spec, portfolio)?;
    if n_paths == 0 {
        return Ok(StudyResults {
            dates: study_dates(portfolio),
            results: Vec::new(),
        });
    }
    let (dates, requests) = build_requests(spec, portfolio, 0..n_paths as u64)?;
    let results = pool.run(&requests)?;
    Ok(StudyResults { dates, results })
}

impl StudyResults {
    /// The result set without worker identities, as JSON bytes. Equal for
    /// any worker count, transport or completion order.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut stripped = self.clone();
        for r in &mut stripped.results {
            r.worker.clear();
        }
        serde_json::to_vec(&stripped).expect("results serialize")
    }

    pub fn ok(&self) -> impl Iterator<Item = &ResultMsg> {
        self.results.iter().filter(|r| r.is_ok())
    }

    /// Paths that failed, with the reason.
    pub fn flagged(&self) -> Vec<(u64, String)> {
        self.results
            .iter()
            .filter_map(|r| match &r.status {
                super::protocol::Status::Error { message } => Some((r.path_id, message.clone())),
                super::protocol::Status::Ok => None,
            })
            .collect()
    }

    /// `Π^Tot` through time, one vector per successful path.
    pub fn totals(&self) -> Vec<Vec<f64>> {
        self.ok().map(|r| r.rows.iter().map(|x| x.total).collect()).collect()
    }

    pub fn discounted_terminal(&self, curves: &Curves) -> Vec<f64> {
        self.ok()
            .map(|r| {
                let (first, last) = (&r.rows[0], &r.rows[r.rows.len() - 1]);
                last.total * curves.domestic.discount(first.time, last.time)
            })
            .collect()
    }

    /// Model value of the portfolio at inception (the same on every path).
    pub fn initial_value(&self) -> Option<f64> {
        self.ok().next().map(|r| r.rows[0].price)
    }
}

/// Market-model price of the portfolio with the study's barrier monitoring.
pub fn reference_price(spec: &StudySpec, portfolio: &Portfolio, n_paths: u64, seed: u64) -> Result<McEstimate> {
    heston_mc_price(
        portfolio,
        &spec.params,
        &spec.curves,
        0.0,
        n_paths,
        seed,
        spec.hedge.monitoring,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub summary: SummaryColumn,
    pub bands: Bands,
}

pub fn study_report(results: &StudyResults, spec: &StudySpec, alpha: f64, reference: &McEstimate) -> Result<StudyReport> {
    let initial = results
        .initial_value()
        .ok_or_else(|| Error::invalid("results", "no path completed"))?;
    let terminal = results.discounted_terminal(&spec.curves);
    let summary = SummaryColumn::from_terminal(
        spec.pricer.label(),
        initial,
        &terminal,
        reference.price,
        reference.std_error,
        alpha,
        results.flagged().len(),
    )?;
    let bands = confidence_bands(&results.totals(), alpha)?;
    Ok(StudyReport { summary, bands })
}

//! Study configuration files.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use hedgesim::grid::StudySpec;
use hedgesim::hedging::{HedgeSpec, VarthetaMode};
use hedgesim::market::HestonParams;
use hedgesim::pricers::{BarrierMonitoring, PdeGrid, PricerKind, VvPricer};
use hedgesim::products::{HedgeVanilla, Portfolio};
use hedgesim::rates::Curves;
use hedgesim::surface::SurfaceSpec;
use hedgesim::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    Inproc,
    Subprocess,
    Tcp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportConfig {
    pub kind: TransportKind,
    pub workers: usize,
    /// Worker addresses for TCP. Empty means local workers are started.
    pub addresses: Vec<String>,
    pub max_attempts: usize,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            kind: TransportKind::Inproc,
            workers: 1,
            addresses: Vec::new(),
            max_attempts: 3,
        }
    }
}

fn default_curves() -> Curves {
    Curves::zero()
}

fn default_surface() -> SurfaceSpec {
    HedgeSpec::default().surface
}

fn yes() -> bool {
    true
}

fn default_reference_paths() -> u64 {
    100_000
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Heston parameters with the initial state `(v0, s0)`.
    pub params: HestonParams,
    #[serde(default = "default_curves")]
    pub curves: Curves,
    #[serde(default = "default_surface")]
    pub surface: SurfaceSpec,
    pub portfolio: Portfolio,
    pub pricer: PricerKind,
    #[serde(default)]
    pub vv: VvPricer,
    #[serde(default)]
    pub pde: PdeGrid,
    #[serde(default)]
    pub hedge_vanilla: HedgeVanilla,
    #[serde(default = "yes")]
    pub hedged: bool,
    #[serde(default)]
    pub vartheta_mode: VarthetaMode,
    #[serde(default)]
    pub monitoring: BarrierMonitoring,
    pub n_paths: usize,
    pub seed: u64,
    /// Significance level of the expected shortfall.
    pub alpha: f64,
    /// Paths of the market-model price estimate.
    #[serde(default = "default_reference_paths")]
    pub reference_paths: u64,
    #[serde(default)]
    pub reference_seed: u64,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

/// Renames library field prefixes to the config keys that set them.
fn config_field(field: &str) -> String {
    if let Some(rest) = field.strip_prefix("heston.") {
        return format!("params.{rest}");
    }
    field.to_string()
}

fn invalid(e: Error) -> anyhow::Error {
    match e {
        Error::InvalidInput { field, reason } => anyhow!("invalid config field `{}`: {reason}", config_field(&field)),
        other => anyhow!("invalid config: {other}"),
    }
}

impl StudyConfig {
    /// Parses a config, or the `config` member of a run manifest.
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).context("config is not valid JSON")?;
        let value = match value.get("manifest_version") {
            Some(_) => value.get("config").cloned().ok_or_else(|| anyhow!("manifest has no `config`"))?,
            None => value,
        };
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            anyhow!("invalid config field `{path}`: {}", e.into_inner())
        })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn hedge_spec(&self) -> HedgeSpec {
        HedgeSpec {
            hedge: self.hedge_vanilla,
            monitoring: self.monitoring,
            hedged: self.hedged,
            vartheta_mode: self.vartheta_mode,
            surface: self.surface.clone(),
        }
    }

    pub fn study_spec(&self, full_ledger: bool) -> StudySpec {
        StudySpec {
            pricer: self.pricer,
            vv: self.vv,
            pde: self.pde,
            params: self.params,
            curves: self.curves.clone(),
            hedge: self.hedge_spec(),
            seed: self.seed,
            full_ledger,
        }
    }

    /// Checks every invariant before any computation.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.params.validate().map_err(invalid)?;
        self.curves.validate().map_err(invalid)?;
        self.surface.validate().map_err(invalid)?;
        self.portfolio.validate().map_err(invalid)?;
        self.vv.validate().map_err(invalid)?;
        self.pde.validate().map_err(invalid)?;
        self.hedge_spec().validate().map_err(invalid)?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("invalid config field `alpha`: must lie in (0, 1)");
        }
        if self.n_paths == 0 {
            bail!("invalid config field `n_paths`: must be >= 1");
        }
        if self.reference_paths < 1000 {
            bail!("invalid config field `reference_paths`: must be >= 1000");
        }
        if self.transport.workers == 0 {
            bail!("invalid config field `transport.workers`: must be >= 1");
        }
        if self.transport.max_attempts == 0 {
            bail!("invalid config field `transport.max_attempts`: must be >= 1");
        }
        for (i, a) in self.transport.addresses.iter().enumerate() {
            if a.parse::<std::net::SocketAddr>().is_err() {
                bail!("invalid config field `transport.addresses[{i}]`: {a:?} is not host:port");
            }
        }
        Ok(())
    }
}

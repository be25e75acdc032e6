//! Pricing models that can sit under the hedger: Black-Scholes at the ATM
//! vol, the vanna-volga smile correction and Heston itself.

pub mod bs;
pub mod fader;
pub mod heston_mc;
pub mod heston_pde;
pub mod vv;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::products::{LifecycleState, Portfolio};
use crate::rates::Curves;
use crate::surface::{Bucket, VolSurface};

pub use bs::BsPricer;
pub use fader::{bs_fader_mc_price, bs_fader_price, KoMonitoring};
pub use heston_mc::{bridge_survival, heston_mc_price, BarrierMonitoring, McEstimate};
pub use heston_pde::{HestonPdePricer, PdeGrid};
pub use vv::{vv_weights, Greeks, VvPricer};

/// Market state a pricer sees on one date of one path.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub time: f64,
    pub spot: f64,
    pub variance: f64,
    /// Delta-quoted surface generated by the state; only its vols are read.
    pub surface: Option<&'a VolSurface>,
    pub curves: &'a Curves,
}

impl<'a> Snapshot<'a> {
    pub fn surface(&self) -> Result<&'a VolSurface> {
        self.surface
            .ok_or_else(|| Error::invalid("snapshot.surface", "this pricer needs a volatility surface"))
    }
}

/// A model that values the hedged portfolio from a market snapshot.
pub trait ModelPricer: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether `price` reads the snapshot surface.
    fn needs_surface(&self) -> bool {
        true
    }

    /// Buckets the pricer reads, when fewer than the configured grid
    /// suffice. Node vols do not depend on which other buckets are built.
    fn surface_buckets(&self) -> Option<Vec<Bucket>> {
        None
    }

    fn price(&self, portfolio: &Portfolio, state: &LifecycleState, snap: &Snapshot) -> Result<f64>;
}

/// Pricer names accepted in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricerKind {
    Bs,
    Vv,
    #[serde(alias = "heston")]
    HestonMc,
}

impl PricerKind {
    pub fn label(self) -> &'static str {
        match self {
            PricerKind::Bs => "bs",
            PricerKind::Vv => "vv",
            PricerKind::HestonMc => "heston_mc",
        }
    }
}

impl std::str::FromStr for PricerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bs" => Ok(PricerKind::Bs),
            "vv" => Ok(PricerKind::Vv),
            "heston" | "heston_mc" => Ok(PricerKind::HestonMc),
            other => Err(Error::invalid(
                "pricer",
                format!("unknown pricer {other:?}; expected bs, vv or heston_mc"),
            )),
        }
    }
}

//! Request and result messages and their length-prefixed JSON frames.
//!
//! A frame is a 4-byte big-endian body length followed by a UTF-8 JSON
//! object. Floats are written in shortest round-trip decimal form and read
//! back with correct rounding, so every numeric field survives bit for bit.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::hedging::{HedgeLedger, HedgeSpec};
use crate::market::{HestonParams, PathGrid};
use crate::pricers::{PdeGrid, PricerKind, VvPricer};
use crate::products::Portfolio;
use crate::rates::Curves;

pub const PROTOCOL_VERSION: u32 = 1;
/// Largest accepted body, in bytes.
pub const MAX_FRAME: usize = 1 << 28;

/// Everything a worker needs besides the path and the portfolio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub pricer: PricerKind,
    #[serde(default)]
    pub vv: VvPricer,
    #[serde(default)]
    pub pde: PdeGrid,
    pub params: HestonParams,
    pub curves: Curves,
    #[serde(default)]
    pub hedge: HedgeSpec,
    pub seed: u64,
    /// Ship the complete hedge ledger back with each result.
    #[serde(default)]
    pub full_ledger: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestMsg {
    pub version: u32,
    pub path_id: u64,
    pub dates: Vec<f64>,
    pub spots: Vec<f64>,
    pub variances: Vec<f64>,
    /// Already snapped to `dates`.
    pub portfolio: Portfolio,
    pub study: StudySpec,
}

impl RequestMsg {
    pub fn new(path: &PathGrid, portfolio: &Portfolio, study: &StudySpec) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            path_id: path.path_id,
            dates: path.dates.clone(),
            spots: path.spots.clone(),
            variances: path.variances.clone(),
            portfolio: portfolio.clone(),
            study: study.clone(),
        }
    }

    pub fn path(&self) -> PathGrid {
        PathGrid {
            path_id: self.path_id,
            dates: self.dates.clone(),
            spots: self.spots.clone(),
            variances: self.variances.clone(),
        }
    }
}

/// `(Π^Tot, Π, Δ, ϑ)` and the events of one date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRow {
    pub time: f64,
    pub total: f64,
    pub price: f64,
    pub delta: f64,
    pub vartheta: f64,
    pub events: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Status {
    Ok,
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultMsg {
    pub version: u32,
    pub path_id: u64,
    pub worker: String,
    pub status: Status,
    pub rows: Vec<ResultRow>,
    #[serde(default)]
    pub ledger: Option<HedgeLedger>,
}

impl ResultMsg {
    pub fn ok(path_id: u64, worker: &str, ledger: HedgeLedger, keep_ledger: bool) -> Self {
        let rows = ledger
            .rows
            .iter()
            .map(|r| ResultRow {
                time: r.time,
                total: r.total,
                price: r.price,
                delta: r.delta,
                vartheta: r.vartheta,
                events: r.events.clone(),
            })
            .collect();
        Self {
            version: PROTOCOL_VERSION,
            path_id,
            worker: worker.to_string(),
            status: Status::Ok,
            rows,
            ledger: keep_ledger.then_some(ledger),
        }
    }

    pub fn error(path_id: u64, worker: &str, message: impl Into<String>) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            path_id,
            worker: worker.to_string(),
            status: Status::Error {
                message: message.into(),
            },
            rows: Vec::new(),
            ledger: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

/// Serializes `msg` into a complete frame.
pub fn encode<T: Serialize>(msg: &T) -> Result<Vec<u8>> {
    let body = serde_json::to_vec(msg).map_err(|e| Error::Protocol {
        offset: 0,
        message: format!("cannot encode: {e}"),
    })?;
    if body.len() > MAX_FRAME {
        return Err(Error::Protocol {
            offset: 0,
            message: format!("body of {} bytes exceeds the frame limit", body.len()),
        });
    }
    let mut frame = Vec::with_capacity(body.len() + 4);
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(&body);
    Ok(frame)
}

fn protocol(offset: usize, message: impl Into<String>) -> Error {
    Error::Protocol {
        offset,
        message: message.into(),
    }
}

/// Byte offset of a serde_json error position inside `body`.
fn json_offset(body: &[u8], e: &serde_json::Error) -> usize {
    let (line, column) = (e.line(), e.column());
    if line == 0 {
        return 0;
    }
    let mut start = 0;
    for _ in 1..line {
        match body[start..].iter().position(|&b| b == b'\n') {
            Some(p) => start += p + 1,
            None => break,
        }
    }
    (start + column.saturating_sub(1)).min(body.len())
}

fn decode<T: DeserializeOwned>(frame: &[u8]) -> Result<T> {
    if frame.len() < 4 {
        return Err(protocol(frame.len(), "truncated length prefix"));
    }
    let declared = u32::from_be_bytes([frame[0], frame[1], frame[2], frame[3]]) as usize;
    let body = &frame[4..];
    if declared > MAX_FRAME {
        return Err(protocol(0, format!("declared length {declared} exceeds the frame limit")));
    }
    if body.len() != declared {
        return Err(protocol(
            4 + body.len().min(declared),
            format!("declared length {declared} but body has {} bytes", body.len()),
        ));
    }
    if let Err(e) = std::str::from_utf8(body) {
        return Err(protocol(4 + e.valid_up_to(), "body is not UTF-8"));
    }
    let value: Value =
        serde_json::from_slice(body).map_err(|e| protocol(4 + json_offset(body, &e), e.to_string()))?;
    match value.get("version").and_then(Value::as_u64) {
        Some(v) if v == PROTOCOL_VERSION as u64 => {}
        Some(v) => {
            return Err(protocol(
                4,
                format!("version mismatch: frame has {v}, this build speaks {PROTOCOL_VERSION}"),
            ))
        }
        None => return Err(protocol(4, "missing protocol version")),
    }
    serde_json::from_value(value).map_err(|e| protocol(4, format!("schema: {e}")))
}

pub fn decode_request(frame: &[u8]) -> Result<RequestMsg> {
    decode(frame)
}

pub fn decode_result(frame: &[u8]) -> Result<ResultMsg> {
    decode(frame)
}

/// Reads one frame, prefix included. `None` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>> {
    let mut prefix = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut prefix[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Transport("stream closed inside a length prefix".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Transport(e.to_string())),
        }
    }
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME {
        return Err(protocol(0, format!("declared length {len} exceeds the frame limit")));
    }
    let mut frame = vec![0u8; 4 + len];
    frame[..4].copy_from_slice(&prefix);
    r.read_exact(&mut frame[4..])
        .map_err(|e| Error::Transport(format!("stream closed inside a frame body: {e}")))?;
    Ok(Some(frame))
}

pub fn write_frame(w: &mut impl Write, frame: &[u8]) -> Result<()> {
    w.write_all(frame)
        .and_then(|_| w.flush())
        .map_err(|e| Error::Transport(e.to_string()))
}

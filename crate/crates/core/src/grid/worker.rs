//! The worker side: turns request frames into result frames.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use super::protocol::{decode_request, encode, read_frame, write_frame, RequestMsg, ResultMsg, StudySpec};
use crate::error::{Error, Result};
use crate::hedging::{run_hedge_path, HedgeSetup};
use crate::pricers::{BsPricer, HestonPdePricer, ModelPricer, PricerKind};
use crate::products::Portfolio;

/// Instantiates the pricer a study asks for.
pub fn build_pricer(study: &StudySpec, portfolio: &Portfolio) -> Result<Arc<dyn ModelPricer>> {
    Ok(match study.pricer {
        PricerKind::Bs => Arc::new(BsPricer),
        PricerKind::Vv => {
            study.vv.validate()?;
            Arc::new(study.vv)
        }
        PricerKind::HestonMc => Arc::new(HestonPdePricer::new(
            &study.params,
            &study.curves,
            portfolio,
            study.hedge.monitoring,
            &study.pde,
        )?),
    })
}

/// Runs requests; pricers that are costly to build are kept per study.
pub struct Executor {
    id: String,
    cache: Mutex<HashMap<String, Arc<dyn ModelPricer>>>,
}

impl Executor {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    fn pricer(&self, req: &RequestMsg) -> Result<Arc<dyn ModelPricer>> {
        if req.study.pricer != PricerKind::HestonMc {
            return build_pricer(&req.study, &req.portfolio);
        }
        let key = serde_json::to_string(&(&req.study, &req.portfolio))
            .map_err(|e| Error::Numeric(format!("cache key: {e}")))?;
        let mut cache = self.cache.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(p) = cache.get(&key) {
            return Ok(p.clone());
        }
        let p = build_pricer(&req.study, &req.portfolio)?;
        cache.insert(key, p.clone());
        Ok(p)
    }

    /// Hedges one path. Failures come back as an error status.
    pub fn execute(&self, req: &RequestMsg) -> ResultMsg {
        let run = || -> Result<ResultMsg> {
            let pricer = self.pricer(req)?;
            let setup = HedgeSetup {
                params: req.study.params,
                curves: req.study.curves.clone(),
                spec: req.study.hedge.clone(),
                seed: req.study.seed,
            };
            let ledger = run_hedge_path(&req.portfolio, pricer.as_ref(), &req.path(), &setup)?;
            Ok(ResultMsg::ok(req.path_id, &self.id, ledger, req.study.full_ledger))
        };
        run().unwrap_or_else(|e| ResultMsg::error(req.path_id, &self.id, e.to_string()))
    }

    /// Frame in, frame out. A request that cannot be decoded is answered
    /// with an error result for path 0 so the client sees a mismatch.
    pub fn handle_frame(&self, frame: &[u8]) -> Result<Vec<u8>> {
        let result = match decode_request(frame) {
            Ok(req) => self.execute(&req),
            Err(e) => ResultMsg::error(0, &self.id, e.to_string()),
        };
        encode(&result)
    }
}

/// Answers frames on a byte stream until it closes. With `exit_after`, the
/// process dies without answering once that many requests were served.
pub fn serve_stream(exec: &Executor, reader: impl Read, writer: impl Write, exit_after: Option<usize>) -> Result<()> {
    let mut reader = BufReader::new(reader);
    let mut writer = BufWriter::new(writer);
    let mut served = 0usize;
    while let Some(frame) = read_frame(&mut reader)? {
        if exit_after == Some(served) {
            std::process::exit(3);
        }
        let out = exec.handle_frame(&frame)?;
        write_frame(&mut writer, &out)?;
        served += 1;
    }
    Ok(())
}

/// Serves every accepted connection on its own thread, sharing one pricer
/// cache. Returns only if accepting fails.
pub fn serve_tcp(listener: TcpListener, exec: Arc<Executor>) -> Result<()> {
    loop {
        let (stream, _) = listener.accept()?;
        let exec = exec.clone();
        std::thread::spawn(move || {
            let _ = stream.set_nodelay(true);
            if let Ok(read_half) = stream.try_clone() {
                let _ = serve_stream(&exec, read_half, stream, None);
            }
        });
    }
}

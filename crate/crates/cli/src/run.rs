//! Runs a configured study and writes its artifacts.

use std::fs;
use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use anyhow::{anyhow, Context};
use hedgesim::grid::{
    reference_price, run_study, study_report, Connection, RetryPolicy, StudyReport, StudyResults, Subprocess,
    WorkerPool, PROTOCOL_VERSION,
};
use hedgesim::pricers::McEstimate;
use hedgesim::risk::{summary_table, summary_text};
use hedgesim::surface::build_surface;
use serde::Serialize;

use crate::config::{StudyConfig, TransportKind};

/// Switches that change what is written, not what is computed.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub dump_ledgers: bool,
    pub dump_surface: bool,
    /// Binary started for subprocess and local TCP workers.
    pub worker_program: Option<PathBuf>,
    /// Makes the first subprocess worker die after serving this many paths.
    pub fail_worker_after: Option<usize>,
}

pub struct RunOutcome {
    pub results: StudyResults,
    pub reference: McEstimate,
    pub report: StudyReport,
}

/// Local `serve` processes killed when dropped.
struct LocalServers(Vec<Child>);

impl Drop for LocalServers {
    fn drop(&mut self) {
        for c in &mut self.0 {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

fn start_servers(program: &Path, n: usize) -> anyhow::Result<(LocalServers, Vec<SocketAddr>)> {
    let mut servers = LocalServers(Vec::new());
    let mut addrs = Vec::new();
    for _ in 0..n {
        let mut child = Command::new(program)
            .args(["serve", "--listen", "127.0.0.1:0"])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .spawn()
            .with_context(|| format!("cannot start {}", program.display()))?;
        let mut line = String::new();
        BufReader::new(child.stdout.take().expect("piped stdout")).read_line(&mut line)?;
        servers.0.push(child);
        let addr = line
            .trim()
            .strip_prefix("listening ")
            .ok_or_else(|| anyhow!("worker server did not announce its address: {line:?}"))?;
        addrs.push(addr.parse()?);
    }
    Ok((servers, addrs))
}

fn program(opts: &RunOptions) -> anyhow::Result<PathBuf> {
    match &opts.worker_program {
        Some(p) => Ok(p.clone()),
        None => std::env::current_exe().context("cannot locate the worker binary"),
    }
}

/// Runs the study without touching the disk.
pub fn execute(cfg: &StudyConfig, opts: &RunOptions) -> anyhow::Result<RunOutcome> {
    cfg.validate()?;
    let spec = cfg.study_spec(opts.dump_ledgers);
    let t = &cfg.transport;
    let retry = RetryPolicy {
        max_attempts: t.max_attempts,
    };
    let mut _servers = None;
    let pool = match t.kind {
        TransportKind::Inproc => {
            let exec = std::sync::Arc::new(hedgesim::grid::Executor::new("inproc"));
            WorkerPool::new(
                t.workers,
                retry,
                Box::new(move |_, _| Ok(Box::new(hedgesim::grid::InProc(exec.clone())) as Box<dyn Connection>)),
            )?
        }
        TransportKind::Subprocess => {
            let program = program(opts)?;
            let fail = opts.fail_worker_after;
            WorkerPool::new(
                t.workers,
                retry,
                Box::new(move |slot, attempt| {
                    let mut args = vec!["worker".to_string()];
                    if let (Some(n), 0, 0) = (fail, slot, attempt) {
                        args.extend(["--exit-after".to_string(), n.to_string()]);
                    }
                    Ok(Box::new(Subprocess::spawn(&program, &args)?) as Box<dyn Connection>)
                }),
            )?
        }
        TransportKind::Tcp => {
            let addrs: Vec<SocketAddr> = if t.addresses.is_empty() {
                let (servers, addrs) = start_servers(&program(opts)?, t.workers)?;
                _servers = Some(servers);
                addrs
            } else {
                t.addresses.iter().map(|a| a.parse()).collect::<Result<_, _>>()?
            };
            WorkerPool::tcp(t.workers, addrs)?.with_retry(retry)?
        }
    };
    let results = run_study(&spec, &cfg.portfolio, cfg.n_paths, &pool)?;
    let reference = reference_price(&spec, &cfg.portfolio, cfg.reference_paths, cfg.reference_seed)?;
    let report = study_report(&results, &spec, cfg.alpha, &reference)?;
    Ok(RunOutcome {
        results,
        reference,
        report,
    })
}

#[derive(Serialize)]
struct Flagged<'a> {
    path_id: u64,
    message: &'a str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    manifest_version: u32,
    tool_version: &'static str,
    protocol_version: u32,
    seed: u64,
    n_paths: usize,
    completed_paths: usize,
    reference: &'a McEstimate,
    flagged: Vec<Flagged<'a>>,
    outputs: Vec<String>,
    config: &'a StudyConfig,
}

fn paths_csv(outcome: &RunOutcome, cfg: &StudyConfig) -> String {
    let mut out = String::from("path_id,status,initial_price,terminal_total,discounted_terminal,message\n");
    for r in &outcome.results.results {
        match (&r.status, r.rows.first(), r.rows.last()) {
            (hedgesim::grid::Status::Ok, Some(first), Some(last)) => {
                let df = cfg.curves.domestic.discount(first.time, last.time);
                out.push_str(&format!(
                    "{},ok,{},{},{},\n",
                    r.path_id,
                    first.price,
                    last.total,
                    last.total * df
                ));
            }
            (hedgesim::grid::Status::Error { message }, _, _) => {
                out.push_str(&format!("{},error,,,,\"{}\"\n", r.path_id, message.replace('"', "'")));
            }
            _ => out.push_str(&format!("{},error,,,,empty result\n", r.path_id)),
        }
    }
    out
}

/// Runs the study and writes every artifact into `cfg.out_dir`.
pub fn run(cfg: &StudyConfig, opts: &RunOptions) -> anyhow::Result<RunOutcome> {
    let outcome = execute(cfg, opts)?;
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut outputs = Vec::new();
    let mut write = |name: &str, body: &str| -> anyhow::Result<()> {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
        outputs.push(name.to_string());
        Ok(())
    };
    let columns = [outcome.report.summary.clone()];
    write("summary.csv", &summary_table(&columns))?;
    write("summary.txt", &summary_text(&columns))?;
    write("bands.csv", &outcome.report.bands.to_csv(&outcome.results.dates))?;
    write("paths.csv", &paths_csv(&outcome, cfg))?;
    if opts.dump_ledgers {
        for r in &outcome.results.results {
            if let Some(ledger) = &r.ledger {
                write(&format!("ledgers/path_{:06}.csv", r.path_id), &ledger.to_csv())?;
            }
        }
    }
    if opts.dump_surface {
        let surface = build_surface(&cfg.params, &cfg.surface, &cfg.curves, 0.0)?;
        write("surface.csv", &surface.to_csv()?)?;
    }
    let flagged = outcome.results.flagged();
    let manifest = Manifest {
        manifest_version: 1,
        tool_version: env!("CARGO_PKG_VERSION"),
        protocol_version: PROTOCOL_VERSION,
        seed: cfg.seed,
        n_paths: cfg.n_paths,
        completed_paths: outcome.results.ok().count(),
        reference: &outcome.reference,
        flagged: flagged
            .iter()
            .map(|(id, m)| Flagged {
                path_id: *id,
                message: m,
            })
            .collect(),
        outputs: {
            outputs.push("manifest.json".into());
            outputs.clone()
        },
        config: cfg,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(outcome)
}

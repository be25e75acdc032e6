use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use hedgesim::grid::{serve_stream, serve_tcp, Executor};
use hedgesim_cli::{run, RunOptions, StudyConfig, TransportKind};

/// Hedging simulation of FX exotics under a Heston market.
#[derive(Parser)]
#[command(version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Cmd>,
    /// Study config (JSON); a run manifest is accepted too.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    transport: Option<TransportKind>,
    /// Write one ledger CSV per path.
    #[arg(long)]
    dump_ledgers: bool,
    /// Write the initial volatility surface.
    #[arg(long)]
    dump_surface: bool,
    /// Kill the first subprocess worker after it served N paths.
    #[arg(long, hide = true)]
    fail_worker_after: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve request frames on stdin/stdout.
    Worker {
        #[arg(long, hide = true)]
        exit_after: Option<usize>,
    },
    /// Serve request frames over TCP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
    },
}

fn study(cli: Cli) -> anyhow::Result<()> {
    let path = cli.config.context("--config is required")?;
    let mut cfg = StudyConfig::load(&path)?;
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if let Some(n) = cli.paths {
        cfg.n_paths = n;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.transport.workers = w;
    }
    if let Some(t) = cli.transport {
        cfg.transport.kind = t;
    }
    let opts = RunOptions {
        dump_ledgers: cli.dump_ledgers,
        dump_surface: cli.dump_surface,
        worker_program: None,
        fail_worker_after: cli.fail_worker_after,
    };
    let outcome = run(&cfg, &opts)?;
    print!("{}", hedgesim::risk::summary_text(&[outcome.report.summary.clone()]));
    let flagged = outcome.results.flagged();
    if !flagged.is_empty() {
        eprintln!("{} path(s) failed; see manifest.json", flagged.len());
    }
    println!("outputs in {}", cfg.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Some(Cmd::Worker { exit_after }) => {
            let exec = Executor::new(format!("pid-{}", std::process::id()));
            serve_stream(&exec, std::io::stdin().lock(), std::io::stdout().lock(), exit_after).map_err(Into::into)
        }
        Some(Cmd::Serve { listen }) => (|| -> anyhow::Result<()> {
            let listener = TcpListener::bind(&listen).with_context(|| format!("cannot listen on {listen}"))?;
            let addr = listener.local_addr()?;
            println!("listening {addr}");
            use std::io::Write;
            std::io::stdout().flush()?;
            serve_tcp(listener, Arc::new(Executor::new(format!("tcp-{addr}"))))?;
            Ok(())
        })(),
        None => study(cli),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use cabaret_service::{router, Experiment, ExperimentConfig, ServiceOptions};
use clap::Parser;

/// Serves the viewing-session experiment over HTTP.
#[derive(Debug, Parser)]
#[command(name = "cabaret-serve", version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Directory holding the append-only event log.
    #[arg(long, default_value = "experiment-data")]
    data_dir: PathBuf,
    /// Bearer token required by GET /export.
    #[arg(long)]
    admin_token: String,
    /// Regions file; without it seven synthetic regions are generated.
    #[arg(long)]
    regions: Option<PathBuf>,
    /// Catalog size of each synthetic region.
    #[arg(long, default_value_t = 2000)]
    synthetic_items: usize,
    /// Seeds the per-session trending draw (testing only).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match &args.regions {
        Some(path) => ExperimentConfig::load(path),
        None => ExperimentConfig::synthetic(args.synthetic_items, args.seed.unwrap_or(0)),
    };
    let config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut options = ServiceOptions::new(args.admin_token);
    options.seed = args.seed;
    let experiment = match Experiment::open(config, options, &args.data_dir) {
        Ok(e) => Arc::new(e),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let served = runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.listen).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(experiment)).await
    });
    match served {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

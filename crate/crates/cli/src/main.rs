use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cabaret_core::demand::{RecommenderKind, ScenarioConfig};
use cabaret_core::runner::{
    compare_caching, export_fixtures, model_prediction, run_greedy, run_scenario, sweep, write_bundle, ResultsBundle,
    RunnerError,
};
use clap::{Args, Parser, Subcommand};

/// Simulates viewing sessions against cache-aware recommenders and reports cache hit ratios.
#[derive(Debug, Parser)]
#[command(name = "cabaret", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario TOML file.
    config: PathBuf,
    /// Bundle directory; replaced if it exists.
    #[arg(long, short, default_value = "results")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs the base cell of a scenario and keeps its session traces.
    Run(ScenarioArgs),
    /// Runs every cell of the scenario's sweep grid.
    Sweep(ScenarioArgs),
    /// Compares the most popular cache with the greedy placement at each sweep capacity.
    CompareCaching(ScenarioArgs),
    /// Greedy cache placement on a stored instance; prints JSON.
    Greedy {
        instance: PathBuf,
        #[arg(long)]
        capacity: usize,
    },
    /// Closed-form hit ratio and its bound for a Zipf position law; prints JSON.
    Model {
        /// Explored list size.
        #[arg(long = "L", alias = "list-size")]
        list_size: usize,
        /// Fraction of the explored list that is cached.
        #[arg(long)]
        qc: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Recommendation slots.
        #[arg(long, default_value_t = 20)]
        n: usize,
    },
    /// Writes a hand-checkable graph, an example scenario and a greedy instance.
    ExportFixtures {
        #[arg(default_value = "fixtures")]
        dir: PathBuf,
    },
}

fn load(args: &ScenarioArgs) -> Result<ScenarioConfig, RunnerError> {
    let mut config = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

/// Writes to stdout; a closed pipe ends output quietly.
fn emit(text: &str) -> Result<(), RunnerError> {
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}").and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<(), RunnerError> {
    emit(&serde_json::to_string_pretty(value).map_err(|e| RunnerError::Runtime(e.to_string()))?)
}

fn dash(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

fn summary(bundle: &ResultsBundle, out: &Path) -> String {
    let mut lines = Vec::new();
    if bundle.caching.is_empty() {
        let rec = &bundle.config.recommender;
        for c in &bundle.cells {
            let s = &c.spec;
            let kind = serde_json::to_value(s.kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
            let explores = s.kind == RecommenderKind::Cabaret;
            let (w, d) = if explores { (s.width.or(rec.width), s.depth.or(rec.depth)) } else { (None, None) };
            lines.push(format!(
                "{kind:<12} W={:<4} D={:<4} C={:<5} chr={:.4} ±{:.4}",
                dash(w),
                dash(d),
                s.capacity,
                c.report.aggregate,
                c.report.aggregate_ci_half_width,
            ));
        }
    }
    for r in &bundle.caching {
        let ratio = r.ratio.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        lines.push(format!("C={:<5} top={:.4} greedy={:.4} ratio={ratio}", r.capacity, r.top_chr, r.greedy_chr));
    }
    lines.push(format!("bundle {} written to {}", bundle.config_hash, out.display()));
    lines.join("\n")
}

fn bundle_command(args: &ScenarioArgs, run: fn(&ScenarioConfig) -> Result<ResultsBundle, RunnerError>) -> Result<(), RunnerError> {
    let bundle = run(&load(args)?)?;
    let out = write_bundle(&bundle, &args.out)?;
    emit(&summary(&bundle, &out))
}

fn execute(command: Command) -> Result<(), RunnerError> {
    match command {
        Command::Run(args) => bundle_command(&args, run_scenario),
        Command::Sweep(args) => bundle_command(&args, sweep),
        Command::CompareCaching(args) => bundle_command(&args, compare_caching),
        Command::Greedy { instance, capacity } => print_json(&run_greedy(instance, capacity)?),
        Command::Model { list_size, qc, alpha, n } => print_json(&model_prediction(list_size, qc, alpha, n)?),
        Command::ExportFixtures { dir } => {
            let paths: Vec<String> = export_fixtures(dir)?.iter().map(|p| p.display().to_string()).collect();
            emit(&paths.join("\n"))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

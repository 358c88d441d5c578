use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use dsr_sim::runner::{run_matrix, unbalanced, write_outputs, ConfigError, ScenarioConfig};
use dsr_sim::world::LogMode;

/// Run a DSR / DSR+S experiment matrix and write CSV results.
///
/// Settings come from the config file (flat `key = value` lines), then from
/// the flags below, which override the file.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Cli {
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// dsr, dsr+s, or both comma-separated.
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    no_ring_zero: bool,
    #[arg(long, value_name = "LIST")]
    seeds: Option<String>,
    #[arg(long, value_name = "LIST")]
    pause_times: Option<String>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Write a full event log per run.
    #[arg(long)]
    event_log: bool,
    /// Write each scenario's mobility trace and flow list.
    #[arg(long)]
    export_scenarios: bool,
    #[arg(long)]
    n_nodes: Option<String>,
    /// W,H in metres, or one side of a square.
    #[arg(long)]
    space: Option<String>,
    #[arg(long)]
    duration: Option<String>,
    #[arg(long)]
    max_speed: Option<String>,
    #[arg(long)]
    n_sources: Option<String>,
    #[arg(long)]
    rate: Option<String>,
    #[arg(long)]
    payload: Option<String>,
    #[arg(long)]
    radio_range: Option<String>,
    #[arg(long)]
    bandwidth: Option<String>,
    #[arg(long)]
    max_mac_retries: Option<String>,
    #[arg(long)]
    ifq_capacity: Option<String>,
    /// full or suffix-only.
    #[arg(long)]
    h_r_mode: Option<String>,
    /// Seconds.
    #[arg(long)]
    rreq_jitter: Option<String>,
    /// Seconds per hop.
    #[arg(long)]
    delay_unit: Option<String>,
}

fn configure(cli: &Cli) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    let overrides = [
        ("protocol", &cli.protocol),
        ("seeds", &cli.seeds),
        ("pause_times", &cli.pause_times),
        ("n_nodes", &cli.n_nodes),
        ("space", &cli.space),
        ("duration", &cli.duration),
        ("max_speed", &cli.max_speed),
        ("n_sources", &cli.n_sources),
        ("rate", &cli.rate),
        ("payload", &cli.payload),
        ("radio_range", &cli.radio_range),
        ("bandwidth", &cli.bandwidth),
        ("max_mac_retries", &cli.max_mac_retries),
        ("ifq_capacity", &cli.ifq_capacity),
        ("h_r_mode", &cli.h_r_mode),
        ("rreq_jitter", &cli.rreq_jitter),
        ("delay_unit", &cli.delay_unit),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if cli.no_ring_zero {
        cfg.ring_zero = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match configure(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("simulate: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let log = if cli.event_log { LogMode::Full } else { LogMode::Off };
    let runs = cfg.protocols.len() * cfg.pause_times.len() * cfg.seeds.len();
    eprintln!("simulate: {runs} runs, {} nodes, {} s each", cfg.n_nodes, cfg.duration);
    let started = Instant::now();
    let records = run_matrix(&cfg, log);
    eprintln!("simulate: finished in {:.1} s", started.elapsed().as_secs_f64());
    if let Err(e) = write_outputs(&cfg, &records, &cli.out, cli.export_scenarios) {
        eprintln!("simulate: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    let bad = unbalanced(&records);
    for r in &bad {
        eprintln!(
            "simulate: packet accounting does not balance for {} pause {} seed {}",
            r.protocol, r.pause_time, r.seed
        );
    }
    if bad.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(4)
    }
}

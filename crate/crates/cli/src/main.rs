use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;
use ris_idd::channel::Scenario;
use ris_idd::sim::{emit_csv, emit_trace, run_sweep, EstimatorMode, ExecMode, SimConfig};

/// Monte-Carlo sweep of channel-estimation NMSE and BER over transmit power.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Args {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV, one row per transmit power.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    /// Pilot symbols per packet.
    #[arg(long)]
    pilots: Option<usize>,
    /// Channel-estimation refinements.
    #[arg(long)]
    rho: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// proposed | onoff
    #[arg(long, value_parser = parse_mode)]
    mode: Option<EstimatorMode>,
    /// Per-iteration mean NMSE trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Run trials on the calling thread only.
    #[arg(long)]
    serial: bool,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: ris_idd::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<EstimatorMode, String> {
    s.parse().map_err(|e: ris_idd::Error| e.to_string())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let mut cfg = match &args.config {
        Some(path) => SimConfig::load(path)?,
        None => SimConfig::default(),
    };
    if let Some(s) = args.scenario {
        cfg.scenario = s;
    }
    if let Some(p) = args.pilots {
        cfg.pilots = p;
    }
    if let Some(r) = args.rho {
        cfg.ce_iterations = r;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    cfg.validate().context("invalid configuration")?;

    let exec = if args.serial { ExecMode::Serial } else { ExecMode::Parallel };
    log::info!(
        "{:?} {:?}, {} pilots used, rho = {}, {} trials x {} powers",
        cfg.mode,
        cfg.scenario,
        cfg.pilots_used(),
        cfg.ce_iterations,
        cfg.trials,
        cfg.pt_dbm.len()
    );
    let start = Instant::now();
    let result = run_sweep(&cfg, exec)?;
    log::info!("finished in {:.1?}", start.elapsed());
    for p in &result.points {
        log::info!(
            "pt {:>6.1} dBm  nmse_h {:.3e}  nmse_z {:.3e}  ber {:.3e}",
            p.pt_dbm,
            p.nmse_direct_mean,
            p.nmse_cascaded_mean,
            p.ber_mean
        );
    }
    emit_csv(&result, &args.out)?;
    if let Some(trace) = &args.trace {
        emit_trace(&result, trace)?;
    }
    Ok(())
}

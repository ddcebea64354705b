use std::io::Write;
use std::path::Path;

use super::config::SimConfig;
use super::trial::{Simulator, TrialRecord};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "pt_dbm",
    "nmse_direct_mean",
    "nmse_cascaded_mean",
    "ber_mean",
    "nmse_ci",
    "ber_ci",
    "mean_iters",
    "mean_cond",
];

/// How trials are scheduled. Results do not depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Serial,
    /// Rayon worker pool; runs serially when built without the `parallel` feature.
    #[default]
    Parallel,
}

/// Aggregates at one transmit power.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub pt_dbm: f64,
    pub nmse_direct_mean: f64,
    pub nmse_cascaded_mean: f64,
    pub ber_mean: f64,
    /// 95% normal-approximation half-width of the cascaded NMSE mean.
    pub nmse_ci: f64,
    pub ber_ci: f64,
    pub mean_iters: f64,
    /// Mean over trials with a finite condition number.
    pub mean_cond: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<GridPoint>,
    /// Grid-major, trial-minor.
    pub records: Vec<TrialRecord>,
    pub trials: usize,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// `1.96 · s / √n` with the unbiased sample deviation; zero for a single sample.
fn ci95(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    1.96 * (var / n as f64).sqrt()
}

pub fn aggregate(pt_dbm: f64, records: &[TrialRecord]) -> GridPoint {
    let pick = |f: fn(&TrialRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let direct = pick(|r| r.nmse_direct);
    let cascaded = pick(|r| r.nmse_cascaded);
    let ber = pick(|r| r.ber);
    let finite_cond: Vec<f64> = records.iter().map(|r| r.condition).filter(|c| c.is_finite()).collect();
    GridPoint {
        pt_dbm,
        nmse_direct_mean: mean(&direct),
        nmse_cascaded_mean: mean(&cascaded),
        ber_mean: mean(&ber),
        nmse_ci: ci95(&cascaded),
        ber_ci: ci95(&ber),
        mean_iters: mean(&pick(|r| r.iterations as f64)),
        mean_cond: mean(&finite_cond),
    }
}

fn collect_trials(sim: &Simulator, exec: ExecMode) -> Result<Vec<TrialRecord>> {
    let cfg = sim.config();
    let trials = cfg.trials;
    let job = |idx: usize| sim.run_trial(cfg.pt_dbm[idx / trials], (idx % trials) as u64);
    let total = cfg.pt_dbm.len() * trials;
    match exec {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            (0..total).into_par_iter().map(job).collect()
        }
        _ => (0..total).map(job).collect(),
    }
}

/// Every trial at every grid power, reduced in trial order.
pub fn run_sweep(cfg: &SimConfig, exec: ExecMode) -> Result<SweepResult> {
    let sim = Simulator::new(cfg.clone())?;
    run_sweep_with(&sim, exec)
}

pub fn run_sweep_with(sim: &Simulator, exec: ExecMode) -> Result<SweepResult> {
    let cfg = sim.config();
    let records = collect_trials(sim, exec)?;
    let points = cfg
        .pt_dbm
        .iter()
        .zip(records.chunks(cfg.trials))
        .map(|(&pt, chunk)| aggregate(pt, chunk))
        .collect();
    Ok(SweepResult { points, records, trials: cfg.trials })
}

impl SweepResult {
    /// Mean cascaded NMSE after each refinement step, per grid point.
    ///
    /// Trials that stopped early keep their last value.
    pub fn mean_traces(&self) -> Vec<Vec<f64>> {
        if self.trials == 0 {
            return vec![Vec::new(); self.points.len()];
        }
        self.records
            .chunks(self.trials)
            .map(|chunk| {
                let len = chunk.iter().map(|r| r.nmse_trace.len()).max().unwrap_or(0);
                (0..len)
                    .map(|t| {
                        let vals: Vec<f64> = chunk
                            .iter()
                            .filter_map(|r| r.nmse_trace.get(t).or(r.nmse_trace.last()).copied())
                            .collect();
                        mean(&vals)
                    })
                    .collect()
            })
            .collect()
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv { path: path.to_path_buf(), source }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// Header plus one row per grid point; floats use shortest round-trip decimals.
pub fn write_csv<W: Write>(points: &[GridPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for p in points {
        let row = [
            p.pt_dbm,
            p.nmse_direct_mean,
            p.nmse_cascaded_mean,
            p.ber_mean,
            p.nmse_ci,
            p.ber_ci,
            p.mean_iters,
            p.mean_cond,
        ];
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_csv(&result.points, file).map_err(csv_err(path))
}

pub fn read_csv(path: &Path) -> Result<Vec<GridPoint>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!("{}: unexpected header", path.display())));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let v = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        out.push(GridPoint {
            pt_dbm: v[0],
            nmse_direct_mean: v[1],
            nmse_cascaded_mean: v[2],
            ber_mean: v[3],
            nmse_ci: v[4],
            ber_ci: v[5],
            mean_iters: v[6],
            mean_cond: v[7],
        });
    }
    Ok(out)
}

/// `pt_dbm,iteration,nmse_cascaded_mean`; iteration 0 is the pilot-only estimate.
pub fn emit_trace(result: &SweepResult, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    let err = csv_err(path);
    w.write_record(["pt_dbm", "iteration", "nmse_cascaded_mean"]).map_err(&err)?;
    for (p, trace) in result.points.iter().zip(result.mean_traces()) {
        for (t, v) in trace.iter().enumerate() {
            w.write_record([p.pt_dbm.to_string(), t.to_string(), v.to_string()]).map_err(&err)?;
        }
    }
    w.flush().map_err(io_err(path))
}

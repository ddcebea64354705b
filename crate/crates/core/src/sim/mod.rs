//! Monte-Carlo orchestration: configuration, single trials, power sweeps
//! and CSV output.

mod config;
mod sweep;
mod trial;

pub use config::{CodeConfig, ConventionalConfig, EstimatorMode, SimConfig};
pub use sweep::{
    aggregate, emit_csv, emit_trace, read_csv, run_sweep, run_sweep_with, write_csv, ExecMode, GridPoint, SweepResult,
    CSV_HEADER,
};
pub use trial::{
    channel_priors, design_phi, equivalent_from_parts, instant_channels, split_cascaded, Simulator, TrialRecord,
};

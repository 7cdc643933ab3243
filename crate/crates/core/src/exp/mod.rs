//! Experiment layer: configuration files, generators, runs, sweeps and output.

pub mod config;
pub mod io;
pub mod run;
pub mod scenario;
pub mod sweep;

pub use config::{Analysis, Generator, InitialSpec, OutputSpec, Prepared, RunConfig, SweepSpec};
pub use run::{certify, execute, exit_code, CertifyReport, RunOutput, RunSummary};
pub use sweep::{run_sweep, write_sweep_csv, SweepRow};

//! Batch experiment harness: configuration, instance sources, per-seed
//! pipelines with cost accounting, scaling sweeps and report files.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod gen;
pub mod report;
pub mod run;

pub use bench::bench_scaling;
pub use config::{ExperimentConfig, InstanceSource, OracleSpec, Task};
pub use error::HarnessError;
pub use report::RunReport;
pub use run::run_experiment;

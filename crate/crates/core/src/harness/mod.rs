//! Configuration, orchestration and reporting for experiments.

pub mod compare;
pub mod config;
pub mod report;
pub mod run;

pub use compare::{compare, CompareError, RegionVerdict};
pub use config::{ConfigError, ConfigFile, ExperimentConfig, ExperimentKind, StartSpec};
pub use report::{Artifact, ExperimentReport, VerificationReport, VERSION};
pub use run::{run, run_experiment, HarnessError, RunOptions};

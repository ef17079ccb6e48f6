//! Multi-seed experiment driver: configuration files, parallel replicates,
//! comparisons, ablation grids and machine-readable outputs.

pub mod ablation;
pub mod analyze;
pub mod compare;
pub mod config;
pub mod experiment;
pub mod output;
pub mod presets;

pub use ablation::{run_ablation, AblationAxis, AblationGrid, AblationRow};
pub use compare::{compare_baselines, format_table, CompareOptions, CompareRow};
pub use config::{apply_override, load_config, ExperimentConfig, Solver};
pub use experiment::{run_experiment, write_artifacts, ExperimentOutcome, ReplicateResult};
pub use presets::CompareMode;

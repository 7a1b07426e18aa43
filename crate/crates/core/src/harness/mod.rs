//! Experiment orchestration: TOML configuration, seeded training runs with
//! CSV output, ablation grids and the tabular bound checks.

mod config;
mod experiment;
mod verify;

pub use config::{EnvSection, ExperimentConfig, ExperimentSection, TrainSection};
pub use experiment::{
    ablation_plan, aggregate, records_from_csv, records_to_csv, run_ablation_suite, run_experiment, AblationSuite,
    AggregatePoint, Checkpoint, EvalRecord, ExperimentResult, RunLayout, CSV_HEADER, MU_GRID,
};
pub use verify::{verify_bounds, BoundInstance, BoundsReport, InstanceSizes, SupportKind, TELESCOPING_TOL};

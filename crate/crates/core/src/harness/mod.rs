//! Datasets, experiment configuration, the active-learning loop and reports.

mod config;
mod data;
mod report;
mod run;

pub use config::{ExperimentConfig, SCHEMA_VERSION};
pub use data::{
    distance_to_arc, generate_blobs, generate_moons, initial_pool, load_csv_dataset, moon_arc, moon_pivots, moon_point,
    read_csv_dataset, write_csv_dataset, Dataset, DatasetSpec, MOON_SPACING,
};
pub use report::{decision_boundary_grid, emit_report, summarize, write_grid_csv, Bounds, GridPoint, SummaryRow};
pub use run::{
    persist_run, read_records, run_assl, run_assl_on, run_experiment, Checkpoint, PhaseTiming, RoundRecord, RunOutput,
    RunRecord,
};

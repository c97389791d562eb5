//! Experiment harness: config, the fitted-state file, and the commands behind the `valla`
//! binary.

mod commands;
mod config;
mod posterior;

pub use commands::{
    cmd_compare, cmd_evaluate, cmd_fit, cmd_ood, cmd_predict_grid, cmd_train_map, grid_points, predict_grid,
    prepare_data, read_entropy_csv, state_path, write_entropy_csv, CompareRow, FitOutcome, FitSummary, GridRow,
    PreparedData, Split, Timing, CHECKPOINT, CONFIG_COPY, TRAIN_LOG,
};
pub use config::{
    default_config_toml, ArchitectureConfig, DatasetConfig, DatasetKind, ExperimentConfig, Method, PosteriorConfig,
    TrainSection,
};
pub use posterior::{Posterior, StateFile, STATE_MAGIC, STATE_VERSION};

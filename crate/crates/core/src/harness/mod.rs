//! Monte Carlo driver, scoring against ground truth, file formats and the
//! command-line front end.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod io;
pub mod score;

pub use cli::cli_main;
pub use config::{ExperimentConfig, Metric, Settings};
pub use experiment::{run_experiment, run_once, summarize, CellSummary, ExperimentOutput, ExperimentReport, Quantiles, RunRecord};
pub use io::{read_json, read_series_csv, write_json, write_runs_csv, write_series_csv, SeriesMeta};
pub use score::{break_distance, oracle_result, score, RunScore};

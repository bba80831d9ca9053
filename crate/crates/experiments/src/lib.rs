//! Experiment harness for scheduled dropout: run configuration, multi-seed
//! training, metrics CSV files, peak/boost summaries and SVG plots.

pub mod compare;
pub mod config;
pub mod data;
pub mod error;
pub mod plot;
pub mod summary;
pub mod train;
pub mod verify;

pub use compare::compare_methods;
pub use config::{parse_methods, Architecture, DatasetKind, Method, RunConfig};
pub use error::{ExperimentError, Result};
pub use plot::{emit_plot, render_svg};
pub use summary::{boost_metric, peak_metric, summarize, summarize_runs, SummaryReport};
pub use train::{read_metrics, run_experiment, train_seed, write_metrics, MetricsRecord};
pub use verify::verify_curriculum;

use std::fs;

use crate::config::{Method, RunConfig};
use crate::data::load_splits;
use crate::error::{ExperimentError, Result};
use crate::plot::emit_plot;
use crate::summary::{summarize, SummaryReport};
use crate::train::{build_network, method_dir, run_with_data, seed_file};

pub const SUMMARY_FILE: &str = "summary.json";
pub const PLOT_FILE: &str = "summary.svg";

/// Trains every method with the seeds, data and initial weights of
/// `base`, then writes `summary.json` and `summary.svg` to its output
/// directory. Every method's configuration is checked before training.
pub fn compare_methods(base: &RunConfig, methods: &[Method], top_k: usize) -> Result<SummaryReport> {
    if methods.is_empty() {
        return Err(ExperimentError::Config("no methods to compare".into()));
    }
    let configs: Vec<RunConfig> = methods.iter().map(|&m| base.with_method(m)).collect();
    for cfg in &configs {
        cfg.validate()?;
    }
    let splits = load_splits(base)?;
    build_network(base, splits.train.sample_shape(), splits.train.num_classes, 0)?;
    for cfg in &configs {
        if cfg.method == Method::Switch {
            cfg.resolved_switch_step(splits.train.len())?;
        }
    }
    fs::create_dir_all(&base.out_dir).map_err(|e| ExperimentError::io(&base.out_dir, e))?;
    for cfg in &configs {
        let dir = method_dir(&base.out_dir, cfg.method);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| ExperimentError::io(&dir, e))?;
        }
        run_with_data(cfg, &splits)?;
    }
    let groups: Vec<_> = methods
        .iter()
        .map(|&m| {
            let files = base.seeds.iter().map(|&s| seed_file(&base.out_dir, m, s)).collect();
            (m.name().to_string(), files)
        })
        .collect();
    let report = summarize(&groups, top_k)?;
    report.save(&base.out_dir.join(SUMMARY_FILE))?;
    emit_plot(&report, &base.out_dir.join(PLOT_FILE))?;
    Ok(report)
}

use dropcurve_core::dropout::RetainGroup;
use dropcurve_core::schedule::Schedule;
use dropcurve_core::theory::{lambda_grid, verify_curriculum_properties, BaseDistribution, CurriculumReport, EntropyClause};

use crate::config::{Method, RunConfig};
use crate::error::{ExperimentError, Result};

/// The schedule `verify-curriculum` analyses: the configured shape with
/// the floor of `group`. A switch schedule needs an explicit switch step.
pub fn schedule_for_verification(cfg: &RunConfig, group: RetainGroup) -> Result<Schedule> {
    if cfg.method == Method::Switch && cfg.switch_step.is_none() {
        return Err(ExperimentError::Config(
            "verifying a switch schedule needs schedule.switch_step".into(),
        ));
    }
    cfg.group_schedule(group, 0)
}

/// Exact analysis of `schedule` in dimension `d` over a `grid`-point
/// learning-time grid, with a uniform base distribution of `base` examples.
pub fn verify_curriculum(schedule: &Schedule, d: usize, grid: usize, base: usize) -> Result<CurriculumReport> {
    if grid < 2 {
        return Err(ExperimentError::Config("grid needs at least two points".into()));
    }
    let pi = BaseDistribution::uniform(base)?;
    Ok(verify_curriculum_properties(&pi, d, schedule, &lambda_grid(grid))?)
}

/// `lambda,theta,entropy,normalization_error` rows (entropy in nats)
/// followed by a `#` summary line.
pub fn report_csv(report: &CurriculumReport) -> String {
    let mut out = String::from("lambda,theta,entropy,normalization_error\n");
    for r in &report.rows {
        out.push_str(&format!("{},{},{},{}\n", r.lambda, r.theta, r.entropy_nats, r.normalization_error));
    }
    let entropy = match &report.entropy {
        EntropyClause::Checked { expected, violations } if violations.is_empty() => format!("{expected:?} ok"),
        EntropyClause::Checked { expected, violations } => {
            format!("{expected:?} violated at {violations:?}")
        }
        EntropyClause::Skipped { reason } => format!("skipped ({reason})"),
    };
    out.push_str(&format!(
        "# d={} kind={:?} max_normalization_error={:e} entropy={} target_gap={:e} passed={}\n",
        report.d,
        report.kind,
        report.max_normalization_error,
        entropy,
        report.target_gap,
        report.passed()
    ));
    out
}

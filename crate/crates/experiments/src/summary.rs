use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Method;
use crate::error::{ExperimentError, Result};
use crate::train::read_metrics;

/// Test-accuracy curves of one method across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub files: Vec<String>,
    pub steps: Vec<u64>,
    pub mean: Vec<f64>,
    /// Pointwise population standard deviation across seeds.
    pub std: Vec<f64>,
    /// Mean of each seed's `top_k` best test accuracies.
    pub seed_peaks: Vec<f64>,
    /// Mean of `seed_peaks`.
    pub peak: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostRow {
    pub method: String,
    pub peak: f64,
    /// Peak improvement over the `none` method, in percentage points.
    pub delta_pp: Option<f64>,
    /// Relative gain of `delta_pp` over the `constant` method's, in percent.
    pub boost_percent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub top_k: usize,
    pub methods: Vec<MethodSummary>,
    pub boosts: Vec<BoostRow>,
}

/// `100 (delta_method - delta_dropout) / delta_dropout`.
pub fn boost_metric(delta_method: f64, delta_dropout: f64) -> Result<f64> {
    if delta_dropout == 0.0 {
        return Err(ExperimentError::UndefinedBoost);
    }
    Ok(100.0 * (delta_method - delta_dropout) / delta_dropout)
}

/// Mean of the `top_k` largest values (all of them if there are fewer).
pub fn top_k_mean(values: &[f64], top_k: usize) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = top_k.max(1).min(sorted.len());
    if k == 0 {
        return f64::NAN;
    }
    sorted[..k].iter().sum::<f64>() / k as f64
}

/// Mean over seeds of each seed's top-`k` mean.
pub fn peak_metric(per_seed: &[Vec<f64>], top_k: usize) -> f64 {
    per_seed.iter().map(|v| top_k_mean(v, top_k)).sum::<f64>() / per_seed.len() as f64
}

/// Shifted by the first value, so identical inputs give exactly zero spread.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let shift = values[0];
    let offset = values.iter().map(|v| v - shift).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - shift - offset).powi(2)).sum::<f64>() / n;
    (shift + offset, var.sqrt())
}

/// Evaluation points `(step, test_acc)` of one metrics file, by step.
fn eval_series(path: &Path) -> Result<Vec<(u64, f64)>> {
    let mut series: Vec<(u64, f64)> = read_metrics(path)?
        .into_iter()
        .filter_map(|r| r.test_acc.map(|a| (r.step, a)))
        .collect();
    series.sort_by_key(|p| p.0);
    if series.is_empty() {
        return Err(ExperimentError::Metrics {
            path: path.to_path_buf(),
            message: "no evaluation rows".into(),
        });
    }
    Ok(series)
}

pub fn summarize_method(method: &str, files: &[PathBuf], top_k: usize) -> Result<MethodSummary> {
    if files.is_empty() {
        return Err(ExperimentError::Config(format!("no metrics files for method '{method}'")));
    }
    let series: Vec<Vec<(u64, f64)>> = files.iter().map(|f| eval_series(f)).collect::<Result<_>>()?;
    let steps: Vec<u64> = series[0].iter().map(|p| p.0).collect();
    let offending: Vec<String> = files
        .iter()
        .zip(&series)
        .filter(|(_, s)| s.iter().map(|p| p.0).ne(steps.iter().copied()))
        .map(|(f, _)| f.display().to_string())
        .collect();
    if !offending.is_empty() {
        return Err(ExperimentError::Alignment {
            reference: files[0].display().to_string(),
            offending,
        });
    }
    let (mean, std) = (0..steps.len())
        .map(|i| mean_std(&series.iter().map(|s| s[i].1).collect::<Vec<_>>()))
        .unzip();
    let accs: Vec<Vec<f64>> = series.iter().map(|s| s.iter().map(|p| p.1).collect()).collect();
    let seed_peaks: Vec<f64> = accs.iter().map(|a| top_k_mean(a, top_k)).collect();
    Ok(MethodSummary {
        method: method.to_string(),
        files: files.iter().map(|f| f.display().to_string()).collect(),
        steps,
        mean,
        std,
        peak: seed_peaks.iter().sum::<f64>() / seed_peaks.len() as f64,
        seed_peaks,
    })
}

fn boost_rows(methods: &[MethodSummary]) -> Vec<BoostRow> {
    let peak_of = |name: &str| methods.iter().find(|m| m.method == name).map(|m| m.peak);
    let baseline = peak_of(Method::None.name());
    let dropout_delta = peak_of(Method::Constant.name()).zip(baseline).map(|(c, b)| 100.0 * (c - b));
    methods
        .iter()
        .map(|m| {
            let delta_pp = baseline.map(|b| 100.0 * (m.peak - b));
            let boost_percent = if m.method == Method::Constant.name() {
                Some(0.0)
            } else {
                delta_pp
                    .zip(dropout_delta)
                    .and_then(|(d, dd)| boost_metric(d, dd).ok())
            };
            BoostRow {
                method: m.method.clone(),
                peak: m.peak,
                delta_pp,
                boost_percent,
            }
        })
        .collect()
}

/// Summaries for `(method, seed files)` groups plus the boost table.
pub fn summarize(groups: &[(String, Vec<PathBuf>)], top_k: usize) -> Result<SummaryReport> {
    if top_k == 0 {
        return Err(ExperimentError::Config("top_k must be at least 1".into()));
    }
    let methods: Vec<MethodSummary> = groups
        .iter()
        .map(|(name, files)| summarize_method(name, files, top_k))
        .collect::<Result<_>>()?;
    let steps = &methods[0].steps;
    let offending: Vec<String> = methods
        .iter()
        .filter(|m| &m.steps != steps)
        .map(|m| m.method.clone())
        .collect();
    if !offending.is_empty() {
        return Err(ExperimentError::Alignment {
            reference: methods[0].method.clone(),
            offending,
        });
    }
    Ok(SummaryReport {
        top_k,
        boosts: boost_rows(&methods),
        methods,
    })
}

fn seed_number(path: &Path) -> Option<u64> {
    path.file_name()?
        .to_str()?
        .strip_prefix("seed_")?
        .strip_suffix(".csv")?
        .parse()
        .ok()
}

/// Seed files under `runs/<method>/`, methods in canonical order first.
pub fn discover_runs(runs: &Path) -> Result<Vec<(String, Vec<PathBuf>)>> {
    let entries = fs::read_dir(runs).map_err(|e| ExperimentError::io(runs, e))?;
    let mut groups = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| ExperimentError::io(runs, e))?;
        if !entry.path().is_dir() {
            continue;
        }
        let dir = entry.path();
        let mut files: Vec<(u64, PathBuf)> = fs::read_dir(&dir)
            .map_err(|e| ExperimentError::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter_map(|p| seed_number(&p).map(|s| (s, p)))
            .collect();
        if files.is_empty() {
            continue;
        }
        files.sort();
        let name = entry.file_name().to_string_lossy().into_owned();
        groups.push((name, files.into_iter().map(|(_, p)| p).collect()));
    }
    let rank = |name: &str| {
        Method::ALL
            .iter()
            .position(|m| m.name() == name)
            .unwrap_or(Method::ALL.len())
    };
    groups.sort_by(|a, b| (rank(&a.0), &a.0).cmp(&(rank(&b.0), &b.0)));
    if groups.is_empty() {
        return Err(ExperimentError::Config(format!(
            "no <method>/seed_<n>.csv files under {}",
            runs.display()
        )));
    }
    Ok(groups)
}

pub fn summarize_runs(runs: &Path, top_k: usize) -> Result<SummaryReport> {
    summarize(&discover_runs(runs)?, top_k)
}

impl SummaryReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(path, json + "\n").map_err(|e| ExperimentError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Metrics {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn boost(&self, name: &str) -> Option<&BoostRow> {
        self.boosts.iter().find(|b| b.method == name)
    }
}

impl fmt::Display for SummaryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:>6} {:>12} {:>12} {:>10}", "method", "seeds", "peak (%)", "delta (pp)", "boost (%)")?;
        for (m, b) in self.methods.iter().zip(&self.boosts) {
            let show = |v: Option<f64>| v.map(|x| format!("{x:+.2}")).unwrap_or_else(|| "-".into());
            writeln!(
                f,
                "{:<16} {:>6} {:>12.2} {:>12} {:>10}",
                m.method,
                m.files.len(),
                100.0 * m.peak,
                show(b.delta_pp),
                show(b.boost_percent)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_examples() {
        assert!((top_k_mean(&[0.1, 0.9, 0.8, 0.2], 2) - 0.85).abs() < 1e-15);
        assert_eq!(top_k_mean(&[0.3], 10), 0.3);
        assert!((peak_metric(&[vec![0.5, 0.7], vec![0.9, 0.1]], 1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn boost_examples() {
        assert!((boost_metric(0.18, 0.15).unwrap() - 20.0).abs() < 1e-9);
        assert!(matches!(boost_metric(1.0, 0.0), Err(ExperimentError::UndefinedBoost)));
    }
}

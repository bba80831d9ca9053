use std::fs;
use std::path::{Path, PathBuf};

use dropcurve_core::data::{BatchStream, Dataset};
use dropcurve_core::dropout::{RetainGroup, RetainGroupConfig};
use dropcurve_core::nn::{accuracy, adam_step, argmax_rows, AdamState, CnnSpec, DropoutPass, MlpSpec, Network};
use dropcurve_core::rng::{stream, Stream};
use dropcurve_core::schedule::Schedule;
use serde::{Deserialize, Serialize};

use crate::config::{Architecture, Method, RunConfig};
use crate::data::{load_splits, Splits};
use crate::error::{ExperimentError, Result};

pub const CSV_HEADER: [&str; 8] = [
    "step",
    "train_loss",
    "train_acc",
    "test_acc",
    "theta_input",
    "theta_conv",
    "theta_fc",
    "theta_hidden",
];

/// One gradient update. `test_acc` is only present at evaluation steps and
/// `theta` only for groups the network actually drops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    /// Input, conv, fc, hidden.
    pub theta: [Option<f64>; 4],
}

impl MetricsRecord {
    pub fn theta_of(&self, group: RetainGroup) -> Option<f64> {
        let idx = RetainGroup::DROPPABLE.iter().position(|&g| g == group)?;
        self.theta[idx]
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_to_csv(records: &[MetricsRecord]) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for r in records {
        let mut fields = vec![
            r.step.to_string(),
            r.train_loss.to_string(),
            r.train_acc.to_string(),
            opt(r.test_acc),
        ];
        fields.extend(r.theta.iter().map(|&t| opt(t)));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| ExperimentError::io(parent, e))?;
    }
    fs::write(path, metrics_to_csv(records)).map_err(|e| ExperimentError::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let bad = |message: String| ExperimentError::Metrics {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = reader.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(bad(format!("unexpected header '{}'", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut records = Vec::new();
    for (row, result) in reader.records().enumerate() {
        let rec = result.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| -> Result<Option<f64>> {
            let s = rec.get(i).unwrap_or("");
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| bad(format!("row {}: cannot parse '{s}' in column {}", row + 1, CSV_HEADER[i])))
        };
        let required = |i: usize| -> Result<f64> {
            field(i)?.ok_or_else(|| bad(format!("row {}: empty {}", row + 1, CSV_HEADER[i])))
        };
        let step = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("row {}: bad step", row + 1)))?;
        records.push(MetricsRecord {
            step,
            train_loss: required(1)?,
            train_acc: required(2)?,
            test_acc: field(3)?,
            theta: [field(4)?, field(5)?, field(6)?, field(7)?],
        });
    }
    Ok(records)
}

pub fn build_network(cfg: &RunConfig, sample_shape: &[usize], classes: usize, seed: u64) -> Result<Network> {
    let mut rng = stream(seed, Stream::Init);
    let mut net = match cfg.architecture {
        Architecture::Mlp => {
            let spec = MlpSpec {
                input_shape: sample_shape.to_vec(),
                hidden: cfg.mlp_hidden.clone(),
                classes,
            };
            Network::mlp(&spec, cfg.layer_size_mode, &cfg.retain, &mut rng)?
        }
        Architecture::Cnn1 | Architecture::Cnn2 => {
            let mut spec = if cfg.architecture == Architecture::Cnn1 {
                CnnSpec::cnn1(sample_shape, classes)
            } else {
                CnnSpec::cnn2(sample_shape, classes)
            };
            if let Some(c) = &cfg.cnn_channels {
                spec.channels = c.clone();
            }
            if let Some(f) = &cfg.cnn_fc {
                spec.fc = f.clone();
            }
            if let Some(k) = cfg.cnn_kernel {
                spec.kernel = k;
            }
            Network::cnn(&spec, cfg.layer_size_mode, &cfg.retain, &mut rng)?
        }
    };
    net.set_dropout_convention(cfg.convention, cfg.retain);
    Ok(net)
}

/// Per-group schedules for the groups `net` drops, in `DROPPABLE` order.
fn group_schedules(cfg: &RunConfig, net: &Network, train_len: usize) -> Result<Vec<(RetainGroup, Schedule)>> {
    let present = net.dropout_groups();
    RetainGroup::DROPPABLE
        .into_iter()
        .filter(|g| present.contains(g))
        .map(|g| Ok((g, cfg.group_schedule(g, train_len)?)))
        .collect()
}

fn is_eval_step(cfg: &RunConfig, t: u64) -> bool {
    (t + 1).is_multiple_of(cfg.eval_every) || t + 1 == cfg.total_updates
}

/// Result of one seed: the records up to completion or divergence.
pub struct SeedOutcome {
    pub records: Vec<MetricsRecord>,
    pub diverged_at: Option<u64>,
}

/// Trains one seed for `T` updates. Initial weights, batch order and masks
/// come from separate streams of `seed`, so runs that differ only in
/// their schedule see identical weights and data order.
pub fn train_seed(cfg: &RunConfig, splits: &Splits, seed: u64) -> Result<SeedOutcome> {
    let train: &Dataset = &splits.train;
    let classes = train.num_classes.max(splits.test.num_classes);
    let mut net = build_network(cfg, train.sample_shape(), classes, seed)?;
    let schedules = group_schedules(cfg, &net, train.len())?;
    let mut adam = AdamState::new(net.params());
    let mut batches = BatchStream::new(train.len(), cfg.batch_size)?;
    let mut data_rng = stream(seed, Stream::DataOrder);
    let mut mask_rng = stream(seed, Stream::Masks);

    let mut records = Vec::with_capacity(cfg.total_updates as usize);
    for t in 0..cfg.total_updates {
        let mut thetas = RetainGroupConfig::uniform(1.0);
        let mut logged = [None; 4];
        for (group, schedule) in &schedules {
            let theta = schedule.at_step(t);
            thetas.set(*group, theta);
            logged[RetainGroup::DROPPABLE.iter().position(|g| g == group).unwrap()] = Some(theta);
        }
        let idx = batches.next_batch(&mut data_rng);
        let (x, y) = train.batch(&idx);
        let step = net.loss_and_gradients(
            &x,
            &y,
            DropoutPass::Sample {
                thetas,
                rng: &mut mask_rng,
            },
        );
        let (loss, logits, grads) = match step {
            Ok(out) if out.0.is_finite() => out,
            Ok(_) | Err(dropcurve_core::Error::NonFinite(_)) => {
                records.push(MetricsRecord {
                    step: t,
                    train_loss: f64::NAN,
                    train_acc: 0.0,
                    test_acc: None,
                    theta: logged,
                });
                return Ok(SeedOutcome {
                    records,
                    diverged_at: Some(t),
                });
            }
            Err(e) => return Err(e.into()),
        };
        adam_step(&mut net.params_mut(), &grads, &mut adam, cfg.learning_rate)?;
        let train_acc = accuracy(&argmax_rows(&logits), &y);
        let test_acc = if is_eval_step(cfg, t) {
            // Classic-convention evaluation scales by the floors set in
            // `build_network`; inverted dropout needs no scaling.
            Some(net.accuracy(&splits.test.images, &splits.test.labels)?)
        } else {
            None
        };
        records.push(MetricsRecord {
            step: t,
            train_loss: loss,
            train_acc,
            test_acc,
            theta: logged,
        });
    }
    Ok(SeedOutcome {
        records,
        diverged_at: None,
    })
}

pub fn method_dir(out_dir: &Path, method: Method) -> PathBuf {
    out_dir.join(method.name())
}

pub fn seed_file(out_dir: &Path, method: Method, seed: u64) -> PathBuf {
    method_dir(out_dir, method).join(format!("seed_{seed}.csv"))
}

/// Trains every configured seed on already loaded data and writes
/// `out_dir/<method>/seed_<n>.csv`. A diverged seed still gets its file
/// (ending in a `NaN` loss row) before the error is returned.
pub fn run_with_data(cfg: &RunConfig, splits: &Splits) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut paths = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let outcome = train_seed(cfg, splits, seed)?;
        let path = seed_file(&cfg.out_dir, cfg.method, seed);
        write_metrics(&path, &outcome.records)?;
        if let Some(step) = outcome.diverged_at {
            return Err(ExperimentError::NonFiniteLoss {
                method: cfg.method.name().into(),
                seed,
                step,
            });
        }
        paths.push(path);
    }
    Ok(paths)
}

/// Validates `cfg`, loads its data and trains every seed.
pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let splits = load_splits(cfg)?;
    // Catch architecture/data mismatches before any training.
    build_network(cfg, splits.train.sample_shape(), splits.train.num_classes, 0)?;
    if cfg.method == Method::Switch {
        cfg.resolved_switch_step(splits.train.len())?;
    }
    run_with_data(cfg, &splits)
}

//! Run configuration and its flat `key = value` file format.
//!
//! ```text
//! # MLP on a 6000/1000 MNIST subset
//! architecture = mlp
//! schedule.variant = curriculum
//! schedule.T = 3000
//! schedule.theta_bar.hidden = 0.5
//! data.train_subset = 6000
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dropcurve_core::dropout::{DropoutConvention, RetainGroup, RetainGroupConfig};
use dropcurve_core::nn::LayerSizeMode;
use dropcurve_core::schedule::{gamma_heuristic, Schedule, ScheduleVariant};
use serde::{Deserialize, Serialize};

use crate::error::{ExperimentError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Mlp,
    Cnn1,
    Cnn2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mnist,
    DoubleMnist,
    Blobs,
}

/// A training regime: which schedule drives the dropout layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// No unit is ever suppressed.
    None,
    Constant,
    Curriculum,
    Anti,
    Switch,
    Polynomial,
    PowerExponent,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::None,
        Method::Constant,
        Method::Curriculum,
        Method::Anti,
        Method::Switch,
        Method::Polynomial,
        Method::PowerExponent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Constant => "constant",
            Method::Curriculum => "curriculum",
            Method::Anti => "anti",
            Method::Switch => "switch",
            Method::Polynomial => "polynomial",
            Method::PowerExponent => "power_exponent",
        }
    }

    pub fn variant(self) -> ScheduleVariant {
        match self {
            Method::None | Method::Constant => ScheduleVariant::Constant,
            Method::Curriculum => ScheduleVariant::ExpCurriculum,
            Method::Anti => ScheduleVariant::LinearAnti,
            Method::Switch => ScheduleVariant::Switch,
            Method::Polynomial => ScheduleVariant::Polynomial,
            Method::PowerExponent => ScheduleVariant::PowerExponent,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = ExperimentError;

    /// Accepts method names and schedule variant names.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(m) = Method::ALL.into_iter().find(|m| m.name() == s) {
            return Ok(m);
        }
        match s {
            "exp_curriculum" => Ok(Method::Curriculum),
            "linear_anti" | "anti_curriculum" => Ok(Method::Anti),
            _ => Err(ExperimentError::Config(format!("unknown method '{s}'"))),
        }
    }
}

/// Parses a comma-separated method list such as `none,constant,curriculum`.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: Method = item.parse()?;
        if out.contains(&m) {
            return Err(ExperimentError::Config(format!("method '{m}' listed twice")));
        }
        out.push(m);
    }
    if out.is_empty() {
        return Err(ExperimentError::Config("no methods given".into()));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobsConfig {
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
    pub separation: f64,
}

impl Default for BlobsConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            per_class: 100,
            test_per_class: 100,
            dim: 8,
            separation: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub architecture: Architecture,
    pub dataset: DatasetKind,
    pub method: Method,
    /// Floors per retain group; the schedule shape is shared by all groups.
    pub retain: RetainGroupConfig,
    /// Decay rate of the exponential schedules; `10 / T` when unset.
    pub gamma: Option<f64>,
    pub degree: u32,
    pub alpha: u32,
    /// First update with dropout for the switch method; ten epochs when unset.
    pub switch_step: Option<u64>,
    pub layer_size_mode: LayerSizeMode,
    pub convention: DropoutConvention,
    pub total_updates: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seeds: Vec<u64>,
    pub eval_every: u64,
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub double_mnist_train: usize,
    pub double_mnist_test: usize,
    pub blobs: BlobsConfig,
    pub mlp_hidden: Vec<usize>,
    pub cnn_channels: Option<Vec<usize>>,
    pub cnn_fc: Option<Vec<usize>>,
    pub cnn_kernel: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::Mlp,
            dataset: DatasetKind::Mnist,
            method: Method::Curriculum,
            retain: RetainGroupConfig::MLP,
            gamma: None,
            degree: 2,
            alpha: 2,
            switch_step: None,
            layer_size_mode: LayerSizeMode::N,
            convention: DropoutConvention::Inverted,
            total_updates: 3000,
            batch_size: 128,
            learning_rate: 1e-4,
            seeds: (0..10).collect(),
            eval_every: 50,
            train_subset: None,
            test_subset: None,
            double_mnist_train: 6000,
            double_mnist_test: 1000,
            blobs: BlobsConfig::default(),
            mlp_hidden: vec![256, 256],
            cnn_channels: None,
            cnn_fc: None,
            cnn_kernel: None,
            data_dir: None,
            out_dir: PathBuf::from("runs"),
        }
    }
}

fn invalid(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| ExperimentError::Parse {
        line,
        message: format!("cannot parse '{value}' for {key}"),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str, line: usize) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|v| parse_value(key, v, line))
        .collect()
}

/// `0..5` (half-open) or a comma-separated list.
fn parse_seeds(value: &str, line: usize) -> Result<Vec<u64>> {
    if let Some((lo, hi)) = value.split_once("..") {
        let lo: u64 = parse_value("train.seeds", lo.trim(), line)?;
        let hi: u64 = parse_value("train.seeds", hi.trim(), line)?;
        return Ok((lo..hi).collect());
    }
    parse_list("train.seeds", value, line)
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        text.parse()
    }

    /// Builds a config from `key = value` pairs, `(line, key, value)`.
    fn from_entries(entries: &BTreeMap<String, (usize, String)>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let get = |k: &str| entries.get(k).map(|(l, v)| (*l, v.as_str()));

        if let Some((line, v)) = get("architecture") {
            cfg.architecture = match v {
                "mlp" => Architecture::Mlp,
                "cnn1" => Architecture::Cnn1,
                "cnn2" => Architecture::Cnn2,
                _ => return Err(ExperimentError::Parse { line, message: format!("unknown architecture '{v}'") }),
            };
        }
        if cfg.architecture != Architecture::Mlp {
            cfg.retain = RetainGroupConfig::CNN;
        }
        if let Some((line, v)) = get("dataset") {
            cfg.dataset = match v {
                "mnist" => DatasetKind::Mnist,
                "double_mnist" => DatasetKind::DoubleMnist,
                "blobs" => DatasetKind::Blobs,
                _ => return Err(ExperimentError::Parse { line, message: format!("unknown dataset '{v}'") }),
            };
        }
        if let Some((_, v)) = get("schedule.variant").or(get("method")) {
            cfg.method = v.parse()?;
        }
        if let Some((line, v)) = get("schedule.theta_bar") {
            cfg.retain = RetainGroupConfig::uniform(parse_value("schedule.theta_bar", v, line)?);
        }
        for group in RetainGroup::DROPPABLE {
            let a = format!("schedule.theta_bar.{group}");
            let b = format!("dropout.retain.{group}");
            let va = get(&a).map(|(l, v)| parse_value::<f64>(&a, v, l)).transpose()?;
            let vb = get(&b).map(|(l, v)| parse_value::<f64>(&b, v, l)).transpose()?;
            if let (Some(x), Some(y)) = (va, vb) {
                if x != y {
                    return Err(invalid(format!("{a} = {x} disagrees with {b} = {y}")));
                }
            }
            if let Some(theta) = va.or(vb) {
                cfg.retain.set(group, theta);
            }
        }
        if let Some((line, v)) = get("schedule.gamma") {
            cfg.gamma = Some(parse_value("schedule.gamma", v, line)?);
        }
        if let Some((line, v)) = get("schedule.delta") {
            cfg.degree = parse_value("schedule.delta", v, line)?;
        }
        if let Some((line, v)) = get("schedule.alpha") {
            cfg.alpha = parse_value("schedule.alpha", v, line)?;
        }
        if let Some((line, v)) = get("schedule.switch_step") {
            cfg.switch_step = Some(parse_value("schedule.switch_step", v, line)?);
        }
        let t_schedule = get("schedule.T").map(|(l, v)| parse_value::<u64>("schedule.T", v, l)).transpose()?;
        let t_train = get("train.total_updates")
            .map(|(l, v)| parse_value::<u64>("train.total_updates", v, l))
            .transpose()?;
        if let (Some(a), Some(b)) = (t_schedule, t_train) {
            if a != b {
                return Err(invalid(format!("schedule.T = {a} disagrees with train.total_updates = {b}")));
            }
        }
        if let Some(t) = t_schedule.or(t_train) {
            cfg.total_updates = t;
        }
        if let Some((_, v)) = get("layer_size_mode") {
            cfg.layer_size_mode = v.parse()?;
        }
        if let Some((_, v)) = get("dropout.convention") {
            cfg.convention = v.parse()?;
        }
        if let Some((line, v)) = get("train.batch_size") {
            cfg.batch_size = parse_value("train.batch_size", v, line)?;
        }
        if let Some((line, v)) = get("train.learning_rate") {
            cfg.learning_rate = parse_value("train.learning_rate", v, line)?;
        }
        if let Some((line, v)) = get("train.seeds") {
            cfg.seeds = parse_seeds(v, line)?;
        }
        if let Some((line, v)) = get("train.eval_every") {
            cfg.eval_every = parse_value("train.eval_every", v, line)?;
        }
        if let Some((line, v)) = get("data.train_subset") {
            cfg.train_subset = Some(parse_value("data.train_subset", v, line)?);
        }
        if let Some((line, v)) = get("data.test_subset") {
            cfg.test_subset = Some(parse_value("data.test_subset", v, line)?);
        }
        if let Some((_, v)) = get("data.dir") {
            cfg.data_dir = Some(PathBuf::from(v));
        }
        if let Some((line, v)) = get("double_mnist.train_count") {
            cfg.double_mnist_train = parse_value("double_mnist.train_count", v, line)?;
        }
        if let Some((line, v)) = get("double_mnist.test_count") {
            cfg.double_mnist_test = parse_value("double_mnist.test_count", v, line)?;
        }
        if let Some((line, v)) = get("blobs.classes") {
            cfg.blobs.classes = parse_value("blobs.classes", v, line)?;
        }
        if let Some((line, v)) = get("blobs.per_class") {
            cfg.blobs.per_class = parse_value("blobs.per_class", v, line)?;
        }
        if let Some((line, v)) = get("blobs.test_per_class") {
            cfg.blobs.test_per_class = parse_value("blobs.test_per_class", v, line)?;
        }
        if let Some((line, v)) = get("blobs.dim") {
            cfg.blobs.dim = parse_value("blobs.dim", v, line)?;
        }
        if let Some((line, v)) = get("blobs.separation") {
            cfg.blobs.separation = parse_value("blobs.separation", v, line)?;
        }
        if let Some((line, v)) = get("mlp.hidden") {
            cfg.mlp_hidden = parse_list("mlp.hidden", v, line)?;
        }
        if let Some((line, v)) = get("cnn.channels") {
            cfg.cnn_channels = Some(parse_list("cnn.channels", v, line)?);
        }
        if let Some((line, v)) = get("cnn.fc") {
            cfg.cnn_fc = Some(parse_list("cnn.fc", v, line)?);
        }
        if let Some((line, v)) = get("cnn.kernel") {
            cfg.cnn_kernel = Some(parse_value("cnn.kernel", v, line)?);
        }
        if let Some((_, v)) = get("output.dir") {
            cfg.out_dir = PathBuf::from(v);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_updates == 0 {
            return Err(invalid("total updates T must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("at least one seed is required"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(invalid("seeds must be distinct"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.eval_every == 0 {
            return Err(invalid("eval_every must be at least 1"));
        }
        self.retain.validate()?;
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(invalid(format!("gamma {g} must be positive")));
            }
        }
        if self.degree == 0 {
            return Err(invalid("polynomial degree must be at least 1"));
        }
        if self.alpha < 2 {
            return Err(invalid("power-exponent alpha must be at least 2"));
        }
        if let Some(s) = self.switch_step {
            if s >= self.total_updates {
                return Err(invalid(format!("switch step {s} must be below T = {}", self.total_updates)));
            }
        }
        if self.train_subset == Some(0) || self.test_subset == Some(0) {
            return Err(invalid("subset sizes must be positive"));
        }
        if self.mlp_hidden.contains(&0) {
            return Err(invalid("hidden layer widths must be positive"));
        }
        if self.cnn_channels.as_ref().is_some_and(|c| c.is_empty() || c.contains(&0)) {
            return Err(invalid("cnn.channels must list positive sizes"));
        }
        if self.cnn_fc.as_ref().is_some_and(|f| f.contains(&0)) {
            return Err(invalid("cnn.fc sizes must be positive"));
        }
        if self.cnn_kernel == Some(0) {
            return Err(invalid("cnn.kernel must be positive"));
        }
        match self.dataset {
            DatasetKind::Blobs => {
                let b = &self.blobs;
                if b.classes < 2 || b.per_class == 0 || b.test_per_class == 0 || b.dim == 0 {
                    return Err(invalid("blobs need at least two classes and one sample per class"));
                }
                if b.classes > 2 * b.dim {
                    return Err(invalid(format!("{} blob classes need blobs.dim >= {}", b.classes, b.classes.div_ceil(2))));
                }
                if !(b.separation >= 0.0 && b.separation.is_finite()) {
                    return Err(invalid("blobs.separation must be finite and non-negative"));
                }
                if self.architecture != Architecture::Mlp {
                    return Err(invalid("blobs are vectors; use architecture = mlp"));
                }
            }
            DatasetKind::DoubleMnist => {
                if self.double_mnist_train == 0 || self.double_mnist_test == 0 {
                    return Err(invalid("double-MNIST counts must be positive"));
                }
            }
            DatasetKind::Mnist => {}
        }
        Ok(())
    }

    /// Update at which the switch method turns dropout on: the configured
    /// step, or ten epochs of `train_len` samples.
    pub fn resolved_switch_step(&self, train_len: usize) -> Result<u64> {
        let step = match self.switch_step {
            Some(s) => s,
            None => 10 * train_len.div_ceil(self.batch_size) as u64,
        };
        if step >= self.total_updates {
            return Err(invalid(format!(
                "switch step {step} (ten epochs) is not below T = {}; set schedule.switch_step",
                self.total_updates
            )));
        }
        Ok(step)
    }

    /// Schedule with the configured shape and the given floor.
    pub fn schedule_with_floor(&self, theta_bar: f64, train_len: usize) -> Result<Schedule> {
        let t = self.total_updates;
        let gamma = match self.gamma {
            Some(g) => g,
            None => gamma_heuristic(t)?,
        };
        let schedule = match self.method {
            Method::None => Schedule::constant(1.0, t)?,
            Method::Constant => Schedule::constant(theta_bar, t)?,
            Method::Curriculum => Schedule::exp_curriculum(theta_bar, gamma, t)?,
            Method::Anti => Schedule::linear_anti(theta_bar, t)?,
            Method::Switch => Schedule::switch(theta_bar, self.resolved_switch_step(train_len)?, t)?,
            Method::Polynomial => Schedule::polynomial(theta_bar, self.degree, t)?,
            Method::PowerExponent => Schedule::power_exponent(theta_bar, gamma, self.alpha, t)?,
        };
        Ok(schedule)
    }

    /// Schedule driving the dropout layers of `group`.
    pub fn group_schedule(&self, group: RetainGroup, train_len: usize) -> Result<Schedule> {
        self.schedule_with_floor(self.retain.get(group), train_len)
    }

    pub fn with_method(&self, method: Method) -> Self {
        Self {
            method,
            ..self.clone()
        }
    }
}

impl FromStr for RunConfig {
    type Err = ExperimentError;

    fn from_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ExperimentError::Parse {
                line,
                message: format!("expected 'key = value', got '{content}'"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) && !is_group_key(key) {
                return Err(ExperimentError::Parse {
                    line,
                    message: format!("unknown key '{key}'"),
                });
            }
            if entries.insert(key.to_string(), (line, value.to_string())).is_some() {
                return Err(ExperimentError::Parse {
                    line,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }
        Self::from_entries(&entries)
    }
}

const KNOWN_KEYS: &[&str] = &[
    "architecture",
    "dataset",
    "method",
    "layer_size_mode",
    "schedule.variant",
    "schedule.theta_bar",
    "schedule.gamma",
    "schedule.T",
    "schedule.switch_step",
    "schedule.delta",
    "schedule.alpha",
    "dropout.convention",
    "train.total_updates",
    "train.batch_size",
    "train.learning_rate",
    "train.seeds",
    "train.eval_every",
    "data.train_subset",
    "data.test_subset",
    "data.dir",
    "double_mnist.train_count",
    "double_mnist.test_count",
    "blobs.classes",
    "blobs.per_class",
    "blobs.test_per_class",
    "blobs.dim",
    "blobs.separation",
    "mlp.hidden",
    "cnn.channels",
    "cnn.fc",
    "cnn.kernel",
    "output.dir",
];

fn is_group_key(key: &str) -> bool {
    ["schedule.theta_bar.", "dropout.retain."].iter().any(|prefix| {
        key.strip_prefix(prefix)
            .and_then(|g| g.parse::<RetainGroup>().ok())
            .is_some_and(|g| g != RetainGroup::None)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg: RunConfig = "
            # comment line
            architecture = cnn1
            schedule.variant = anti   # trailing comment
            schedule.theta_bar.fc = 0.4
            dropout.retain.input = 0.95
            schedule.T = 500
            train.seeds = 3..6
        "
        .parse()
        .unwrap();
        assert_eq!(cfg.architecture, Architecture::Cnn1);
        assert_eq!(cfg.method, Method::Anti);
        assert_eq!(cfg.retain, RetainGroupConfig::new(0.95, 0.75, 0.4, 0.5).unwrap());
        assert_eq!(cfg.total_updates, 500);
        assert_eq!(cfg.seeds, vec![3, 4, 5]);
        assert_eq!(cfg.batch_size, 128);
        assert_eq!(cfg.learning_rate, 1e-4);
    }

    #[test]
    fn rejects_inconsistent_or_unknown_keys() {
        for text in [
            "schedule.T = 10\ntrain.total_updates = 20",
            "train.batch_size = 0",
            "train.seeds = 4..4",
            "bogus = 1",
            "schedule.theta_bar.none = 0.5",
            "schedule.theta_bar.fc = 0.5\ndropout.retain.fc = 0.6",
            "schedule.theta_bar.fc = 1.5",
            "train.eval_every = 5\ntrain.eval_every = 6",
            "no equals sign",
            "dataset = blobs\narchitecture = cnn1",
            "schedule.switch_step = 3000",
        ] {
            assert!(text.parse::<RunConfig>().is_err(), "{text}");
        }
        assert!("schedule.T = 10\ntrain.total_updates = 10".parse::<RunConfig>().is_ok());
    }

    #[test]
    fn group_schedules_share_shape() {
        let cfg: RunConfig = "schedule.T = 1000".parse().unwrap();
        let hidden = cfg.group_schedule(RetainGroup::Hidden, 6000).unwrap();
        let input = cfg.group_schedule(RetainGroup::Input, 6000).unwrap();
        assert_eq!(hidden.at_step(0), 1.0);
        assert_eq!(input.at_step(0), 1.0);
        assert_eq!(hidden.theta_bar, 0.5);
        assert_eq!(input.theta_bar, 0.8);
        assert_eq!(hidden.gamma, input.gamma);
        let none = cfg.with_method(Method::None).group_schedule(RetainGroup::Hidden, 6000).unwrap();
        assert_eq!(none.at_step(999), 1.0);
    }

    #[test]
    fn default_switch_is_ten_epochs() {
        let cfg: RunConfig = "schedule.variant = switch".parse().unwrap();
        assert_eq!(cfg.resolved_switch_step(6000).unwrap(), 470);
        assert!(cfg.resolved_switch_step(60000).is_err());
    }

    #[test]
    fn method_lists() {
        assert_eq!(
            parse_methods("none, constant,curriculum").unwrap(),
            vec![Method::None, Method::Constant, Method::Curriculum]
        );
        assert!(parse_methods("none,none").is_err());
        assert!(parse_methods("").is_err());
        assert!(parse_methods("dropconnect").is_err());
    }
}

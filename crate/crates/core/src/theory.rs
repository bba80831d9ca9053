//! Exact corruption distributions induced by Bernoulli input masking.
//!
//! A corrupted example is identified by the pair `(z0, i)`: the clean base
//! example `z0` and the number `i` of zeroed entries in its `d`-dimensional
//! mask. At learning time `lambda` (training step `lambda * T`) with retain
//! probability `theta`,
//!
//! ```text
//! Q_lambda(z0, i) = C(d, i) (1 - theta)^i theta^(d - i) pi(z0)
//! ```
//!
//! Enumeration over `(z0, i)` costs `m * (d + 1)` atoms instead of `m * 2^d`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dropout::sample_mask;
use crate::error::{Error, Result};
use crate::schedule::{classify_schedule, Schedule, ScheduleKind};

/// Largest input dimension enumerated by [`CorruptionDistribution`].
pub const MAX_ENUM_DIM: usize = 20;
/// Largest `d` for which binomial coefficients are computed exactly.
pub const MAX_BINOMIAL_DIM: usize = 64;
/// Tolerance for entropy comparisons between grid points.
pub const ENTROPY_TOL: f64 = 1e-12;

/// Exact `C(n, k)` for `n <= 64`.
pub fn binomial(n: usize, k: usize) -> Result<u64> {
    if n > MAX_BINOMIAL_DIM {
        return Err(Error::Capacity(format!("binomial coefficient for n = {n} > {MAX_BINOMIAL_DIM}")));
    }
    if k > n {
        return Err(Error::Input(format!("k = {k} exceeds n = {n}")));
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        // acc * (n - j) is divisible by (j + 1) at every step.
        acc = acc * (n - j) as u128 / (j + 1) as u128;
    }
    Ok(acc as u64)
}

/// Probability that a `d`-entry Bernoulli(`theta`) mask has exactly `i` zeros.
pub fn mask_count_probability(d: usize, i: usize, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Input(format!("theta {theta} outside (0, 1]")));
    }
    if i > d {
        return Err(Error::Input(format!("zero count {i} outside [0, {d}]")));
    }
    let c = binomial(d, i)? as f64;
    Ok(c * (1.0 - theta).powi(i as i32) * theta.powi((d - i) as i32))
}

/// The clean-example distribution `pi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseDistribution {
    probs: Vec<f64>,
}

impl BaseDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Input("base distribution has empty support".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Input("base probabilities must be finite and non-negative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!("base probabilities sum to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Input("uniform distribution over zero examples".into()));
        }
        Ok(Self {
            probs: vec![1.0 / m as f64; m],
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, z0: usize) -> f64 {
        self.probs[z0]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Inverse-CDF draw of a base example.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (z0, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return z0;
            }
        }
        self.probs.len() - 1
    }
}

/// Exact distribution over `(z0, i)` atoms at one learning time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionDistribution {
    pub d: usize,
    pub lambda: f64,
    pub theta: f64,
    /// Atom probabilities, `z0`-major: index `z0 * (d + 1) + i`.
    atoms: Vec<f64>,
}

impl CorruptionDistribution {
    /// Enumerates every atom for retain probability `theta` (the value of the
    /// schedule at `lambda * T`). `d` is limited to [`MAX_ENUM_DIM`].
    pub fn new(pi: &BaseDistribution, d: usize, theta: f64, lambda: f64) -> Result<Self> {
        if d > MAX_ENUM_DIM {
            return Err(Error::Capacity(format!(
                "exhaustive enumeration supports d <= {MAX_ENUM_DIM}, got {d}"
            )));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Input(format!("learning time {lambda} outside [0, 1]")));
        }
        let counts = (0..=d)
            .map(|i| mask_count_probability(d, i, theta))
            .collect::<Result<Vec<_>>>()?;
        let atoms = pi
            .probs()
            .iter()
            .flat_map(|&p| counts.iter().map(move |&c| c * p))
            .collect();
        Ok(Self {
            d,
            lambda,
            theta,
            atoms,
        })
    }

    /// `Q_lambda` with `theta = schedule(lambda * T)`.
    pub fn at_learning_time(pi: &BaseDistribution, d: usize, schedule: &Schedule, lambda: f64) -> Result<Self> {
        let theta = schedule.retain_probability(lambda * schedule.total_updates as f64)?;
        Self::new(pi, d, theta, lambda)
    }

    pub fn atom(&self, z0: usize, i: usize) -> f64 {
        self.atoms[z0 * (self.d + 1) + i]
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn num_base(&self) -> usize {
        self.atoms.len() / (self.d + 1)
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().sum()
    }

    pub fn normalization_error(&self) -> f64 {
        (self.total_mass() - 1.0).abs()
    }
}

/// Ratio `Q_lambda(z0, i) / P(z0, i)` where `P` uses the floor `theta_bar`.
pub fn difficulty_weight(
    pi: &BaseDistribution,
    d: usize,
    z0: usize,
    i: usize,
    theta_lambda: f64,
    theta_bar: f64,
) -> Result<f64> {
    if z0 >= pi.len() {
        return Err(Error::Input(format!("base example {z0} outside support of size {}", pi.len())));
    }
    let p = mask_count_probability(d, i, theta_bar)? * pi.prob(z0);
    if p == 0.0 {
        return Err(Error::UndefinedWeight(format!(
            "target atom ({z0}, {i}) has zero probability at theta_bar = {theta_bar}"
        )));
    }
    let q = mask_count_probability(d, i, theta_lambda)? * pi.prob(z0);
    Ok(q / p)
}

/// `-sum p ln p` over the atoms, in nats.
pub fn shannon_entropy(q: &CorruptionDistribution) -> f64 {
    entropy_nats(q.atoms())
}

pub fn entropy_nats(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Expected ordering of `H(Q_lambda)` along the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyTrend {
    NonDecreasing,
    NonIncreasing,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum EntropyClause {
    /// Every adjacent pair respects `expected`; `violations` lists the
    /// offending left grid indices otherwise.
    Checked {
        expected: EntropyTrend,
        violations: Vec<usize>,
    },
    /// The clause does not apply (floor below 0.5, or an irregular schedule).
    Skipped { reason: String },
}

impl EntropyClause {
    pub fn passed(&self) -> bool {
        matches!(self, EntropyClause::Checked { violations, .. } if violations.is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub lambda: f64,
    pub theta: f64,
    pub entropy_nats: f64,
    pub normalization_error: f64,
}

impl GridRow {
    pub fn entropy_bits(&self) -> f64 {
        self.entropy_nats / std::f64::consts::LN_2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumReport {
    pub d: usize,
    pub kind: ScheduleKind,
    pub rows: Vec<GridRow>,
    /// Largest normalization error over the grid.
    pub max_normalization_error: f64,
    pub normalization_ok: bool,
    pub entropy: EntropyClause,
    /// Largest atomwise gap between `Q_1` and the target `P`.
    pub target_gap: f64,
    pub target_matches: bool,
    /// Per adjacent grid pair: whether every defined difficulty weight is
    /// non-decreasing. Informational only.
    pub weight_monotone: Vec<bool>,
}

impl CurriculumReport {
    pub fn passed(&self) -> bool {
        let entropy_ok = match &self.entropy {
            EntropyClause::Checked { violations, .. } => violations.is_empty(),
            EntropyClause::Skipped { .. } => true,
        };
        self.normalization_ok && entropy_ok && self.target_matches
    }
}

/// Evaluates the curriculum properties of `schedule` at every `lambda` of an
/// ascending grid in `[0, 1]`.
///
/// The target `P` is `Q_1`, i.e. the distribution at `theta(T)`.
pub fn verify_curriculum_properties(
    pi: &BaseDistribution,
    d: usize,
    schedule: &Schedule,
    lambda_grid: &[f64],
) -> Result<CurriculumReport> {
    if lambda_grid.is_empty() || lambda_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Input("lambda grid must be non-empty and strictly ascending".into()));
    }
    if lambda_grid[0] < 0.0 || *lambda_grid.last().unwrap() > 1.0 {
        return Err(Error::Input("lambda grid must lie in [0, 1]".into()));
    }
    let total = schedule.total_updates as f64;
    let times: Vec<f64> = lambda_grid.iter().map(|l| l * total).collect();
    let kind = classify_schedule(schedule, &times)?.kind;

    let dists = lambda_grid
        .iter()
        .map(|&l| CorruptionDistribution::at_learning_time(pi, d, schedule, l))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<GridRow> = dists
        .iter()
        .map(|q| GridRow {
            lambda: q.lambda,
            theta: q.theta,
            entropy_nats: shannon_entropy(q),
            normalization_error: q.normalization_error(),
        })
        .collect();
    let max_normalization_error = rows.iter().map(|r| r.normalization_error).fold(0.0, f64::max);

    let entropy = if schedule.theta_bar < 0.5 {
        EntropyClause::Skipped {
            reason: format!(
                "theta_bar = {} < 0.5: per-unit Bernoulli entropy is not monotone below 0.5",
                schedule.theta_bar
            ),
        }
    } else {
        let expected = match kind {
            ScheduleKind::Curriculum => Some(EntropyTrend::NonDecreasing),
            ScheduleKind::AntiCurriculum => Some(EntropyTrend::NonIncreasing),
            ScheduleKind::Constant => Some(EntropyTrend::Constant),
            ScheduleKind::Irregular => None,
        };
        match expected {
            None => EntropyClause::Skipped {
                reason: "schedule is neither curriculum, anti-curriculum nor constant".into(),
            },
            Some(expected) => {
                let violations = rows
                    .windows(2)
                    .enumerate()
                    .filter(|(_, w)| {
                        let delta = w[1].entropy_nats - w[0].entropy_nats;
                        match expected {
                            EntropyTrend::NonDecreasing => delta < -ENTROPY_TOL,
                            EntropyTrend::NonIncreasing => delta > ENTROPY_TOL,
                            EntropyTrend::Constant => delta.abs() > ENTROPY_TOL,
                        }
                    })
                    .map(|(k, _)| k)
                    .collect();
                EntropyClause::Checked { expected, violations }
            }
        }
    };

    let target = CorruptionDistribution::at_learning_time(pi, d, schedule, 1.0)?;
    let target_gap = match lambda_grid.last() {
        Some(&l) if l == 1.0 => dists
            .last()
            .unwrap()
            .atoms()
            .iter()
            .zip(target.atoms())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
        _ => f64::NAN,
    };

    let weights = |q: &CorruptionDistribution| -> Vec<Option<f64>> {
        q.atoms()
            .iter()
            .zip(target.atoms())
            .map(|(&a, &p)| if p > 0.0 { Some(a / p) } else { None })
            .collect()
    };
    let weight_monotone = dists
        .windows(2)
        .map(|w| {
            weights(&w[0])
                .into_iter()
                .zip(weights(&w[1]))
                .all(|pair| match pair {
                    (Some(a), Some(b)) => a <= b,
                    _ => true,
                })
        })
        .collect();

    Ok(CurriculumReport {
        d,
        kind,
        rows,
        max_normalization_error,
        normalization_ok: max_normalization_error <= 1e-12,
        entropy,
        target_gap,
        target_matches: target_gap <= 1e-15,
        weight_monotone,
    })
}

/// Monte-Carlo histogram of `(z0, i)` obtained by drawing `z0 ~ pi` and a
/// fresh `d`-entry mask per sample. Same `z0`-major layout as the atoms.
pub fn sample_histogram<R: Rng + ?Sized>(
    pi: &BaseDistribution,
    d: usize,
    theta: f64,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; pi.len() * (d + 1)];
    for _ in 0..draws {
        let z0 = pi.sample(rng);
        let zeros = if d == 0 {
            0
        } else {
            let m = sample_mask(&[d], theta, rng)?;
            d - m.kept()
        };
        counts[z0 * (d + 1) + zeros] += 1;
    }
    Ok(counts)
}

/// Largest standardized deviation `|count - N p| / sqrt(N p (1 - p))` over
/// atoms with `0 < p < 1`; atoms with `p == 0` must have zero count (reported
/// as infinity otherwise).
pub fn max_standardized_deviation(q: &CorruptionDistribution, counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let n = n as f64;
    q.atoms()
        .iter()
        .zip(counts)
        .map(|(&p, &c)| {
            let c = c as f64;
            if p <= 0.0 {
                if c > 0.0 { f64::INFINITY } else { 0.0 }
            } else if p >= 1.0 {
                if c == n { 0.0 } else { f64::INFINITY }
            } else {
                (c - n * p).abs() / (n * p * (1.0 - p)).sqrt()
            }
        })
        .fold(0.0, f64::max)
}

/// `n` equispaced learning times covering `[0, 1]`.
pub fn lambda_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|k| if k + 1 == n { 1.0 } else { k as f64 / (n - 1) as f64 })
            .collect(),
    }
}

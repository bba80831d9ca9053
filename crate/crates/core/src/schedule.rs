//! Retain-probability schedules `theta(t)`.
//!
//! `t` counts gradient updates. Every variant starts at or above its floor
//! `theta_bar` and stays within `[theta_bar, 1]`. The curriculum variants
//! start at exactly 1 (no suppression) and decay toward the floor; the
//! anti-curriculum variant ramps the other way.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of `T` at which the polynomial variant reaches its floor.
pub const POLYNOMIAL_FLOOR_AT: f64 = 0.8;

/// How close the last grid value must be to the floor for a decaying
/// schedule to count as converged.
pub const CONVERGENCE_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleVariant {
    Constant,
    ExpCurriculum,
    Polynomial,
    PowerExponent,
    Switch,
    LinearAnti,
}

impl ScheduleVariant {
    pub const ALL: [ScheduleVariant; 6] = [
        ScheduleVariant::Constant,
        ScheduleVariant::ExpCurriculum,
        ScheduleVariant::Polynomial,
        ScheduleVariant::PowerExponent,
        ScheduleVariant::Switch,
        ScheduleVariant::LinearAnti,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::ExpCurriculum => "exp_curriculum",
            Self::Polynomial => "polynomial",
            Self::PowerExponent => "power_exponent",
            Self::Switch => "switch",
            Self::LinearAnti => "linear_anti",
        }
    }
}

impl fmt::Display for ScheduleVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown schedule variant '{s}'")))
    }
}

/// A retain-probability curve. Immutable once built.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub variant: ScheduleVariant,
    pub theta_bar: f64,
    /// Decay rate of the exponential variants.
    pub gamma: f64,
    /// Total number of gradient updates `T`.
    pub total_updates: u64,
    /// Polynomial degree.
    pub degree: u32,
    /// Exponent applied to time by the power-exponent variant.
    pub alpha: u32,
    /// First update with dropout for the switch variant.
    pub switch_step: u64,
}

impl Schedule {
    fn base(variant: ScheduleVariant, theta_bar: f64, total_updates: u64) -> Self {
        Self {
            variant,
            theta_bar,
            gamma: if total_updates > 0 { 10.0 / total_updates as f64 } else { 1.0 },
            total_updates,
            degree: 1,
            alpha: 2,
            switch_step: 0,
        }
    }

    pub fn constant(theta_bar: f64, total_updates: u64) -> Result<Self> {
        Self::base(ScheduleVariant::Constant, theta_bar, total_updates).validated()
    }

    /// `theta(t) = (1 - theta_bar) exp(-gamma t) + theta_bar`.
    pub fn exp_curriculum(theta_bar: f64, gamma: f64, total_updates: u64) -> Result<Self> {
        Self {
            gamma,
            ..Self::base(ScheduleVariant::ExpCurriculum, theta_bar, total_updates)
        }
        .validated()
    }

    /// `theta(t) = max(theta_bar, 1 - c t^degree)` with `c` chosen so the
    /// floor is hit at `0.8 T`.
    pub fn polynomial(theta_bar: f64, degree: u32, total_updates: u64) -> Result<Self> {
        Self {
            degree,
            ..Self::base(ScheduleVariant::Polynomial, theta_bar, total_updates)
        }
        .validated()
    }

    /// The exponential curve evaluated at `T (t/T)^alpha` instead of `t`, so
    /// `theta(T)` coincides with the exponential variant's value at `T`.
    pub fn power_exponent(theta_bar: f64, gamma: f64, alpha: u32, total_updates: u64) -> Result<Self> {
        Self {
            gamma,
            alpha,
            ..Self::base(ScheduleVariant::PowerExponent, theta_bar, total_updates)
        }
        .validated()
    }

    /// 1 before `switch_step`, `theta_bar` from then on.
    pub fn switch(theta_bar: f64, switch_step: u64, total_updates: u64) -> Result<Self> {
        Self {
            switch_step,
            ..Self::base(ScheduleVariant::Switch, theta_bar, total_updates)
        }
        .validated()
    }

    /// `theta_bar + (1 - theta_bar) min(t/T, 1)`.
    pub fn linear_anti(theta_bar: f64, total_updates: u64) -> Result<Self> {
        Self::base(ScheduleVariant::LinearAnti, theta_bar, total_updates).validated()
    }

    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_bar > 0.0 && self.theta_bar <= 1.0) {
            return Err(Error::Input(format!("theta_bar {} outside (0, 1]", self.theta_bar)));
        }
        if self.total_updates == 0 {
            return Err(Error::Input("total updates T must be positive".into()));
        }
        match self.variant {
            ScheduleVariant::ExpCurriculum | ScheduleVariant::PowerExponent
                if !(self.gamma > 0.0 && self.gamma.is_finite()) =>
            {
                Err(Error::Input(format!("gamma {} must be positive", self.gamma)))
            }
            ScheduleVariant::Polynomial if self.degree == 0 => {
                Err(Error::Input("polynomial degree must be positive".into()))
            }
            ScheduleVariant::PowerExponent if self.alpha < 2 => {
                Err(Error::Input(format!("alpha {} must be at least 2", self.alpha)))
            }
            _ => Ok(()),
        }
    }

    /// Same curve shape with a different floor.
    pub fn with_theta_bar(&self, theta_bar: f64) -> Result<Self> {
        Self { theta_bar, ..*self }.validated()
    }

    /// `theta(t)` at a possibly fractional time (e.g. `lambda * T`).
    pub fn retain_probability(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Input(format!("time {t} must be a finite non-negative number")));
        }
        Ok(self.eval(t))
    }

    /// `theta(t)` at an integer update count.
    pub fn at_step(&self, t: u64) -> f64 {
        self.eval(t as f64)
    }

    fn eval(&self, t: f64) -> f64 {
        let floor = self.theta_bar;
        let span = 1.0 - floor;
        let total = self.total_updates as f64;
        let theta = match self.variant {
            ScheduleVariant::Constant => floor,
            // 1 + (1 - floor) * (exp(-x) - 1) is exactly 1 at t = 0.
            ScheduleVariant::ExpCurriculum => 1.0 + span * (-self.gamma * t).exp_m1(),
            ScheduleVariant::PowerExponent => {
                let x = self.gamma * total * (t / total).powi(self.alpha as i32);
                1.0 + span * (-x).exp_m1()
            }
            ScheduleVariant::Polynomial => {
                let reach = POLYNOMIAL_FLOOR_AT * total;
                1.0 - span * (t / reach).powi(self.degree as i32)
            }
            ScheduleVariant::Switch => {
                if t < self.switch_step as f64 {
                    1.0
                } else {
                    floor
                }
            }
            ScheduleVariant::LinearAnti => floor + span * (t / total).min(1.0),
        };
        theta.clamp(floor, 1.0)
    }
}

/// `gamma = 10 / T`, which puts `theta(T)` within `1e-4` of the floor.
pub fn gamma_heuristic(total_updates: u64) -> Result<f64> {
    if total_updates == 0 {
        return Err(Error::Input("T must be at least 1".into()));
    }
    Ok(10.0 / total_updates as f64)
}

/// Scale `theta (1 - theta)` of the regularizer induced by dropout.
pub fn regularization_weight(theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Input(format!("theta {theta} outside (0, 1]")));
    }
    Ok(theta * (1.0 - theta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Curriculum,
    AntiCurriculum,
    Constant,
    /// Matches none of the three shapes on the given grid.
    Irregular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clause {
    StartsAtOne,
    NonIncreasing,
    StaysAboveFloor,
    ConvergesToFloor,
    NonDecreasing,
    ConstantValue,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseCheck {
    pub clause: Clause,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleClassification {
    pub kind: ScheduleKind,
    pub evidence: Vec<ClauseCheck>,
}

impl ScheduleClassification {
    pub fn holds(&self, clause: Clause) -> bool {
        self.evidence.iter().any(|c| c.clause == clause && c.satisfied)
    }
}

/// Checks the curriculum-function clauses numerically on `grid`, which must
/// be non-empty and ascending.
pub fn classify_schedule(schedule: &Schedule, grid: &[f64]) -> Result<ScheduleClassification> {
    if grid.is_empty() {
        return Err(Error::Input("classification grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Input("classification grid must be ascending".into()));
    }
    let values = grid
        .iter()
        .map(|&t| schedule.retain_probability(t))
        .collect::<Result<Vec<_>>>()?;
    let floor = schedule.theta_bar;
    let first = values[0];
    let last = *values.last().unwrap();

    let starts_at_one = grid[0] == 0.0 && first == 1.0;
    let non_increasing = values.windows(2).all(|w| w[1] <= w[0]);
    let non_decreasing = values.windows(2).all(|w| w[1] >= w[0]);
    let above_floor = values.iter().all(|&v| v >= floor);
    let converges = (last - floor).abs() <= CONVERGENCE_TOL;
    let constant = values.iter().all(|&v| v == first);

    let evidence = [
        (Clause::StartsAtOne, starts_at_one),
        (Clause::NonIncreasing, non_increasing),
        (Clause::StaysAboveFloor, above_floor),
        (Clause::ConvergesToFloor, converges),
        (Clause::NonDecreasing, non_decreasing),
        (Clause::ConstantValue, constant),
    ]
    .into_iter()
    .map(|(clause, satisfied)| ClauseCheck { clause, satisfied })
    .collect();

    let kind = if constant {
        ScheduleKind::Constant
    } else if starts_at_one && non_increasing && above_floor && converges {
        ScheduleKind::Curriculum
    } else if non_decreasing && last > first {
        ScheduleKind::AntiCurriculum
    } else {
        ScheduleKind::Irregular
    };
    Ok(ScheduleClassification { kind, evidence })
}

/// `n` equispaced points covering `[0, T]`.
pub fn uniform_grid(total_updates: u64, n: usize) -> Vec<f64> {
    let total = total_updates as f64;
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| if i + 1 == n { total } else { total * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exp_curriculum_examples() {
        let t_total = 10_000;
        for theta_bar in [0.5, 0.75, 0.9, 0.3] {
            let s = Schedule::exp_curriculum(theta_bar, gamma_heuristic(t_total).unwrap(), t_total).unwrap();
            assert_eq!(s.at_step(0), 1.0);
        }
        let s = Schedule::exp_curriculum(0.5, 10.0 / 1000.0, 1000).unwrap();
        assert!((s.at_step(1000) - 0.5).abs() < 1e-4);

        let s = Schedule::exp_curriculum(0.9, std::f64::consts::LN_2, 10).unwrap();
        assert!((s.at_step(1) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn linear_anti_midpoint() {
        let s = Schedule::linear_anti(0.5, 100).unwrap();
        assert_eq!(s.at_step(50), 0.75);
        assert_eq!(s.at_step(0), 0.5);
        assert_eq!(s.at_step(100), 1.0);
        assert_eq!(s.at_step(500), 1.0);
    }

    #[test]
    fn switch_and_constant() {
        let s = Schedule::switch(0.6, 30, 100).unwrap();
        assert_eq!(s.at_step(29), 1.0);
        assert_eq!(s.at_step(30), 0.6);
        assert_eq!(Schedule::constant(0.7, 100).unwrap().at_step(42), 0.7);
    }

    #[test]
    fn polynomial_reaches_floor_at_eight_tenths() {
        let s = Schedule::polynomial(0.5, 3, 1000).unwrap();
        assert_eq!(s.at_step(0), 1.0);
        assert!((s.at_step(800) - 0.5).abs() < 1e-12);
        assert!(s.at_step(799) > 0.5);
        assert_eq!(s.at_step(900), 0.5);
    }

    #[test]
    fn power_exponent_meets_band() {
        for alpha in 2..=10 {
            let s = Schedule::power_exponent(0.5, gamma_heuristic(5000).unwrap(), alpha, 5000).unwrap();
            assert_eq!(s.at_step(0), 1.0);
            assert!((s.at_step(5000) - 0.5).abs() < 1e-4);
        }
    }

    #[test]
    fn negative_time_is_an_input_error() {
        let s = Schedule::constant(0.5, 10).unwrap();
        assert!(matches!(s.retain_probability(-1.0), Err(Error::Input(_))));
        assert!(matches!(s.retain_probability(f64::NAN), Err(Error::Input(_))));
    }

    #[test]
    fn gamma_heuristic_examples() {
        assert!((gamma_heuristic(10_000).unwrap() - 1e-3).abs() < 1e-18);
        assert_eq!(gamma_heuristic(10).unwrap(), 1.0);
        assert!((gamma_heuristic(100_000).unwrap() - 1e-4).abs() < 1e-19);
        assert!(matches!(gamma_heuristic(0), Err(Error::Input(_))));
    }

    #[test]
    fn regularization_weight_examples() {
        assert_eq!(regularization_weight(1.0).unwrap(), 0.0);
        assert_eq!(regularization_weight(0.5).unwrap(), 0.25);
        assert!((regularization_weight(0.9).unwrap() - 0.09).abs() < 1e-15);
        assert!(regularization_weight(0.0).is_err());
        assert!(regularization_weight(1.01).is_err());
    }

    #[test]
    fn classification_examples() {
        let t_total = 1000;
        let grid = uniform_grid(t_total, 101);
        let exp = Schedule::exp_curriculum(0.5, gamma_heuristic(t_total).unwrap(), t_total).unwrap();
        assert_eq!(classify_schedule(&exp, &grid).unwrap().kind, ScheduleKind::Curriculum);
        let anti = Schedule::linear_anti(0.5, t_total).unwrap();
        assert_eq!(classify_schedule(&anti, &grid).unwrap().kind, ScheduleKind::AntiCurriculum);
        let constant = Schedule::constant(0.5, t_total).unwrap();
        let c = classify_schedule(&constant, &grid).unwrap();
        assert_eq!(c.kind, ScheduleKind::Constant);
        assert!(!c.holds(Clause::StartsAtOne));
        for s in [
            Schedule::polynomial(0.5, 4, t_total).unwrap(),
            Schedule::power_exponent(0.5, 0.01, 3, t_total).unwrap(),
            Schedule::switch(0.5, 300, t_total).unwrap(),
        ] {
            assert_eq!(classify_schedule(&s, &grid).unwrap().kind, ScheduleKind::Curriculum, "{s:?}");
        }
        // Too slow to reach the floor by T.
        let slow = Schedule::exp_curriculum(0.5, 1e-5, t_total).unwrap();
        let c = classify_schedule(&slow, &grid).unwrap();
        assert_eq!(c.kind, ScheduleKind::Irregular);
        assert!(!c.holds(Clause::ConvergesToFloor));
    }

    fn any_schedule() -> impl Strategy<Value = Schedule> {
        (0usize..6, 0.05f64..1.0, 10u64..5000, 1u32..8, 2u32..8, 0.0f64..1.0).prop_map(
            |(v, theta_bar, t_total, degree, alpha, frac)| {
                let gamma = gamma_heuristic(t_total).unwrap();
                match ScheduleVariant::ALL[v] {
                    ScheduleVariant::Constant => Schedule::constant(theta_bar, t_total),
                    ScheduleVariant::ExpCurriculum => Schedule::exp_curriculum(theta_bar, gamma, t_total),
                    ScheduleVariant::Polynomial => Schedule::polynomial(theta_bar, degree, t_total),
                    ScheduleVariant::PowerExponent => {
                        Schedule::power_exponent(theta_bar, gamma, alpha, t_total)
                    }
                    ScheduleVariant::Switch => {
                        Schedule::switch(theta_bar, (frac * t_total as f64) as u64, t_total)
                    }
                    ScheduleVariant::LinearAnti => Schedule::linear_anti(theta_bar, t_total),
                }
                .unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn values_stay_between_floor_and_one(s in any_schedule(), frac in 0.0f64..=1.0) {
            let theta = s.retain_probability(frac * s.total_updates as f64).unwrap();
            prop_assert!(theta >= s.theta_bar && theta <= 1.0);
        }

        #[test]
        fn exp_curriculum_strictly_decreasing_above_floor(theta_bar in 0.05f64..0.99, t_total in 10u64..100_000) {
            let s = Schedule::exp_curriculum(theta_bar, gamma_heuristic(t_total).unwrap(), t_total).unwrap();
            prop_assert_eq!(s.at_step(0), 1.0);
            let mut prev = s.at_step(0);
            for i in 1..=50u64 {
                let v = s.retain_probability(i as f64 * t_total as f64 / 50.0).unwrap();
                prop_assert!(v < prev);
                prop_assert!(v > theta_bar);
                prev = v;
            }
            prop_assert!((s.at_step(t_total) - theta_bar).abs() < 1e-4);
        }

        #[test]
        fn regularization_weight_grows_along_curricula(s in any_schedule()) {
            prop_assume!(s.theta_bar >= 0.5);
            prop_assume!(!matches!(s.variant, ScheduleVariant::LinearAnti));
            let mut prev = 0.0;
            for t in uniform_grid(s.total_updates, 200) {
                let w = regularization_weight(s.retain_probability(t).unwrap()).unwrap();
                prop_assert!(w >= prev);
                prev = w;
            }
        }

        #[test]
        fn classification_survives_grid_refinement(s in any_schedule(), extra in prop::collection::vec(0.0f64..1.0, 1..40)) {
            let coarse = uniform_grid(s.total_updates, 11);
            let mut fine = coarse.clone();
            fine.extend(extra.iter().map(|f| f * s.total_updates as f64));
            fine.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let a = classify_schedule(&s, &coarse).unwrap().kind;
            let b = classify_schedule(&s, &fine).unwrap().kind;
            prop_assert_eq!(a, b);
        }
    }
}

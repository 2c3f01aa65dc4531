//! Budget and risk-tolerance sequences.
//!
//! A [`RiskSchedule`] splits a global ruin tolerance `delta` into per-stage
//! tolerances `Δ_t` and assigns each stage a budget threshold `b_t`. A
//! schedule is valid when every `b_t >= B` and `∏(1 - Δ_t) >= 1 - delta`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative slack applied when comparing tolerance products with `1 - delta`.
pub const PRODUCT_SLACK: f64 = 1e-12;

/// Absolute tolerance of the sinc root bisection.
const SINC_ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("delta must lie in [0, 1), got {0}")]
    Delta(f64),
    #[error("budget must be strictly negative, got {0}")]
    Budget(f64),
    #[error("stage count must be at least 1")]
    NoStages,
    #[error("stage_budgets has {budgets} entries but stage_tolerances has {tolerances}")]
    LengthMismatch { budgets: usize, tolerances: usize },
    #[error("sinc root bracketing failed for delta = {0}")]
    Convergence(f64),
    #[error("invalid schedule: {0}")]
    Invalid(ScheduleReport),
}

fn check_delta(delta: f64) -> Result<(), ScheduleError> {
    if (0.0..1.0).contains(&delta) {
        Ok(())
    } else {
        Err(ScheduleError::Delta(delta))
    }
}

/// Equal per-stage tolerances `Δ_t = 1 - (1 - delta)^(1/T)`.
pub fn uniform_tolerance(delta: f64, stages: usize) -> Result<Vec<f64>, ScheduleError> {
    check_delta(delta)?;
    if stages == 0 {
        return Err(ScheduleError::NoStages);
    }
    let each = -((-delta).ln_1p() / stages as f64).exp_m1();
    Ok(vec![each; stages])
}

/// `sin(πγ) / (πγ)`, with `sinc(0) = 1`.
pub fn sinc(gamma: f64) -> f64 {
    if gamma == 0.0 {
        1.0
    } else {
        let x = PI * gamma;
        x.sin() / x
    }
}

/// Root of `sinc(γ) = 1 - delta` on `[0, 1]`.
pub fn sinc_root(delta: f64) -> Result<f64, ScheduleError> {
    check_delta(delta)?;
    let target = 1.0 - delta;
    let f = |g: f64| sinc(g) - target;
    if f(0.0) <= 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    if f(hi) > 0.0 {
        return Err(ScheduleError::Convergence(delta));
    }
    while hi - lo > SINC_ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// First `horizon` terms of the infinite schedule `Δ_t = (γ⋆ / t)²`, whose
/// product over all `t >= 1` equals `sinc(γ⋆) = 1 - delta`.
pub fn sinc_schedule(delta: f64, horizon: usize) -> Result<Vec<f64>, ScheduleError> {
    let gamma = sinc_root(delta)?;
    Ok((1..=horizon)
        .map(|t| {
            let r = gamma / t as f64;
            r * r
        })
        .collect())
}

/// Outcome of [`validate_schedule`]. Stage indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub budget_negative: bool,
    pub delta_in_range: bool,
    pub lengths_match: bool,
    /// First stage with `b_t < B` (condition (i)).
    pub budget_violation: Option<usize>,
    /// First stage with `Δ_t` outside `[0, 1)`.
    pub tolerance_range_violation: Option<usize>,
    /// First stage whose running product `∏_{r<=t}(1 - Δ_r)` drops below
    /// `1 - delta` (condition (ii)).
    pub product_violation: Option<usize>,
    pub tolerance_product: f64,
}

impl ScheduleReport {
    pub fn is_valid(&self) -> bool {
        self.budget_negative
            && self.delta_in_range
            && self.lengths_match
            && self.budget_violation.is_none()
            && self.tolerance_range_violation.is_none()
            && self.product_violation.is_none()
    }
}

impl std::fmt::Display for ScheduleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut problems = Vec::new();
        if !self.budget_negative {
            problems.push("budget must be negative".to_string());
        }
        if !self.delta_in_range {
            problems.push("delta outside [0, 1)".to_string());
        }
        if !self.lengths_match {
            problems.push("stage_budgets and stage_tolerances differ in length".to_string());
        }
        if let Some(t) = self.budget_violation {
            problems.push(format!("b_{t} < B (condition (i))"));
        }
        if let Some(t) = self.tolerance_range_violation {
            problems.push(format!("Δ_{t} outside [0, 1)"));
        }
        if let Some(t) = self.product_violation {
            problems.push(format!(
                "tolerance product falls below 1 - delta at stage {t} (condition (ii))"
            ));
        }
        if problems.is_empty() {
            write!(f, "valid")
        } else {
            write!(f, "{}", problems.join("; "))
        }
    }
}

/// Whether `product` is still at least `1 - delta` up to [`PRODUCT_SLACK`].
#[inline]
pub fn product_within_tolerance(product: f64, delta: f64) -> bool {
    product >= (1.0 - delta) * (1.0 - PRODUCT_SLACK)
}

/// Checks the budget and tolerance conditions, reporting the first violating
/// stage for each.
pub fn validate_schedule(
    budget: f64,
    delta: f64,
    stage_budgets: &[f64],
    stage_tolerances: &[f64],
) -> ScheduleReport {
    let budget_violation = stage_budgets
        .iter()
        .position(|&b| !(b >= budget))
        .map(|i| i + 1);
    let tolerance_range_violation = stage_tolerances
        .iter()
        .position(|d| !(0.0..1.0).contains(d))
        .map(|i| i + 1);
    let mut product = 1.0;
    let mut product_violation = None;
    for (i, &d) in stage_tolerances.iter().enumerate() {
        product *= 1.0 - d;
        if product_violation.is_none() && !product_within_tolerance(product, delta) {
            product_violation = Some(i + 1);
        }
    }
    ScheduleReport {
        budget_negative: budget < 0.0,
        delta_in_range: (0.0..1.0).contains(&delta),
        lengths_match: stage_budgets.len() == stage_tolerances.len(),
        budget_violation,
        tolerance_range_violation,
        product_violation,
        tolerance_product: product,
    }
}

/// Validated budget `B`, tolerance `delta` and per-stage `(b_t, Δ_t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskSchedule {
    budget: f64,
    delta: f64,
    stage_budgets: Vec<f64>,
    stage_tolerances: Vec<f64>,
}

impl RiskSchedule {
    pub fn new(
        budget: f64,
        delta: f64,
        stage_budgets: Vec<f64>,
        stage_tolerances: Vec<f64>,
    ) -> Result<Self, ScheduleError> {
        if !(budget < 0.0) {
            return Err(ScheduleError::Budget(budget));
        }
        check_delta(delta)?;
        if stage_budgets.len() != stage_tolerances.len() {
            return Err(ScheduleError::LengthMismatch {
                budgets: stage_budgets.len(),
                tolerances: stage_tolerances.len(),
            });
        }
        let report = validate_schedule(budget, delta, &stage_budgets, &stage_tolerances);
        if !report.is_valid() {
            return Err(ScheduleError::Invalid(report));
        }
        Ok(Self {
            budget,
            delta,
            stage_budgets,
            stage_tolerances,
        })
    }

    /// `b_t = B` and uniform tolerances over `stages` stages.
    pub fn uniform(budget: f64, delta: f64, stages: usize) -> Result<Self, ScheduleError> {
        let tolerances = uniform_tolerance(delta, stages)?;
        Self::new(budget, delta, vec![budget; stages], tolerances)
    }

    /// `b_t = B` and the first `horizon` sinc-schedule tolerances.
    pub fn sinc(budget: f64, delta: f64, horizon: usize) -> Result<Self, ScheduleError> {
        let tolerances = sinc_schedule(delta, horizon)?;
        Self::new(budget, delta, vec![budget; horizon], tolerances)
    }

    /// Schedule with no stages yet, to be grown with [`RiskSchedule::extend`].
    pub fn empty(budget: f64, delta: f64) -> Result<Self, ScheduleError> {
        Self::new(budget, delta, Vec::new(), Vec::new())
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.stage_tolerances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stage_tolerances.is_empty()
    }

    pub fn stage_budgets(&self) -> &[f64] {
        &self.stage_budgets
    }

    pub fn stage_tolerances(&self) -> &[f64] {
        &self.stage_tolerances
    }

    /// `(b_t, Δ_t)` for 1-based stage `t`.
    pub fn stage(&self, t: usize) -> Option<(f64, f64)> {
        let i = t.checked_sub(1)?;
        Some((*self.stage_budgets.get(i)?, *self.stage_tolerances.get(i)?))
    }

    /// `∏_{r<=t}(1 - Δ_r)`.
    pub fn tolerance_product(&self, t: usize) -> f64 {
        self.stage_tolerances
            .iter()
            .take(t)
            .map(|d| 1.0 - d)
            .product()
    }

    /// Largest `Δ_t` admissible for the next stage: `(1 - delta) / ∏(1 - Δ_r) - 1`
    /// expressed as a tolerance, i.e. `1 - (1 - delta) / ∏`.
    pub fn remaining_tolerance(&self) -> f64 {
        let product = self.tolerance_product(self.len());
        (1.0 - (1.0 - self.delta) / product).max(0.0)
    }

    /// Appends a stage when the prefix conditions still hold afterwards.
    pub fn extend(&mut self, stage_budget: f64, tolerance: f64) -> Result<(), ScheduleError> {
        let mut budgets = self.stage_budgets.clone();
        let mut tolerances = self.stage_tolerances.clone();
        budgets.push(stage_budget);
        tolerances.push(tolerance);
        let report = validate_schedule(self.budget, self.delta, &budgets, &tolerances);
        if !report.is_valid() {
            return Err(ScheduleError::Invalid(report));
        }
        self.stage_budgets = budgets;
        self.stage_tolerances = tolerances;
        Ok(())
    }

    /// Drops the last stage; the remaining prefix stays valid.
    pub fn truncate(&mut self, stages: usize) {
        self.stage_budgets.truncate(stages);
        self.stage_tolerances.truncate(stages);
    }

    pub fn report(&self) -> ScheduleReport {
        validate_schedule(
            self.budget,
            self.delta,
            &self.stage_budgets,
            &self.stage_tolerances,
        )
    }
}

/// How per-stage tolerances are produced in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ToleranceSpec {
    Values(Vec<f64>),
    Generator(ToleranceGenerator),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ToleranceGenerator {
    Uniform {
        #[serde(rename = "T")]
        stages: usize,
    },
    Sinc {
        horizon: usize,
    },
    Explicit {
        values: Vec<f64>,
    },
}

/// JSON form of a schedule: `budget`, `delta`, optional `stage_budgets`
/// (defaults to `B` everywhere) and `stage_tolerances`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub budget: f64,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_budgets: Option<Vec<f64>>,
    pub stage_tolerances: ToleranceSpec,
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<RiskSchedule, ScheduleError> {
        let tolerances = match &self.stage_tolerances {
            ToleranceSpec::Values(v) => v.clone(),
            ToleranceSpec::Generator(ToleranceGenerator::Explicit { values }) => values.clone(),
            ToleranceSpec::Generator(ToleranceGenerator::Uniform { stages }) => {
                uniform_tolerance(self.delta, *stages)?
            }
            ToleranceSpec::Generator(ToleranceGenerator::Sinc { horizon }) => {
                sinc_schedule(self.delta, *horizon)?
            }
        };
        let budgets = self
            .stage_budgets
            .clone()
            .unwrap_or_else(|| vec![self.budget; tolerances.len()]);
        RiskSchedule::new(self.budget, self.delta, budgets, tolerances)
    }

    pub fn uniform(budget: f64, delta: f64, stages: usize) -> Self {
        Self {
            budget,
            delta,
            stage_budgets: None,
            stage_tolerances: ToleranceSpec::Generator(ToleranceGenerator::Uniform { stages }),
        }
    }
}

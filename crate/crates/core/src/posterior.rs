//! Conjugate Gaussian inference for the control and treatment means.
//!
//! Each arm's mean has an independent normal prior. Only treated outcomes
//! under `w = 1` and control outcomes under `w = 0` are ever observed, so the
//! accumulators track exactly those two streams.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{Arm, PerArm};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PosteriorError {
    #[error("prior variance for {0:?} must be positive and finite")]
    PriorVariance(Arm),
    #[error("outcome variance for {0:?} must be positive and finite")]
    OutcomeVariance(Arm),
    #[error("treatment size {m} exceeds floor({population} / 2)")]
    TreatmentAboveHalf { m: u64, population: u64 },
    #[error("need at least 2 observations for {arm:?} to estimate its variance, have {count}")]
    InsufficientData { arm: Arm, count: u64 },
}

/// Independent normal priors `μ_true(w) ~ N(μ₀(w), σ₀(w)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: PerArm<f64>,
    pub variance: PerArm<f64>,
}

impl GaussianPrior {
    pub fn new(mean: PerArm<f64>, variance: PerArm<f64>) -> Result<Self, PosteriorError> {
        let prior = Self { mean, variance };
        prior.validate()?;
        Ok(prior)
    }

    /// Same prior for both arms.
    pub fn symmetric(mean: f64, variance: f64) -> Result<Self, PosteriorError> {
        Self::new(PerArm::splat(mean), PerArm::splat(variance))
    }

    pub fn validate(&self) -> Result<(), PosteriorError> {
        for arm in Arm::BOTH {
            let v = *self.variance.get(arm);
            if !(v > 0.0 && v.is_finite()) {
                return Err(PosteriorError::PriorVariance(arm));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceKind {
    Known,
    Estimated,
}

/// Outcome variances `σ(w)²` plugged into the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeVariance {
    pub sigma_sq: PerArm<f64>,
    pub kind: VarianceKind,
}

impl OutcomeVariance {
    pub fn known(control: f64, treatment: f64) -> Result<Self, PosteriorError> {
        let v = Self {
            sigma_sq: PerArm::new(control, treatment),
            kind: VarianceKind::Known,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), PosteriorError> {
        for arm in Arm::BOTH {
            let v = *self.sigma_sq.get(arm);
            if !(v > 0.0 && v.is_finite()) {
                return Err(PosteriorError::OutcomeVariance(arm));
            }
        }
        Ok(())
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Running `(count, sum, sum of squares)` for one observed outcome stream.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Accumulator {
    pub count: u64,
    sum: CompensatedSum,
    sumsq: CompensatedSum,
}

impl Accumulator {
    pub fn add_batch(&mut self, count: u64, sum: f64, sumsq: f64) {
        self.count += count;
        self.sum.add(sum);
        self.sumsq.add(sumsq);
    }

    pub fn sum(&self) -> f64 {
        self.sum.value()
    }

    pub fn sumsq(&self) -> f64 {
        self.sumsq.value()
    }

    /// Unbiased sample variance with denominator `count - 1`.
    pub fn sample_variance(&self) -> Option<f64> {
        if self.count < 2 {
            return None;
        }
        let n = self.count as f64;
        let mean = self.sum() / n;
        let centered = self.sumsq() - mean * self.sum();
        Some((centered / (n - 1.0)).max(0.0))
    }
}

/// Cumulative observed statistics after stage `t`.
///
/// `treated` accumulates `Y(1)` over treated units (`S_t^T(1)`, `M_t(1)`),
/// `control` accumulates `Y(0)` over control units (`S_t^C(0)`, `M_t(0)`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SufficientStats {
    pub treated: Accumulator,
    pub control: Accumulator,
}

/// One stage's observed sums.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageSums {
    pub treated_sum: f64,
    pub control_sum: f64,
    pub treated_sumsq: f64,
    pub control_sumsq: f64,
}

impl SufficientStats {
    /// `M_t(w)`.
    pub fn count(&self, arm: Arm) -> u64 {
        match arm {
            Arm::Control => self.control.count,
            Arm::Treatment => self.treated.count,
        }
    }

    /// Observed sum for the arm: `S^C(0)` for control, `S^T(1)` for treatment.
    pub fn observed_sum(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.control.sum(),
            Arm::Treatment => self.treated.sum(),
        }
    }
}

/// Ingests one stage with `m` treated units out of `population`.
pub fn update_stats(
    stats: &SufficientStats,
    m: u64,
    population: u64,
    sums: &StageSums,
) -> Result<SufficientStats, PosteriorError> {
    if m > population / 2 {
        return Err(PosteriorError::TreatmentAboveHalf { m, population });
    }
    Ok(update_stats_unchecked(stats, m, population, sums))
}

/// As [`update_stats`] but without the `m <= N/2` cap, for baselines that
/// assign each unit independently.
pub fn update_stats_unchecked(
    stats: &SufficientStats,
    m: u64,
    population: u64,
    sums: &StageSums,
) -> SufficientStats {
    let mut next = *stats;
    next.treated
        .add_batch(m, sums.treated_sum, sums.treated_sumsq);
    next.control.add_batch(
        population.saturating_sub(m),
        sums.control_sum,
        sums.control_sumsq,
    );
    next
}

/// Posterior `N(μ_p(w), σ_p(w)²)` of each arm's mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    pub mean: PerArm<f64>,
    pub variance: PerArm<f64>,
}

impl PosteriorState {
    /// `μ_p(1) - μ_p(0)`.
    pub fn effect_mean(&self) -> f64 {
        self.mean.treatment - self.mean.control
    }
}

pub fn init_posterior(prior: &GaussianPrior) -> PosteriorState {
    PosteriorState {
        mean: prior.mean,
        variance: prior.variance,
    }
}

/// Precision-weighted update of both arms from the observed accumulators.
pub fn compute_posterior(
    prior: &GaussianPrior,
    variance: &OutcomeVariance,
    stats: &SufficientStats,
) -> PosteriorState {
    let arm_posterior = |arm: Arm| {
        if stats.count(arm) == 0 {
            return (*prior.mean.get(arm), *prior.variance.get(arm));
        }
        let prior_precision = 1.0 / prior.variance.get(arm);
        let sigma_sq = *variance.sigma_sq.get(arm);
        let count = stats.count(arm) as f64;
        let precision = prior_precision + count / sigma_sq;
        let mean = (prior.mean.get(arm) * prior_precision + stats.observed_sum(arm) / sigma_sq)
            / precision;
        (mean, 1.0 / precision)
    };
    let (m0, v0) = arm_posterior(Arm::Control);
    let (m1, v1) = arm_posterior(Arm::Treatment);
    PosteriorState {
        mean: PerArm::new(m0, m1),
        variance: PerArm::new(v0, v1),
    }
}

/// Sample variance of one arm's observed outcomes.
pub fn estimate_arm_variance(stats: &SufficientStats, arm: Arm) -> Result<f64, PosteriorError> {
    let acc = match arm {
        Arm::Control => &stats.control,
        Arm::Treatment => &stats.treated,
    };
    acc.sample_variance()
        .ok_or(PosteriorError::InsufficientData {
            arm,
            count: acc.count,
        })
}

/// Control variance from control outcomes, treatment variance from treated
/// outcomes, each centred on its own group mean.
pub fn estimate_variance(stats: &SufficientStats) -> Result<OutcomeVariance, PosteriorError> {
    Ok(OutcomeVariance {
        sigma_sq: PerArm::new(
            estimate_arm_variance(stats, Arm::Control)?,
            estimate_arm_variance(stats, Arm::Treatment)?,
        ),
        kind: VarianceKind::Estimated,
    })
}

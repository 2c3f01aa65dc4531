//! Closed-form ramp sizing under the conjugate Gaussian model.
//!
//! Given the posterior before stage `t`, the stage statistic
//! `s_t^T(1) - S_t^T(0)` is normal with mean `μ̃(m)` and variance `σ̃²(m)`.
//! The treatment size `m` is admissible when
//!
//! ```text
//! (b_t - S_{t-1}^T(1) - μ̃(m)) / σ̃(m) <= Φ⁻¹(Δ_t)
//! ```
//!
//! and the solver returns the largest admissible `m <= ⌊N_t / 2⌋`, or zero.

use serde::{Deserialize, Serialize};

use crate::experiment::{
    drive, Branch, ExperimentAborted, ExperimentSetup, ExperimentTrace, StageContext,
    StageDecision, StageFeed, StagePolicy, StopRule,
};
use crate::normal;
use crate::posterior::{OutcomeVariance, PosteriorState};
use crate::schedule::RiskSchedule;

/// Absolute slack on the admissibility comparison.
pub const ADMISSIBILITY_SLACK: f64 = 1e-12;

/// Relative size below which the quadratic coefficient is treated as zero.
const DEGENERATE_QUADRATIC: f64 = 1e-12;

/// Posterior-predictive mean and variance of the stage statistic as
/// functions of the treatment size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveMoments {
    pub posterior: PosteriorState,
    pub sigma_sq: crate::arm::PerArm<f64>,
    /// Treated units in earlier stages, `M_{t-1}(1)`.
    pub treated_before: u64,
}

impl PredictiveMoments {
    /// `μ̃(m) = μ_p(1)·m - μ_p(0)·(m + M)`.
    pub fn mean(&self, m: f64) -> f64 {
        let total = m + self.treated_before as f64;
        self.posterior.mean.treatment * m - self.posterior.mean.control * total
    }

    /// `σ̃²(m) = m²σ_p(1)² + mσ(1)² + (m + M)²σ_p(0)² + (m + M)σ(0)²`.
    pub fn variance(&self, m: f64) -> f64 {
        let total = m + self.treated_before as f64;
        m * m * self.posterior.variance.treatment
            + m * self.sigma_sq.treatment
            + total * total * self.posterior.variance.control
            + total * self.sigma_sq.control
    }
}

pub fn predictive_moments(
    posterior: &PosteriorState,
    variance: &OutcomeVariance,
    treated_before: u64,
) -> PredictiveMoments {
    PredictiveMoments {
        posterior: *posterior,
        sigma_sq: variance.sigma_sq,
        treated_before,
    }
}

/// Coefficients of `A m² + B m + C = 0`, the squared boundary of the
/// admissibility condition, together with `q = Φ⁻¹(Δ_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub q: f64,
}

/// Inputs for one stage of the closed-form solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampInputs {
    pub posterior: PosteriorState,
    pub variance: OutcomeVariance,
    /// `M_{t-1}(1)`.
    pub treated_before: u64,
    /// `S_{t-1}^T(1)`.
    pub treated_sum_before: f64,
    /// `b_t`.
    pub stage_budget: f64,
    /// `Δ_t`.
    pub tolerance: f64,
    /// `N_t`.
    pub population: u64,
}

impl RampInputs {
    pub fn moments(&self) -> PredictiveMoments {
        predictive_moments(&self.posterior, &self.variance, self.treated_before)
    }

    /// Remaining budget `b_t - S_{t-1}^T(1)`.
    fn headroom(&self) -> f64 {
        self.stage_budget - self.treated_sum_before
    }

    pub fn coefficients(&self, q: f64) -> QuadraticCoefficients {
        let p = &self.posterior;
        let s = &self.variance.sigma_sq;
        let prev = self.treated_before as f64;
        let effect = p.effect_mean();
        let shifted = self.headroom() + p.mean.control * prev;
        let q2 = q * q;
        QuadraticCoefficients {
            a: q2 * (p.variance.treatment + p.variance.control) - effect * effect,
            b: q2 * (s.treatment + s.control + 2.0 * p.variance.control * prev)
                + 2.0 * shifted * effect,
            c: q2 * p.variance.control * prev * prev + q2 * s.control * prev - shifted * shifted,
            q,
        }
    }

    /// z-statistic of the admissibility condition at treatment size `m`.
    pub fn z_score(&self, m: u64) -> f64 {
        let moments = self.moments();
        let m = m as f64;
        (self.headroom() - moments.mean(m)) / moments.variance(m).sqrt()
    }

    /// Whether `m` satisfies the admissibility condition for quantile `q`.
    pub fn admissible(&self, m: u64, q: f64) -> bool {
        self.z_score(m) <= q + ADMISSIBILITY_SLACK
    }
}

fn roots(coef: &QuadraticCoefficients) -> Option<Vec<f64>> {
    let QuadraticCoefficients { a, b, c, .. } = *coef;
    let scale = b.abs().max(c.abs()).max(1.0);
    if a.abs() < DEGENERATE_QUADRATIC * scale {
        if b == 0.0 {
            return None;
        }
        return Some(vec![-c / b]);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sqrt_disc = disc.sqrt();
    // Cancellation-free pair of roots.
    let half = -0.5 * (b + b.signum() * sqrt_disc);
    if half == 0.0 {
        return Some(vec![0.0]);
    }
    Some(vec![half / a, c / half])
}

/// Largest admissible treatment size for one stage.
pub fn solve_ramp_size(inputs: &RampInputs) -> StageDecision {
    let population = inputs.population;
    let cap = population / 2;
    if inputs.tolerance <= 0.0 {
        return StageDecision::new(0, population, Branch::ZeroTolerance);
    }
    if cap == 0 {
        return StageDecision::new(0, population, Branch::EmptyValidSet);
    }
    let q = match normal::quantile(inputs.tolerance) {
        Ok(q) => q,
        Err(_) => return StageDecision::new(0, population, Branch::ZeroTolerance),
    };
    if inputs.admissible(cap, q) {
        return StageDecision::new(cap, population, Branch::CapAtHalf);
    }
    let coef = inputs.coefficients(q);
    let Some(roots) = roots(&coef) else {
        return StageDecision::new(0, population, Branch::NoRealRoot);
    };
    // Floored roots plus their neighbours, so a root sitting on an integer
    // is not lost to rounding; each candidate is re-checked directly.
    let best = roots
        .iter()
        .filter(|r| r.is_finite())
        .flat_map(|r| {
            let f = r.floor();
            [f - 1.0, f, f + 1.0]
        })
        .filter(|&m| m >= 1.0 && m <= cap as f64)
        .map(|m| m as u64)
        .filter(|&m| inputs.admissible(m, q))
        .max();
    match best {
        Some(m) => StageDecision::new(m, population, Branch::RootSelected),
        None => StageDecision::new(0, population, Branch::EmptyValidSet),
    }
}

/// [`StagePolicy`] wrapper around [`solve_ramp_size`].
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticPolicy;

impl StagePolicy for AnalyticPolicy {
    fn decide(&mut self, ctx: &StageContext<'_>) -> StageDecision {
        solve_ramp_size(&RampInputs {
            posterior: ctx.posterior,
            variance: ctx.variance,
            treated_before: ctx.stats.treated.count,
            treated_sum_before: ctx.stats.treated.sum(),
            stage_budget: ctx.stage_budget,
            tolerance: ctx.tolerance,
            population: ctx.population,
        })
    }
}

/// Runs the closed-form ramp rule stage by stage against `feed`.
pub fn run_rrc_experiment<F: StageFeed + ?Sized>(
    setup: &ExperimentSetup,
    schedule: &RiskSchedule,
    feed: &mut F,
) -> Result<ExperimentTrace, ExperimentAborted> {
    drive(
        setup,
        StopRule::Schedule(schedule),
        feed,
        &mut AnalyticPolicy,
    )
}

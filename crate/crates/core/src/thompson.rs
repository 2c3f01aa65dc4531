//! Thompson-sampling bandit baseline.
//!
//! Each user is treated independently with probability `p^c / (p^c + (1-p)^c)`
//! where `p` is the posterior probability that treatment beats control. The
//! rule ignores the budget; traces still record the cost it incurs.

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{
    drive, Branch, ExperimentAborted, ExperimentSetup, ExperimentTrace, StageContext,
    StageDecision, StageFeed, StagePolicy, StopRule,
};
use crate::normal;
use crate::posterior::PosteriorState;
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("Thompson exponent must be positive and finite, got {0}")]
pub struct ExponentError(pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThompsonConfig {
    pub c: f64,
    pub setup: ExperimentSetup,
    /// Clamp `m_t` to `⌊N_t/2⌋` like the ramp rules do.
    #[serde(default)]
    pub cap_at_half: bool,
}

impl ThompsonConfig {
    pub fn validate(&self) -> Result<(), ExponentError> {
        if self.c > 0.0 && self.c.is_finite() {
            Ok(())
        } else {
            Err(ExponentError(self.c))
        }
    }
}

/// `ln p` where `p = Φ((μ_p(1) - μ_p(0)) / √(σ_p(0)² + σ_p(1)²))`, and
/// `ln(1 - p)`.
fn log_win_probabilities(posterior: &PosteriorState) -> (f64, f64) {
    let sd = (posterior.variance.control + posterior.variance.treatment).sqrt();
    let z = posterior.effect_mean() / sd;
    (normal::log_cdf(z), normal::log_cdf(-z))
}

/// Posterior probability that treatment has the higher mean.
pub fn win_probability(posterior: &PosteriorState) -> f64 {
    log_win_probabilities(posterior).0.exp()
}

/// Per-user treatment probability `p^c / (p^c + (1-p)^c)`.
pub fn thompson_assignment_probability(posterior: &PosteriorState, c: f64) -> f64 {
    let (lp, lq) = log_win_probabilities(posterior);
    sharpen_log(lp, lq, c)
}

/// `p^c / (p^c + (1-p)^c)` for a probability given directly.
pub fn sharpen(p: f64, c: f64) -> f64 {
    sharpen_log(p.ln(), (-p).ln_1p(), c)
}

fn sharpen_log(lp: f64, lq: f64, c: f64) -> f64 {
    // 1 / (1 + exp(c (ln q - ln p))), evaluated without overflow.
    let d = c * (lq - lp);
    if d.is_nan() {
        return 0.5;
    }
    if d > 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    }
}

/// Stage policy drawing `m_t ~ Binomial(N_t, π_t)`.
#[derive(Debug, Clone)]
pub struct ThompsonPolicy {
    pub c: f64,
    pub cap_at_half: bool,
    rng: StreamRng,
}

impl ThompsonPolicy {
    pub fn new(c: f64, cap_at_half: bool, seed: u64) -> Self {
        Self {
            c,
            cap_at_half,
            rng: rng::stream(seed, &[]),
        }
    }

    fn draw(&mut self, n: u64, p: f64) -> u64 {
        if p <= 0.0 || n == 0 {
            return 0;
        }
        if p >= 1.0 {
            return n;
        }
        match Binomial::new(n, p) {
            Ok(b) => b.sample(&mut self.rng),
            // Unreachable for p in (0, 1); keep the expected count.
            Err(_) => (n as f64 * p).round() as u64,
        }
    }
}

impl StagePolicy for ThompsonPolicy {
    fn decide(&mut self, ctx: &StageContext<'_>) -> StageDecision {
        let p = thompson_assignment_probability(&ctx.posterior, self.c);
        let mut m = self.draw(ctx.population, p);
        if self.cap_at_half {
            m = m.min(ctx.population / 2);
        }
        StageDecision {
            m,
            branch: Branch::Sampled,
            assignment_probability: p,
        }
    }
}

/// Runs the baseline for `stages` stages, recording costs against `budget`.
pub fn run_thompson_experiment<F: StageFeed + ?Sized>(
    config: &ThompsonConfig,
    budget: f64,
    stages: usize,
    feed: &mut F,
    seed: u64,
) -> Result<ExperimentTrace, ExperimentAborted> {
    let mut policy = ThompsonPolicy::new(config.c, config.cap_at_half, seed);
    drive(
        &config.setup,
        StopRule::Horizon { budget, stages },
        feed,
        &mut policy,
    )
}

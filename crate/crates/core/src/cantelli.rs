//! Monte-Carlo ramp sizing with a Cantelli tail bound and general unit costs.
//!
//! Posterior draws of the past treated units' counterfactual controls and of
//! two fresh units give estimates `φ̂⁽⁰⁾..φ̂⁽⁶⁾` of the conditional moments of
//! `R_t` given `R_{t-1} >= B`. The treatment size is then the largest `m`
//! with
//!
//! ```text
//! m·φ̂⁽¹⁾ + φ̂⁽²⁾ >= b_t    and    A m² + B m + C >= 0,
//! ```
//!
//! where the quadratic is the Cantelli bound rearranged with `q = 1/Δ_t - 1`.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arm::PerArm;
use crate::experiment::{
    drive, Branch, ExperimentAborted, ExperimentSetup, ExperimentTrace, StageContext,
    StageDecision, StageFeed, StagePolicy, StopRule,
};
use crate::normal;
use crate::posterior::{OutcomeVariance, PosteriorState};
use crate::rng;
use crate::schedule::RiskSchedule;

/// Default number of posterior draws per stage.
pub const DEFAULT_SAMPLES: usize = 10_000;

/// Draws per deterministic reduction chunk.
const CHUNK: usize = 2_048;

/// Above this cap the feasible set is located from its boundary points
/// rather than scanned.
const GRID_SCAN_LIMIT: u64 = 10_000;

/// Per-unit cost `h(y(1), y(0))` of treating a unit.
pub trait CostFunction: Sync {
    fn cost(&self, treated: f64, control: f64) -> f64;

    /// True when `cost(y1, y0) == y1 - y0`, which lets cumulative costs be
    /// sampled from sums alone.
    fn is_treatment_effect(&self) -> bool {
        false
    }

    /// `E[h(Y(1), Y(0))]` when `Y(1) - Y(0) ~ N(mean, sd²)`, if known in
    /// closed form.
    fn expected_cost(&self, _mean: f64, _sd: f64) -> Option<f64> {
        None
    }
}

/// Cost functions addressable by name in configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CostSpec {
    /// `y(1) - y(0)`.
    #[default]
    TreatmentEffect,
    /// `max(y(1) - y(0), floor)`.
    CappedEffect { floor: f64 },
}

impl CostFunction for CostSpec {
    #[inline]
    fn cost(&self, treated: f64, control: f64) -> f64 {
        match *self {
            CostSpec::TreatmentEffect => treated - control,
            CostSpec::CappedEffect { floor } => (treated - control).max(floor),
        }
    }

    fn is_treatment_effect(&self) -> bool {
        matches!(self, CostSpec::TreatmentEffect)
    }

    fn expected_cost(&self, mean: f64, sd: f64) -> Option<f64> {
        match *self {
            CostSpec::TreatmentEffect => Some(mean),
            CostSpec::CappedEffect { floor } => {
                if sd == 0.0 {
                    return Some(mean.max(floor));
                }
                // E[max(X, f)] = f + (μ - f)Φ(a) + σφ(a), a = (μ - f)/σ.
                let a = (mean - floor) / sd;
                Some(floor + (mean - floor) * normal::cdf(a) + sd * normal::pdf(a))
            }
        }
    }
}

/// One posterior draw reduced to the three costs the estimators need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostDraw {
    /// `ĥ_{1,t}`.
    pub first: f64,
    /// `ĥ_{2,t}`.
    pub second: f64,
    /// `R̂_{t-1}`.
    pub past: f64,
    /// `E[h_{1,t} | θ̂]`, the fresh-unit cost averaged over unit noise at
    /// the drawn parameters, when the sampler can provide it.
    pub conditional: Option<f64>,
}

/// Procedure producing joint draws from the posterior of past treated
/// counterfactuals and two fresh units.
pub trait PosteriorSampler: Sync {
    fn draw(&self, rng: &mut dyn RngCore, cost: &dyn CostFunction) -> CostDraw;
}

/// Observed treated outcomes of earlier stages.
#[derive(Debug, Clone, PartialEq)]
pub enum TreatedHistory {
    /// Only `(M_{t-1}(1), S_{t-1}^T(1))`; enough for additive costs.
    Aggregate { count: u64, sum: f64 },
    /// Every treated `Y(1)`, required for non-additive costs.
    Units(Vec<f64>),
}

impl TreatedHistory {
    pub fn count(&self) -> u64 {
        match self {
            TreatedHistory::Aggregate { count, .. } => *count,
            TreatedHistory::Units(v) => v.len() as u64,
        }
    }
}

/// Exact sampler for the conjugate Gaussian model: draw both means from the
/// posterior, then every unobserved outcome independently given the means.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianExactSampler {
    pub posterior: PosteriorState,
    pub sigma_sq: PerArm<f64>,
    pub history: TreatedHistory,
}

pub fn gaussian_exact_sampler(
    posterior: &PosteriorState,
    variance: &OutcomeVariance,
    history: TreatedHistory,
) -> GaussianExactSampler {
    GaussianExactSampler {
        posterior: *posterior,
        sigma_sq: variance.sigma_sq,
        history,
    }
}

impl GaussianExactSampler {
    /// Means `(μ_true(0), μ_true(1))` drawn from the posterior.
    pub fn draw_means(&self, rng: &mut dyn RngCore) -> PerArm<f64> {
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        PerArm::new(
            self.posterior.mean.control + self.posterior.variance.control.sqrt() * z0,
            self.posterior.mean.treatment + self.posterior.variance.treatment.sqrt() * z1,
        )
    }

    /// `S_{t-1}^T(0)`: the summed counterfactual controls of past treated
    /// units, given the control mean.
    pub fn draw_counterfactual_sum(&self, rng: &mut dyn RngCore, control_mean: f64) -> f64 {
        let n = self.history.count() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let z: f64 = rng.sample(StandardNormal);
        n * control_mean + (n * self.sigma_sq.control).sqrt() * z
    }

    fn draw_unit(&self, rng: &mut dyn RngCore, means: &PerArm<f64>) -> PerArm<f64> {
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        PerArm::new(
            means.control + self.sigma_sq.control.sqrt() * z0,
            means.treatment + self.sigma_sq.treatment.sqrt() * z1,
        )
    }
}

impl PosteriorSampler for GaussianExactSampler {
    fn draw(&self, rng: &mut dyn RngCore, cost: &dyn CostFunction) -> CostDraw {
        let means = self.draw_means(rng);
        let past = match (&self.history, cost.is_treatment_effect()) {
            (TreatedHistory::Aggregate { sum, .. }, true) => {
                sum - self.draw_counterfactual_sum(rng, means.control)
            }
            (TreatedHistory::Units(units), true) => {
                let sum: f64 = units.iter().sum();
                sum - self.draw_counterfactual_sum(rng, means.control)
            }
            (TreatedHistory::Units(units), false) => {
                let sd = self.sigma_sq.control.sqrt();
                units
                    .iter()
                    .map(|&y1| {
                        let z: f64 = rng.sample(StandardNormal);
                        cost.cost(y1, means.control + sd * z)
                    })
                    .sum()
            }
            (TreatedHistory::Aggregate { count, .. }, false) => {
                assert!(
                    *count == 0,
                    "non-additive cost needs individual treated outcomes"
                );
                0.0
            }
        };
        let a = self.draw_unit(rng, &means);
        let b = self.draw_unit(rng, &means);
        let unit_sd = (self.sigma_sq.control + self.sigma_sq.treatment).sqrt();
        CostDraw {
            first: cost.cost(a.treatment, a.control),
            second: cost.cost(b.treatment, b.control),
            past,
            conditional: cost.expected_cost(means.treatment - means.control, unit_sd),
        }
    }
}

/// Monte-Carlo estimates of the conditional moments given `R_{t-1} >= B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorQuantities {
    /// `P(R_{t-1} >= B)`.
    pub phi0: f64,
    /// `E[h_1]`.
    pub phi1: f64,
    /// `E[R_{t-1}]`.
    pub phi2: f64,
    /// `V[h_1]`.
    pub phi3: f64,
    /// `Cov(h_1, h_2)`, as selected by [`CovarianceEstimator`].
    pub phi4: f64,
    /// `V[R_{t-1}]`.
    pub phi5: f64,
    /// `Cov(h_1, R_{t-1})`, as selected by [`CovarianceEstimator`].
    pub phi6: f64,
    /// `mean(ĥ₁ĥ₂) - φ̂⁽¹⁾·mean(ĥ₂)`.
    pub phi4_plugin: f64,
    /// `mean(c²) - mean(c)²` for `c = E[h_1 | θ̂]`.
    pub phi4_conditional: Option<f64>,
    /// `mean(ĥ₁ĥ₂) - φ̂⁽¹⁾φ̂⁽²⁾`.
    pub phi6_plugin: f64,
    /// `mean(ĥ₁R̂) - φ̂⁽¹⁾φ̂⁽²⁾`.
    pub phi6_natural: f64,
    /// `mean(c·R̂) - mean(c)·φ̂⁽²⁾` for `c = E[h_1 | θ̂]`.
    pub phi6_conditional: Option<f64>,
    pub samples: usize,
    pub survivors: usize,
}

/// Which estimates of `Cov(h_1, h_2)` and `Cov(h_1, R_{t-1})` feed the
/// solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceEstimator {
    /// `φ̂⁽⁴⁾ = mean(ĥ₁ĥ₂) - φ̂⁽¹⁾·mean(ĥ₂)` and
    /// `φ̂⁽⁶⁾ = mean(ĥ₁ĥ₂) - φ̂⁽¹⁾φ̂⁽²⁾`.
    Plugin,
    /// As `Plugin`, but `φ̂⁽⁶⁾ = mean(ĥ₁R̂) - φ̂⁽¹⁾φ̂⁽²⁾`.
    Natural,
    /// Both covariances from `c = E[h_1 | θ̂]`: `φ̂⁽⁴⁾ = V̂[c]` and
    /// `φ̂⁽⁶⁾ = Ĉov(c, R̂)`. Fresh units are independent of each other and of
    /// past units given `θ`, so these have the same targets with far less
    /// Monte-Carlo noise. Falls back to `Natural` when the sampler or cost
    /// gives no `c`.
    #[default]
    Conditional,
}

impl PosteriorQuantities {
    pub fn with_covariance(mut self, estimator: CovarianceEstimator) -> Self {
        let conditional = self.phi4_conditional.zip(self.phi6_conditional);
        (self.phi4, self.phi6) = match (estimator, conditional) {
            (CovarianceEstimator::Plugin, _) => (self.phi4_plugin, self.phi6_plugin),
            (CovarianceEstimator::Conditional, Some(c)) => c,
            _ => (self.phi4_plugin, self.phi6_natural),
        };
        self
    }

    /// `E[R_t | R_{t-1} >= B]` at treatment size `m`.
    pub fn mean(&self, m: f64) -> f64 {
        m * self.phi1 + self.phi2
    }

    /// `V[R_t | R_{t-1} >= B]` at treatment size `m`.
    pub fn variance(&self, m: f64) -> f64 {
        m * self.phi3 + m * (m - 1.0) * self.phi4 + self.phi5 + m * self.phi6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("no posterior draw out of {samples} kept the budget intact")]
pub struct NoSurvivors {
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    kept: usize,
    first: f64,
    second: f64,
    past: f64,
    first_sq: f64,
    past_sq: f64,
    first_second: f64,
    first_past: f64,
    cond_kept: usize,
    cond: f64,
    cond_sq: f64,
    cond_past: f64,
}

impl Moments {
    fn push(&mut self, d: &CostDraw) {
        self.kept += 1;
        self.first += d.first;
        self.second += d.second;
        self.past += d.past;
        self.first_sq += d.first * d.first;
        self.past_sq += d.past * d.past;
        self.first_second += d.first * d.second;
        self.first_past += d.first * d.past;
        if let Some(c) = d.conditional {
            self.cond_kept += 1;
            self.cond += c;
            self.cond_sq += c * c;
            self.cond_past += c * d.past;
        }
    }

    fn merge(mut self, o: &Moments) -> Moments {
        self.kept += o.kept;
        self.first += o.first;
        self.second += o.second;
        self.past += o.past;
        self.first_sq += o.first_sq;
        self.past_sq += o.past_sq;
        self.first_second += o.first_second;
        self.first_past += o.first_past;
        self.cond_kept += o.cond_kept;
        self.cond += o.cond;
        self.cond_sq += o.cond_sq;
        self.cond_past += o.cond_past;
        self
    }
}

/// Estimates from an explicit list of draws.
pub fn quantities_from_draws(
    draws: &[CostDraw],
    budget: f64,
) -> Result<PosteriorQuantities, NoSurvivors> {
    let mut m = Moments::default();
    for d in draws.iter().filter(|d| d.past >= budget) {
        m.push(d);
    }
    finish(m, draws.len())
}

fn finish(m: Moments, samples: usize) -> Result<PosteriorQuantities, NoSurvivors> {
    if m.kept == 0 {
        return Err(NoSurvivors { samples });
    }
    let n = m.kept as f64;
    let phi1 = m.first / n;
    let phi2 = m.past / n;
    let mean_second = m.second / n;
    let phi4_plugin = m.first_second / n - phi1 * mean_second;
    let phi6_plugin = m.first_second / n - phi1 * phi2;
    let (phi4_conditional, phi6_conditional) = if m.cond_kept == m.kept {
        let c = m.cond / n;
        (
            Some((m.cond_sq / n - c * c).max(0.0)),
            Some(m.cond_past / n - c * phi2),
        )
    } else {
        (None, None)
    };
    Ok(PosteriorQuantities {
        phi0: n / samples as f64,
        phi1,
        phi2,
        phi3: (m.first_sq / n - phi1 * phi1).max(0.0),
        phi4: phi4_plugin,
        phi5: (m.past_sq / n - phi2 * phi2).max(0.0),
        phi6: phi6_plugin,
        phi4_plugin,
        phi4_conditional,
        phi6_plugin,
        phi6_natural: m.first_past / n - phi1 * phi2,
        phi6_conditional,
        samples,
        survivors: m.kept,
    })
}

/// Draws `samples` posterior samples and reduces them to `φ̂⁽⁰⁾..φ̂⁽⁶⁾`.
///
/// Draws are split into fixed chunks, each with its own stream keyed by
/// `(seed, chunk)`, and reduced in chunk order, so the result is identical
/// for any worker count.
pub fn estimate_posterior_quantities<S: PosteriorSampler + ?Sized>(
    sampler: &S,
    cost: &dyn CostFunction,
    budget: f64,
    samples: usize,
    seed: u64,
) -> Result<PosteriorQuantities, NoSurvivors> {
    assert!(samples >= 1, "at least one posterior draw is required");
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, &[c as u64]);
            let len = CHUNK.min(samples - c * CHUNK);
            let mut m = Moments::default();
            for _ in 0..len {
                let d = sampler.draw(&mut rng, cost);
                if d.past >= budget {
                    m.push(&d);
                }
            }
            m
        })
        .collect();
    let total = parts.iter().fold(Moments::default(), |acc, p| acc.merge(p));
    finish(total, samples)
}

/// Cantelli quadratic `A m² + B m + C` with `q = 1/Δ - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CantelliCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub q: f64,
}

pub fn cantelli_coefficients(
    q: &PosteriorQuantities,
    stage_budget: f64,
    tolerance: f64,
) -> CantelliCoefficients {
    let odds = 1.0 / tolerance - 1.0;
    let gap = q.phi2 - stage_budget;
    CantelliCoefficients {
        a: q.phi1 * q.phi1 - odds * q.phi4,
        b: 2.0 * q.phi1 * gap - odds * q.phi3 + odds * q.phi4 - odds * q.phi6,
        c: gap * gap - odds * q.phi5,
        q: odds,
    }
}

impl CantelliCoefficients {
    fn feasible(&self, quantities: &PosteriorQuantities, stage_budget: f64, m: u64) -> bool {
        let x = m as f64;
        quantities.mean(x) >= stage_budget && (self.a * x + self.b) * x + self.c >= 0.0
    }
}

/// Largest `m` in `[1, ⌊N/2⌋]` meeting both Cantelli conditions, else 0.
pub fn solve_ramp_size_cantelli(
    quantities: &PosteriorQuantities,
    stage_budget: f64,
    tolerance: f64,
    population: u64,
) -> StageDecision {
    let cap = population / 2;
    if tolerance <= 0.0 {
        return StageDecision::new(0, population, Branch::ZeroTolerance);
    }
    if quantities.phi0 <= 0.0 || quantities.survivors == 0 {
        return StageDecision::new(0, population, Branch::NoSurvivors);
    }
    let coef = cantelli_coefficients(quantities, stage_budget, tolerance);
    let ok = |m: u64| coef.feasible(quantities, stage_budget, m);

    let best = if cap <= GRID_SCAN_LIMIT {
        (1..=cap).rev().find(|&m| ok(m))
    } else {
        boundary_candidates(quantities, &coef, stage_budget, cap)
            .into_iter()
            .filter(|&m| ok(m))
            .max()
    };
    match best {
        Some(m) if m == cap => StageDecision::new(m, population, Branch::CapAtHalf),
        Some(m) => StageDecision::new(m, population, Branch::RootSelected),
        None => StageDecision::new(0, population, Branch::EmptyValidSet),
    }
}

/// Integers next to every point where either condition can switch, plus the
/// ends of the range. The largest feasible integer is always among them.
fn boundary_candidates(
    quantities: &PosteriorQuantities,
    coef: &CantelliCoefficients,
    stage_budget: f64,
    cap: u64,
) -> Vec<u64> {
    let mut points = Vec::new();
    if quantities.phi1 != 0.0 {
        points.push((stage_budget - quantities.phi2) / quantities.phi1);
    }
    let CantelliCoefficients { a, b, c, .. } = *coef;
    if a != 0.0 {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let s = disc.sqrt();
            points.push((-b + s) / (2.0 * a));
            points.push((-b - s) / (2.0 * a));
        }
    } else if b != 0.0 {
        points.push(-c / b);
    }
    let mut out = vec![1, cap];
    for p in points.into_iter().filter(|p| p.is_finite()) {
        let f = p.floor();
        for x in [f - 1.0, f, f + 1.0] {
            if x >= 1.0 && x <= cap as f64 {
                out.push(x as u64);
            }
        }
    }
    out
}

/// Stage policy running the Monte-Carlo estimator and Cantelli solver.
#[derive(Debug, Clone)]
pub struct CantelliPolicy {
    pub cost: CostSpec,
    pub samples: usize,
    pub seed: u64,
    pub covariance: CovarianceEstimator,
    last: Option<PosteriorQuantities>,
}

impl CantelliPolicy {
    pub fn new(cost: CostSpec, samples: usize, seed: u64, covariance: CovarianceEstimator) -> Self {
        Self {
            cost,
            samples,
            seed,
            covariance,
            last: None,
        }
    }
}

impl StagePolicy for CantelliPolicy {
    fn decide(&mut self, ctx: &StageContext<'_>) -> StageDecision {
        self.last = None;
        if ctx.tolerance <= 0.0 {
            return StageDecision::new(0, ctx.population, Branch::ZeroTolerance);
        }
        let history = if self.cost.is_treatment_effect() {
            TreatedHistory::Aggregate {
                count: ctx.stats.treated.count,
                sum: ctx.stats.treated.sum(),
            }
        } else {
            TreatedHistory::Units(ctx.treated_history.iter().flatten().copied().collect())
        };
        let sampler = gaussian_exact_sampler(&ctx.posterior, &ctx.variance, history);
        let seed = rng::derive_seed(self.seed, &[ctx.stage as u64]);
        match estimate_posterior_quantities(&sampler, &self.cost, ctx.budget, self.samples, seed) {
            Ok(q) => {
                let q = q.with_covariance(self.covariance);
                self.last = Some(q);
                solve_ramp_size_cantelli(&q, ctx.stage_budget, ctx.tolerance, ctx.population)
            }
            Err(_) => StageDecision::new(0, ctx.population, Branch::NoSurvivors),
        }
    }

    fn needs_treated_outcomes(&self) -> bool {
        !self.cost.is_treatment_effect()
    }

    fn last_quantities(&self) -> Option<PosteriorQuantities> {
        self.last
    }
}

/// Runs the Monte-Carlo ramp rule stage by stage against `feed`.
pub fn run_cantelli_experiment<F: StageFeed + ?Sized>(
    setup: &ExperimentSetup,
    schedule: &RiskSchedule,
    feed: &mut F,
    policy: &mut CantelliPolicy,
) -> Result<ExperimentTrace, ExperimentAborted> {
    drive(setup, StopRule::Schedule(schedule), feed, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::{init_posterior, GaussianPrior};

    struct ZeroCost;
    impl CostFunction for ZeroCost {
        fn cost(&self, _: f64, _: f64) -> f64 {
            0.0
        }
    }

    fn quantities(phi: [f64; 7]) -> PosteriorQuantities {
        PosteriorQuantities {
            phi0: phi[0],
            phi1: phi[1],
            phi2: phi[2],
            phi3: phi[3],
            phi4: phi[4],
            phi5: phi[5],
            phi6: phi[6],
            phi4_plugin: phi[4],
            phi4_conditional: Some(phi[4]),
            phi6_plugin: phi[6],
            phi6_natural: phi[6],
            phi6_conditional: Some(phi[6]),
            samples: 100,
            survivors: (phi[0] * 100.0) as usize,
        }
    }

    fn flat_sampler(history: TreatedHistory) -> GaussianExactSampler {
        let prior = GaussianPrior::symmetric(0.0, 100.0).unwrap();
        gaussian_exact_sampler(
            &init_posterior(&prior),
            &OutcomeVariance::known(10.0, 10.0).unwrap(),
            history,
        )
    }

    #[test]
    fn zero_cost_never_ruins() {
        let s = flat_sampler(TreatedHistory::Units(vec![1.0; 5]));
        let q = estimate_posterior_quantities(&s, &ZeroCost, -500.0, 3000, 1).unwrap();
        assert_eq!(q.phi0, 1.0);
        for v in [
            q.phi1,
            q.phi2,
            q.phi3,
            q.phi4,
            q.phi5,
            q.phi6,
            q.phi6_natural,
        ] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn identical_draws_have_no_spread() {
        let d = CostDraw {
            first: 2.0,
            second: 2.0,
            past: -3.0,
            conditional: Some(2.0),
        };
        let q = quantities_from_draws(&[d; 50], -10.0).unwrap();
        assert_eq!((q.phi1, q.phi2), (2.0, -3.0));
        assert_eq!(q.phi3, 0.0);
        assert_eq!(q.phi4, 0.0);
        assert_eq!(q.phi5, 0.0);
        assert_eq!(q.phi6_natural, 0.0);
    }

    #[test]
    fn no_history_means_no_past_cost() {
        let s = flat_sampler(TreatedHistory::Aggregate { count: 0, sum: 0.0 });
        let q =
            estimate_posterior_quantities(&s, &CostSpec::TreatmentEffect, -500.0, 5000, 9).unwrap();
        assert_eq!(q.phi2, 0.0);
        assert_eq!(q.phi5, 0.0);
        assert_eq!(q.phi0, 1.0);
    }

    #[test]
    fn empty_survivor_set() {
        let d = CostDraw {
            first: 0.0,
            second: 0.0,
            past: -600.0,
            conditional: None,
        };
        assert_eq!(
            quantities_from_draws(&[d; 4], -500.0),
            Err(NoSurvivors { samples: 4 })
        );
        let dec = solve_ramp_size_cantelli(&quantities([0.0; 7]), -10.0, 0.05, 100);
        assert_eq!((dec.m, dec.branch), (0, Branch::NoSurvivors));
    }

    #[test]
    fn linear_case_with_unit_variance() {
        // q = 1, A = 0, B = -1, C = 100: need 100 - m >= 0.
        let q = quantities([1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let c = cantelli_coefficients(&q, -10.0, 0.5);
        assert_eq!((c.a, c.b, c.c, c.q), (0.0, -1.0, 100.0, 1.0));
        assert_eq!(solve_ramp_size_cantelli(&q, -10.0, 0.5, 1000).m, 100);
        assert_eq!(solve_ramp_size_cantelli(&q, -10.0, 0.5, 150).m, 75);
        assert_eq!(
            solve_ramp_size_cantelli(&q, -10.0, 0.5, 150).branch,
            Branch::CapAtHalf
        );
    }

    #[test]
    fn zero_tolerance() {
        let q = quantities([1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(solve_ramp_size_cantelli(&q, -10.0, 0.0, 100).m, 0);
    }

    #[test]
    fn cantelli_bound_at_one_sd() {
        let var: f64 = 4.0;
        let lambda = var.sqrt();
        assert!((1.0 / (1.0 + lambda * lambda / var) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn point_prior_pins_means() {
        let prior = GaussianPrior::new(PerArm::new(0.5, -2.0), PerArm::splat(1e-300)).unwrap();
        let s = gaussian_exact_sampler(
            &init_posterior(&prior),
            &OutcomeVariance::known(1.0, 1.0).unwrap(),
            TreatedHistory::Aggregate { count: 0, sum: 0.0 },
        );
        let mut r = rng::stream(1, &[]);
        for _ in 0..100 {
            assert_eq!(s.draw_means(&mut r), PerArm::new(0.5, -2.0));
        }
    }

    #[test]
    fn large_population_uses_boundary_search() {
        let q = quantities([1.0, 0.3, -50.0, 40.0, 0.01, 900.0, -2.0]);
        for (b, d) in [(-400.0, 0.01), (-100.0, 0.05), (-5000.0, 0.002)] {
            let coef = cantelli_coefficients(&q, b, d);
            let grid = (1..=30_000u64)
                .rev()
                .find(|&m| coef.feasible(&q, b, m))
                .unwrap_or(0);
            assert_eq!(solve_ramp_size_cantelli(&q, b, d, 60_000).m, grid);
        }
    }
}

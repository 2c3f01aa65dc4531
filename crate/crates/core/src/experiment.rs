//! Stage-by-stage experiment driver shared by every ramp policy.
//!
//! A [`StageFeed`] supplies the population of each stage and, once a
//! treatment size is chosen, the observed outcome sums. A [`StagePolicy`]
//! turns the current posterior into a [`StageDecision`]. [`drive`] loops
//! until the tolerance product binds, the schedule runs out, or the feed
//! stops.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{Arm, PerArm};
use crate::cantelli::PosteriorQuantities;
use crate::posterior::{
    compute_posterior, estimate_arm_variance, update_stats_unchecked, GaussianPrior,
    OutcomeVariance, PosteriorState, StageSums, SufficientStats, VarianceKind,
};
use crate::schedule::{RiskSchedule, PRODUCT_SLACK};

/// Which rule produced a treatment size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    CapAtHalf,
    NoRealRoot,
    RootSelected,
    EmptyValidSet,
    ZeroTolerance,
    /// Monte-Carlo solver found no posterior draw with the budget intact.
    NoSurvivors,
    /// Baseline assignment drawn per unit.
    Sampled,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::CapAtHalf => "cap_at_half",
            Branch::NoRealRoot => "no_real_root",
            Branch::RootSelected => "root_selected",
            Branch::EmptyValidSet => "empty_valid_set",
            Branch::ZeroTolerance => "zero_tolerance",
            Branch::NoSurvivors => "no_survivors",
            Branch::Sampled => "sampled",
        }
    }
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageDecision {
    pub m: u64,
    pub branch: Branch,
    /// `m / N_t`, the per-unit treatment probability to use when `N_t` is
    /// only an estimate.
    pub assignment_probability: f64,
}

impl StageDecision {
    pub fn new(m: u64, population: u64, branch: Branch) -> Self {
        let assignment_probability = if population == 0 {
            0.0
        } else {
            m as f64 / population as f64
        };
        Self {
            m,
            branch,
            assignment_probability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("stage {stage}: {message}")]
pub struct FeedError {
    pub stage: usize,
    pub message: String,
}

/// What the experimenter sees after running a stage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageObservation {
    pub sums: StageSums,
    /// Units actually treated; differs from the decision only for feeds that
    /// realise assignment themselves.
    pub treated: u64,
    /// True stage cost including counterfactuals, when the feed knows it.
    pub true_cost: Option<f64>,
    /// Individual treated outcomes `Y(1)`, when the policy asked for them.
    pub treated_outcomes: Option<Vec<f64>>,
}

pub trait StageFeed {
    /// `N_t` for 1-based stage `t`, or `None` when no further stage exists.
    fn population(&mut self, stage: usize) -> Option<u64>;

    /// Runs stage `t` with `m` treated units.
    fn observe(&mut self, stage: usize, m: u64) -> Result<StageObservation, FeedError>;
}

/// Source of the outcome variances used at each stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum VarianceMode {
    Known {
        sigma_sq: PerArm<f64>,
    },
    /// Known but stage-dependent; the last entry repeats past the end.
    PerStage {
        sigma_sq: Vec<PerArm<f64>>,
    },
    /// Sample variances from past stages, `pretrial` until an arm has two
    /// observations.
    Estimated {
        pretrial: PerArm<f64>,
    },
}

impl VarianceMode {
    pub fn resolve(&self, stage: usize, stats: &SufficientStats) -> OutcomeVariance {
        match self {
            VarianceMode::Known { sigma_sq } => OutcomeVariance {
                sigma_sq: *sigma_sq,
                kind: VarianceKind::Known,
            },
            VarianceMode::PerStage { sigma_sq } => {
                let i = stage
                    .saturating_sub(1)
                    .min(sigma_sq.len().saturating_sub(1));
                OutcomeVariance {
                    sigma_sq: sigma_sq[i],
                    kind: VarianceKind::Known,
                }
            }
            VarianceMode::Estimated { pretrial } => {
                let pick = |arm: Arm| match estimate_arm_variance(stats, arm) {
                    Ok(v) if v > 0.0 && v.is_finite() => v,
                    _ => *pretrial.get(arm),
                };
                OutcomeVariance {
                    sigma_sq: PerArm::new(pick(Arm::Control), pick(Arm::Treatment)),
                    kind: VarianceKind::Estimated,
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), crate::posterior::PosteriorError> {
        let check = |v: &PerArm<f64>| {
            OutcomeVariance {
                sigma_sq: *v,
                kind: VarianceKind::Known,
            }
            .validate()
        };
        match self {
            VarianceMode::Known { sigma_sq } => check(sigma_sq),
            VarianceMode::PerStage { sigma_sq } => {
                if sigma_sq.is_empty() {
                    return Err(crate::posterior::PosteriorError::OutcomeVariance(
                        Arm::Control,
                    ));
                }
                sigma_sq.iter().try_for_each(check)
            }
            VarianceMode::Estimated { pretrial } => check(pretrial),
        }
    }
}

/// Everything a policy may look at before stage `t`.
#[derive(Debug, Clone, Copy)]
pub struct StageContext<'a> {
    pub stage: usize,
    pub population: u64,
    pub budget: f64,
    pub stage_budget: f64,
    pub tolerance: f64,
    pub prior: &'a GaussianPrior,
    pub variance: OutcomeVariance,
    pub posterior: PosteriorState,
    pub stats: &'a SufficientStats,
    /// Treated outcomes of earlier stages, populated only when the policy
    /// requests them.
    pub treated_history: &'a [Vec<f64>],
}

pub trait StagePolicy {
    fn decide(&mut self, ctx: &StageContext<'_>) -> StageDecision;

    /// Whether the feed must return individual treated outcomes.
    fn needs_treated_outcomes(&self) -> bool {
        false
    }

    /// Monte-Carlo estimates behind the last decision, if any.
    fn last_quantities(&self) -> Option<PosteriorQuantities> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub population: u64,
    pub stage_budget: Option<f64>,
    pub tolerance: Option<f64>,
    pub m: u64,
    pub branch: Branch,
    pub assignment_probability: f64,
    pub sums: StageSums,
    pub stage_cost: Option<f64>,
    pub cumulative_cost: Option<f64>,
    pub posterior: PosteriorState,
    pub variance: PerArm<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantities: Option<PosteriorQuantities>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ToleranceExhausted,
    ScheduleExhausted,
    FeedExhausted,
    Aborted { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTrace {
    pub budget: f64,
    pub records: Vec<StageRecord>,
    pub termination: Termination,
    pub stats: SufficientStats,
}

impl ExperimentTrace {
    /// `R_T`, zero for an experiment with no stages, `None` if any stage cost
    /// is unknown.
    pub fn cumulative_cost(&self) -> Option<f64> {
        match self.records.last() {
            None => Some(0.0),
            Some(r) => r.cumulative_cost,
        }
    }

    /// `R_T - B`.
    pub fn budget_surplus(&self) -> Option<f64> {
        self.cumulative_cost().map(|r| r - self.budget)
    }

    /// `R_T <= B`.
    pub fn ruined(&self) -> Option<bool> {
        self.cumulative_cost().map(|r| r <= self.budget)
    }

    pub fn ramp(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.m).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("experiment aborted: {error}")]
pub struct ExperimentAborted {
    pub error: FeedError,
    pub partial: Box<ExperimentTrace>,
}

/// Model configuration shared by every policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSetup {
    pub prior: GaussianPrior,
    pub variance: VarianceMode,
}

/// How the driver decides whether another stage runs.
#[derive(Debug, Clone, Copy)]
pub enum StopRule<'a> {
    /// Risk-schedule loop: continue while `∏(1 - Δ_r) > 1 - delta` and the
    /// schedule has entries.
    Schedule(&'a RiskSchedule),
    /// Budget-unaware loop over at most `stages` stages.
    Horizon { budget: f64, stages: usize },
}

impl StopRule<'_> {
    fn budget(&self) -> f64 {
        match self {
            StopRule::Schedule(s) => s.budget(),
            StopRule::Horizon { budget, .. } => *budget,
        }
    }
}

pub fn drive<F, P>(
    setup: &ExperimentSetup,
    rule: StopRule<'_>,
    feed: &mut F,
    policy: &mut P,
) -> Result<ExperimentTrace, ExperimentAborted>
where
    F: StageFeed + ?Sized,
    P: StagePolicy + ?Sized,
{
    let budget = rule.budget();
    let mut stats = SufficientStats::default();
    let mut records = Vec::new();
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut cumulative = Some(0.0);
    let mut product = 1.0;
    let wants_outcomes = policy.needs_treated_outcomes();

    let termination = 'stages: {
        for stage in 1usize.. {
            let (stage_budget, tolerance) = match rule {
                StopRule::Schedule(schedule) => {
                    if !(product > (1.0 - schedule.delta()) * (1.0 + PRODUCT_SLACK)) {
                        break 'stages Termination::ToleranceExhausted;
                    }
                    match schedule.stage(stage) {
                        Some((b, d)) => (b, d),
                        None => break 'stages Termination::ScheduleExhausted,
                    }
                }
                StopRule::Horizon { stages, budget } => {
                    if stage > stages {
                        break 'stages Termination::ScheduleExhausted;
                    }
                    (budget, f64::NAN)
                }
            };
            let Some(population) = feed.population(stage) else {
                break 'stages Termination::FeedExhausted;
            };

            let variance = setup.variance.resolve(stage, &stats);
            let posterior = compute_posterior(&setup.prior, &variance, &stats);
            let ctx = StageContext {
                stage,
                population,
                budget,
                stage_budget,
                tolerance,
                prior: &setup.prior,
                variance,
                posterior,
                stats: &stats,
                treated_history: &history,
            };
            let decision = policy.decide(&ctx);
            let quantities = policy.last_quantities();

            let observation = match feed.observe(stage, decision.m) {
                Ok(o) => o,
                Err(error) => {
                    let partial = ExperimentTrace {
                        budget,
                        records,
                        termination: Termination::Aborted {
                            message: error.to_string(),
                        },
                        stats,
                    };
                    return Err(ExperimentAborted {
                        error,
                        partial: Box::new(partial),
                    });
                }
            };
            let treated = observation.treated;
            let stage_cost = if treated == 0 {
                Some(0.0)
            } else {
                observation.true_cost
            };
            cumulative = match (cumulative, stage_cost) {
                (Some(c), Some(r)) => Some(c + r),
                _ => None,
            };
            stats = update_stats_unchecked(&stats, treated, population, &observation.sums);
            if wants_outcomes {
                history.push(observation.treated_outcomes.unwrap_or_default());
            }
            if tolerance.is_finite() {
                product *= 1.0 - tolerance;
            }

            let decision = if treated == decision.m {
                decision
            } else {
                StageDecision::new(treated, population, decision.branch)
            };
            records.push(StageRecord {
                stage,
                population,
                stage_budget: matches!(rule, StopRule::Schedule(_)).then_some(stage_budget),
                tolerance: tolerance.is_finite().then_some(tolerance),
                m: decision.m,
                branch: decision.branch,
                assignment_probability: decision.assignment_probability,
                sums: observation.sums,
                stage_cost,
                cumulative_cost: cumulative,
                posterior,
                variance: variance.sigma_sq,
                quantities,
            });
        }
        unreachable!("stage loop only exits through break")
    };

    Ok(ExperimentTrace {
        budget,
        records,
        termination,
        stats,
    })
}

//! Replicated experiments against simulated scenarios.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cantelli::{CantelliPolicy, CostFunction, CostSpec, CovarianceEstimator};
use crate::experiment::{
    drive, ExperimentAborted, ExperimentSetup, ExperimentTrace, FeedError, StageFeed,
    StageObservation, StopRule,
};
use crate::posterior::StageSums;
use crate::ramp::AnalyticPolicy;
use crate::rng;
use crate::scenario::{generate_stage_outcomes, Scenario, ScenarioError};
use crate::schedule::RiskSchedule;
use crate::thompson::{ExponentError, ThompsonPolicy};

/// Feed that realises each stage from a scenario. The first `m` units of
/// the stage are treated; units are exchangeable, so this is a uniformly
/// random assignment.
#[derive(Debug, Clone)]
pub struct SimulationFeed<'a> {
    scenario: &'a Scenario,
    cost: CostSpec,
    seed: u64,
    record_treated: bool,
}

impl<'a> SimulationFeed<'a> {
    pub fn new(scenario: &'a Scenario, cost: CostSpec, seed: u64) -> Self {
        Self {
            scenario,
            cost,
            seed,
            record_treated: false,
        }
    }

    /// Return individual treated outcomes with each observation.
    pub fn recording_treated(mut self, yes: bool) -> Self {
        self.record_treated = yes;
        self
    }
}

impl StageFeed for SimulationFeed<'_> {
    fn population(&mut self, stage: usize) -> Option<u64> {
        self.scenario.stage(stage).map(|s| s.population)
    }

    fn observe(&mut self, stage: usize, m: u64) -> Result<StageObservation, FeedError> {
        let spec = self.scenario.stage(stage).ok_or_else(|| FeedError {
            stage,
            message: "stage beyond scenario horizon".into(),
        })?;
        if m > spec.population {
            return Err(FeedError {
                stage,
                message: format!("{m} treated exceeds population {}", spec.population),
            });
        }
        let mut r = rng::stream(self.seed, &[stage as u64]);
        let y = generate_stage_outcomes(self.scenario, stage, &mut r);
        let m = m as usize;
        let (treated, control) = (&y.treatment[..m], &y.control[m..]);
        let sums = StageSums {
            treated_sum: treated.iter().sum(),
            control_sum: control.iter().sum(),
            treated_sumsq: treated.iter().map(|v| v * v).sum(),
            control_sumsq: control.iter().map(|v| v * v).sum(),
        };
        let true_cost = treated
            .iter()
            .zip(&y.control[..m])
            .map(|(&y1, &y0)| self.cost.cost(y1, y0))
            .sum();
        Ok(StageObservation {
            sums,
            treated: m as u64,
            true_cost: Some(true_cost),
            treated_outcomes: self.record_treated.then(|| treated.to_vec()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Algorithm {
    RrcAnalytic,
    RrcCantelli {
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        covariance: CovarianceEstimator,
    },
    Thompson {
        c: f64,
        #[serde(default)]
        cap_at_half: bool,
    },
}

fn default_samples() -> usize {
    crate::cantelli::DEFAULT_SAMPLES
}

impl Algorithm {
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::RrcAnalytic => "rrc_analytic",
            Algorithm::RrcCantelli { .. } => "rrc_cantelli",
            Algorithm::Thompson { .. } => "thompson",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub scenario: Scenario,
    pub setup: ExperimentSetup,
    /// Schedule for the ramp rules; the baseline reads only its budget and
    /// length.
    pub schedule: RiskSchedule,
    pub algorithm: Algorithm,
    pub cost: CostSpec,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error("invalid model setup: {0}")]
    Setup(#[from] crate::posterior::PosteriorError),
    #[error("replication {replication}: {source}")]
    Aborted {
        replication: usize,
        source: ExperimentAborted,
    },
    #[error("replication {replication}: cost unavailable")]
    MissingCost { replication: usize },
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("at least one replication is required")]
    NoReplications,
}

/// Runs replication `index` of the study.
pub fn run_replication(
    config: &StudyConfig,
    index: usize,
) -> Result<ExperimentTrace, SimulationError> {
    let outcome_seed = rng::derive_seed(config.seed, &[index as u64, 0]);
    let policy_seed = rng::derive_seed(config.seed, &[index as u64, 1]);
    let feed = SimulationFeed::new(&config.scenario, config.cost, outcome_seed);
    let result = match config.algorithm {
        Algorithm::RrcAnalytic => drive(
            &config.setup,
            StopRule::Schedule(&config.schedule),
            &mut feed.clone(),
            &mut AnalyticPolicy,
        ),
        Algorithm::RrcCantelli {
            samples,
            covariance,
        } => {
            let mut policy = CantelliPolicy::new(config.cost, samples, policy_seed, covariance);
            let mut feed = feed.recording_treated(!config.cost.is_treatment_effect());
            drive(
                &config.setup,
                StopRule::Schedule(&config.schedule),
                &mut feed,
                &mut policy,
            )
        }
        Algorithm::Thompson { c, cap_at_half } => {
            let mut policy = ThompsonPolicy::new(c, cap_at_half, policy_seed);
            drive(
                &config.setup,
                StopRule::Horizon {
                    budget: config.schedule.budget(),
                    stages: config.schedule.len(),
                },
                &mut feed.clone(),
                &mut policy,
            )
        }
    };
    result.map_err(|source| SimulationError::Aborted {
        replication: index,
        source,
    })
}

/// 25%, 50% and 75% quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

impl Quartiles {
    /// Linear-interpolation quantiles (Hyndman-Fan type 7).
    pub fn of(values: &mut [f64]) -> Quartiles {
        values.sort_by(f64::total_cmp);
        Quartiles {
            q25: quantile_sorted(values, 0.25),
            q50: quantile_sorted(values, 0.5),
            q75: quantile_sorted(values, 0.75),
        }
    }
}

/// Type-7 quantile of ascending `sorted`; `NaN` when empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: usize,
    pub m: Quartiles,
    /// `R_t - B`.
    pub surplus: Quartiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub scenario: String,
    pub algorithm: String,
    pub budget: f64,
    pub delta: f64,
    pub replications: usize,
    pub seed: u64,
    pub ruin_count: usize,
    /// `#{R_T <= B} / K`.
    pub ruin_rate: f64,
    /// Normal-approximation 95% half-width of the ruin rate.
    pub ruin_half_width: f64,
    pub stages: Vec<StageSummary>,
    pub final_surplus: Quartiles,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub summary: ReplicationSummary,
    pub traces: Vec<ExperimentTrace>,
}

/// `m_t` and `R_t - B` for `t = 1..=horizon`; stages after an early stop
/// count as untreated.
fn stage_paths(trace: &ExperimentTrace, horizon: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = Vec::with_capacity(horizon);
    let mut surplus = Vec::with_capacity(horizon);
    let mut cum = 0.0;
    for t in 1..=horizon {
        match trace.records.get(t - 1) {
            Some(r) => {
                cum = r.cumulative_cost.unwrap_or(f64::NAN);
                m.push(r.m as f64);
            }
            None => m.push(0.0),
        }
        surplus.push(cum - trace.budget);
    }
    (m, surplus)
}

pub fn summarize(
    config: &StudyConfig,
    traces: &[ExperimentTrace],
) -> Result<ReplicationSummary, SimulationError> {
    let k = traces.len();
    if k == 0 {
        return Err(SimulationError::NoReplications);
    }
    let horizon = config.schedule.len().max(config.scenario.horizon());
    let mut ruin_count = 0;
    let mut finals = Vec::with_capacity(k);
    let mut m_cols = vec![Vec::with_capacity(k); horizon];
    let mut s_cols = vec![Vec::with_capacity(k); horizon];
    for (i, trace) in traces.iter().enumerate() {
        let ruined = trace
            .ruined()
            .ok_or(SimulationError::MissingCost { replication: i })?;
        ruin_count += ruined as usize;
        finals.push(trace.budget_surplus().unwrap_or(f64::NAN));
        let (m, s) = stage_paths(trace, horizon);
        for t in 0..horizon {
            m_cols[t].push(m[t]);
            s_cols[t].push(s[t]);
        }
    }
    let rate = ruin_count as f64 / k as f64;
    let stages = m_cols
        .iter_mut()
        .zip(s_cols.iter_mut())
        .enumerate()
        .map(|(i, (m, s))| StageSummary {
            stage: i + 1,
            m: Quartiles::of(m),
            surplus: Quartiles::of(s),
        })
        .collect();
    Ok(ReplicationSummary {
        scenario: config.scenario.name.clone(),
        algorithm: config.algorithm.label().into(),
        budget: config.schedule.budget(),
        delta: config.schedule.delta(),
        replications: k,
        seed: config.seed,
        ruin_count,
        ruin_rate: rate,
        ruin_half_width: 1.96 * (rate * (1.0 - rate) / k as f64).sqrt(),
        stages,
        final_surplus: Quartiles::of(&mut finals),
    })
}

fn validate(config: &StudyConfig) -> Result<(), SimulationError> {
    if config.replications == 0 {
        return Err(SimulationError::NoReplications);
    }
    config.scenario.validate()?;
    config.setup.prior.validate()?;
    config.setup.variance.validate()?;
    if let Algorithm::Thompson { c, .. } = config.algorithm {
        if !(c > 0.0 && c.is_finite()) {
            return Err(ExponentError(c).into());
        }
    }
    Ok(())
}

/// Runs every replication on a pool of `threads` workers (rayon's default
/// when `None`). Output does not depend on the worker count.
pub fn run_replications(
    config: &StudyConfig,
    threads: Option<usize>,
) -> Result<StudyResult, SimulationError> {
    validate(config)?;
    let work = || -> Result<Vec<ExperimentTrace>, SimulationError> {
        (0..config.replications)
            .into_par_iter()
            .map(|i| run_replication(config, i))
            .collect()
    };
    let traces = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| SimulationError::Pool(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let summary = summarize(config, &traces)?;
    Ok(StudyResult { summary, traces })
}

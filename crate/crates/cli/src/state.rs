//! Persistent single-step mode: one closed-form decision per invocation.
//!
//! The state file holds the model, every decided stage and the observed sums
//! of each completed stage. Re-sending the request that produced the latest
//! decision returns that decision unchanged, so a retried call is harmless.

use std::path::Path;

use rampguard_core::schedule::{product_within_tolerance, PRODUCT_SLACK};
use rampguard_core::{
    compute_posterior, solve_ramp_size, update_stats, Branch, GaussianPrior, PerArm,
    PosteriorState, RampInputs, StageSums, SufficientStats, VarianceMode,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const STATE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: usize,
    pub population: u64,
    pub stage_budget: f64,
    pub tolerance: f64,
    pub m: u64,
    pub assignment_probability: f64,
    pub branch: Branch,
    /// Posterior the decision was based on.
    pub posterior: PosteriorState,
    pub sigma_sq: PerArm<f64>,
    /// Filled in by the next invocation.
    pub observed: Option<StageSums>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentState {
    pub version: u32,
    pub budget: f64,
    pub delta: f64,
    pub prior: GaussianPrior,
    pub variance: VarianceMode,
    /// Sufficient statistics over every observed stage.
    pub stats: SufficientStats,
    pub stages: Vec<StageEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NextStageRequest {
    /// Sums of the most recently decided stage.
    pub observed: Option<StageSums>,
    pub population: u64,
    pub tolerance: f64,
    pub stage_budget: f64,
    /// Stage being decided; inferred when absent.
    pub stage: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NextStage {
    Decided {
        entry: StageEntry,
        repeated: bool,
    },
    /// `∏(1 - Δ_r)` has reached `1 - δ`; no stage may run.
    Exhausted {
        completed: usize,
        product: f64,
    },
}

impl ExperimentState {
    pub fn new(
        budget: f64,
        delta: f64,
        prior: GaussianPrior,
        variance: VarianceMode,
    ) -> Result<Self, CliError> {
        if !(budget < 0.0) {
            return Err(CliError::Config(format!(
                "budget must be negative, got {budget}"
            )));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(CliError::Config(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        prior
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        variance
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self {
            version: STATE_VERSION,
            budget,
            delta,
            prior,
            variance,
            stats: SufficientStats::default(),
            stages: Vec::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let state: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if state.version != STATE_VERSION {
            return Err(CliError::Config(format!(
                "{}: unsupported state version {}",
                path.display(),
                state.version
            )));
        }
        Ok(state)
    }

    /// Writes through a temporary file so a crash never leaves half a state.
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let tmp = path.with_extension("tmp");
        crate::output::write_json(&tmp, self)?;
        std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
    }

    /// `∏(1 - Δ_r)` over decided stages.
    pub fn tolerance_product(&self) -> f64 {
        self.stages.iter().map(|s| 1.0 - s.tolerance).product()
    }

    fn is_repeat(&self, req: &NextStageRequest) -> Result<bool, CliError> {
        let n = self.stages.len();
        let Some(last) = self.stages.last() else {
            return Ok(false);
        };
        let previous = n.checked_sub(2).and_then(|i| self.stages[i].observed);
        let same = last.observed.is_none()
            && last.population == req.population
            && last.tolerance == req.tolerance
            && last.stage_budget == req.stage_budget
            && previous == req.observed;
        match req.stage {
            None => Ok(same),
            Some(t) if t == n && same => Ok(true),
            Some(t) if t == n => Err(CliError::Config(format!(
                "stage {t} was already decided with different inputs"
            ))),
            Some(t) if t == n + 1 => Ok(false),
            Some(t) => Err(CliError::Config(format!(
                "stage {t} is out of sequence; the state has {n} decided stages"
            ))),
        }
    }

    /// Records the observations of the pending stage and decides the next.
    pub fn next_stage(&mut self, req: &NextStageRequest) -> Result<NextStage, CliError> {
        if req.population == 0 {
            return Err(CliError::Config("population must be positive".into()));
        }
        if !(0.0..1.0).contains(&req.tolerance) {
            return Err(CliError::Schedule(format!(
                "stage tolerance must lie in [0, 1), got {}",
                req.tolerance
            )));
        }
        if !(req.stage_budget >= self.budget) {
            return Err(CliError::Schedule(format!(
                "stage budget {} lies below the global budget {}",
                req.stage_budget, self.budget
            )));
        }
        if self.is_repeat(req)? {
            let entry = self.stages.last().expect("repeat implies a stage").clone();
            return Ok(NextStage::Decided {
                entry,
                repeated: true,
            });
        }

        match (self.stages.last_mut(), req.observed) {
            (None, Some(_)) => {
                return Err(CliError::Config(
                    "observations given but no stage has been decided yet".into(),
                ))
            }
            (Some(last), None) if last.observed.is_none() => {
                return Err(CliError::Config(format!(
                    "observed sums for stage {} are required",
                    last.stage
                )))
            }
            (Some(last), Some(sums)) => match last.observed {
                None => {
                    self.stats = update_stats(&self.stats, last.m, last.population, &sums)
                        .map_err(|e| CliError::Config(e.to_string()))?;
                    last.observed = Some(sums);
                }
                Some(seen) if seen == sums => {}
                Some(_) => {
                    return Err(CliError::Config(format!(
                        "stage {} already has different observations",
                        last.stage
                    )))
                }
            },
            _ => {}
        }

        let product = self.tolerance_product();
        if !(product > (1.0 - self.delta) * (1.0 + PRODUCT_SLACK)) {
            return Ok(NextStage::Exhausted {
                completed: self.stages.len(),
                product,
            });
        }
        if !product_within_tolerance(product * (1.0 - req.tolerance), self.delta) {
            return Err(CliError::Schedule(format!(
                "tolerance {} would push the product below 1 - delta; at most {} remains",
                req.tolerance,
                1.0 - (1.0 - self.delta) / product
            )));
        }

        let stage = self.stages.len() + 1;
        let variance = self.variance.resolve(stage, &self.stats);
        let posterior = compute_posterior(&self.prior, &variance, &self.stats);
        let decision = solve_ramp_size(&RampInputs {
            posterior,
            variance,
            treated_before: self.stats.treated.count,
            treated_sum_before: self.stats.treated.sum(),
            stage_budget: req.stage_budget,
            tolerance: req.tolerance,
            population: req.population,
        });
        let entry = StageEntry {
            stage,
            population: req.population,
            stage_budget: req.stage_budget,
            tolerance: req.tolerance,
            m: decision.m,
            assignment_probability: decision.assignment_probability,
            branch: decision.branch,
            posterior,
            sigma_sq: variance.sigma_sq,
            observed: None,
        };
        self.stages.push(entry.clone());
        Ok(NextStage::Decided {
            entry,
            repeated: false,
        })
    }
}

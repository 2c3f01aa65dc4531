//! JSON run configuration and its resolution into a study.

use std::path::{Path, PathBuf};

use rampguard_core::scenario::StageSpec;
use rampguard_core::schedule::{ToleranceGenerator, ToleranceSpec};
use rampguard_core::{
    builtin_scenario, Algorithm, CostSpec, CovarianceEstimator, ExperimentSetup, GaussianPrior,
    PerArm, RiskSchedule, Scenario, ScheduleSpec, StudyConfig, VarianceMode,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_REPLICATIONS: usize = 500;
pub const DEFAULT_PRIOR_VARIANCE: f64 = 100.0;

/// A built-in scenario by name, or a full definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Name(String),
    Inline(Scenario),
}

/// Algorithm by bare name, or a tagged object carrying its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlgorithmSpec {
    Name(String),
    Full(Algorithm),
}

impl Default for AlgorithmSpec {
    fn default() -> Self {
        AlgorithmSpec::Full(Algorithm::RrcAnalytic)
    }
}

/// Outcome variance handed to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum VarianceSpec {
    /// Fixed `σ²`; the scenario's true per-stage variances when omitted.
    Known {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma_sq: Option<PerArm<f64>>,
    },
    /// Sample variances of observed outcomes after `pretrial_sigma_sq`.
    Estimated {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pretrial_sigma_sq: Option<PerArm<f64>>,
    },
}

impl Default for VarianceSpec {
    fn default() -> Self {
        VarianceSpec::Known { sigma_sq: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    /// Write per-replication rows to `schedule.csv`.
    #[serde(default = "yes")]
    pub traces: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_out(),
            traces: true,
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

pub fn default_prior() -> GaussianPrior {
    GaussianPrior::symmetric(0.0, DEFAULT_PRIOR_VARIANCE).expect("positive variance")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioRef,
    #[serde(default)]
    pub algorithm: AlgorithmSpec,
    pub schedule: ScheduleSpec,
    #[serde(default = "default_prior")]
    pub prior: GaussianPrior,
    #[serde(default)]
    pub variance: VarianceSpec,
    #[serde(default)]
    pub cost: CostSpec,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// Replaces every stage's `N_t`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<u64>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Command-line values layered over a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub algorithm: Option<String>,
    pub thompson_c: Option<f64>,
    pub budget: Option<f64>,
    pub delta: Option<f64>,
    pub stages: Option<usize>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub variance_mode: Option<String>,
    pub pretrial_sigma_sq: Option<f64>,
    pub population: Option<u64>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Builds a config from flags alone, or layers flags over `base`.
    pub fn with_overrides(base: Option<RunConfig>, o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match base {
            Some(c) => c,
            None => {
                let scenario = o
                    .scenario
                    .clone()
                    .ok_or_else(|| CliError::Config("--scenario or --config is required".into()))?;
                let (Some(budget), Some(delta)) = (o.budget, o.delta) else {
                    return Err(CliError::Config(
                        "--budget and --delta are required without --config".into(),
                    ));
                };
                RunConfig {
                    scenario: ScenarioRef::Name(scenario),
                    algorithm: AlgorithmSpec::default(),
                    schedule: ScheduleSpec::uniform(budget, delta, o.stages.unwrap_or(10)),
                    prior: default_prior(),
                    variance: VarianceSpec::default(),
                    cost: CostSpec::default(),
                    replications: DEFAULT_REPLICATIONS,
                    seed: 0,
                    population: None,
                    output: OutputSpec::default(),
                }
            }
        };
        if let Some(s) = &o.scenario {
            cfg.scenario = ScenarioRef::Name(s.clone());
        }
        if let Some(a) = &o.algorithm {
            cfg.algorithm = AlgorithmSpec::Name(a.clone());
        }
        if let Some(b) = o.budget {
            cfg.schedule.budget = b;
            cfg.schedule.stage_budgets = None;
        }
        if let Some(d) = o.delta {
            cfg.schedule.delta = d;
        }
        if let Some(t) = o.stages {
            cfg.schedule.stage_tolerances =
                ToleranceSpec::Generator(ToleranceGenerator::Uniform { stages: t });
            cfg.schedule.stage_budgets = None;
        }
        if let Some(k) = o.replications {
            cfg.replications = k;
        }
        if let Some(s) = o.seed {
            cfg.seed = s;
        }
        if let Some(p) = &o.out {
            cfg.output.dir = p.clone();
        }
        if o.population.is_some() {
            cfg.population = o.population;
        }
        match (o.variance_mode.as_deref(), o.pretrial_sigma_sq) {
            (Some("known"), _) => cfg.variance = VarianceSpec::Known { sigma_sq: None },
            (Some("estimated"), p) => {
                cfg.variance = VarianceSpec::Estimated {
                    pretrial_sigma_sq: p.map(PerArm::splat),
                }
            }
            (Some(other), _) => {
                return Err(CliError::Config(format!(
                    "unknown variance mode {other:?} (expected known or estimated)"
                )))
            }
            (None, Some(p)) => {
                if let VarianceSpec::Estimated { pretrial_sigma_sq } = &mut cfg.variance {
                    *pretrial_sigma_sq = Some(PerArm::splat(p));
                }
            }
            (None, None) => {}
        }
        if let Some(c) = o.thompson_c {
            match &mut cfg.algorithm {
                AlgorithmSpec::Full(Algorithm::Thompson { c: slot, .. }) => *slot = c,
                AlgorithmSpec::Name(n) if n == "thompson" => {
                    cfg.algorithm = AlgorithmSpec::Full(Algorithm::Thompson {
                        c,
                        cap_at_half: false,
                    })
                }
                _ => return Err(CliError::Config("--c applies only to thompson".into())),
            }
        }
        Ok(cfg)
    }

    pub fn resolve_algorithm(&self) -> Result<Algorithm, CliError> {
        match &self.algorithm {
            AlgorithmSpec::Full(a) => Ok(*a),
            AlgorithmSpec::Name(n) => match n.as_str() {
                "rrc_analytic" => Ok(Algorithm::RrcAnalytic),
                "rrc_cantelli" => Ok(Algorithm::RrcCantelli {
                    samples: rampguard_core::cantelli::DEFAULT_SAMPLES,
                    covariance: CovarianceEstimator::default(),
                }),
                "thompson" => Err(CliError::Config(
                    "thompson needs an exponent: pass --c or {\"name\":\"thompson\",\"c\":...}"
                        .into(),
                )),
                other => Err(CliError::Config(format!(
                    "unknown algorithm {other:?} (expected rrc_analytic, rrc_cantelli or thompson)"
                ))),
            },
        }
    }

    pub fn resolve_scenario(&self, horizon: usize) -> Result<Scenario, CliError> {
        let base = match &self.scenario {
            ScenarioRef::Name(n) => {
                builtin_scenario(n).map_err(|e| CliError::Config(e.to_string()))?
            }
            ScenarioRef::Inline(s) => s.clone(),
        };
        base.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(reshape(&base, horizon, self.population))
    }

    /// Resolves names and defaults and validates everything.
    pub fn study(&self) -> Result<StudyConfig, CliError> {
        let schedule: RiskSchedule = self.schedule.build()?;
        let algorithm = self.resolve_algorithm()?;
        let scenario = self.resolve_scenario(schedule.len())?;
        let variance = match &self.variance {
            VarianceSpec::Known { sigma_sq: Some(s) } => VarianceMode::Known { sigma_sq: *s },
            VarianceSpec::Known { sigma_sq: None } => VarianceMode::PerStage {
                sigma_sq: scenario.stages.iter().map(|s| s.variance).collect(),
            },
            VarianceSpec::Estimated {
                pretrial_sigma_sq: Some(p),
            } => VarianceMode::Estimated { pretrial: *p },
            VarianceSpec::Estimated {
                pretrial_sigma_sq: None,
            } => {
                return Err(CliError::Config(
                    "estimated variance needs a pretrial value (--pretrial-sigma-sq)".into(),
                ))
            }
        };
        let setup = ExperimentSetup {
            prior: self.prior,
            variance,
        };
        setup
            .prior
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        setup
            .variance
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.replications == 0 {
            return Err(CliError::Config("replications must be at least 1".into()));
        }
        Ok(StudyConfig {
            scenario,
            setup,
            schedule,
            algorithm,
            cost: self.cost,
            replications: self.replications,
            seed: self.seed,
        })
    }
}

/// Stretches or truncates `base` to `horizon` stages by repeating the last
/// stage, optionally overriding every `N_t`.
pub fn reshape(base: &Scenario, horizon: usize, population: Option<u64>) -> Scenario {
    let last = *base.stages.last().expect("validated scenario");
    let mut out = base.clone();
    out.stages = (0..horizon.max(1))
        .map(|i| {
            let s = base.stages.get(i).copied().unwrap_or(last);
            StageSpec {
                population: population.unwrap_or(s.population),
                ..s
            }
        })
        .collect();
    out
}

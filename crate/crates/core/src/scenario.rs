//! Outcome-generating scenarios for simulation studies.
//!
//! A scenario lists, per stage, the population size and the true mean and
//! variance of each potential outcome. The family fixes the distribution
//! shape; every family is parametrised so that those two moments are exact.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::PerArm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Family {
    GaussianIid,
    /// Jointly Gaussian `(Y(0), Y(1))` with correlation `rho`.
    GaussianCorrelated {
        rho: f64,
    },
    /// `Y(w) = scale · Bern(μ(w) / scale)`.
    BernoulliScaled {
        scale: f64,
    },
    /// `Y(w) = μ(w) + s(w) · t_df` with `s(w)` chosen to match the variance.
    StudentTShifted {
        df: f64,
    },
    /// Independent Gaussians whose moments vary by stage.
    GaussianTimeVarying,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub population: u64,
    pub mean: PerArm<f64>,
    pub variance: PerArm<f64>,
}

impl StageSpec {
    /// `E[Y(1) - Y(0)]`.
    pub fn effect(&self) -> f64 {
        self.mean.treatment - self.mean.control
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub family: Family,
    pub stages: Vec<StageSpec>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario {0:?} has no stages")]
    NoStages(String),
    #[error("scenario {name:?} stage {stage}: {message}")]
    Stage {
        name: String,
        stage: usize,
        message: String,
    },
    #[error("scenario {name:?}: {message}")]
    Family { name: String, message: String },
    #[error("unknown scenario {0:?}")]
    Unknown(String),
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, t: usize) -> Option<&StageSpec> {
        t.checked_sub(1).and_then(|i| self.stages.get(i))
    }

    /// `V[Y(1) - Y(0)]` at 1-based stage `t`.
    pub fn effect_variance(&self, t: usize) -> Option<f64> {
        let s = self.stage(t)?;
        let v = s.variance;
        let cov = match self.family {
            Family::GaussianCorrelated { rho } => rho * (v.control * v.treatment).sqrt(),
            _ => 0.0,
        };
        Some(v.control + v.treatment - 2.0 * cov)
    }

    /// Copy with the first `t` stages kept and every population replaced.
    pub fn with_shape(&self, horizon: usize, population: u64) -> Scenario {
        let mut out = self.clone();
        let last = *self.stages.last().expect("validated scenario");
        out.stages = (0..horizon)
            .map(|i| StageSpec {
                population,
                ..self.stages.get(i).copied().unwrap_or(last)
            })
            .collect();
        out
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.stages.is_empty() {
            return Err(ScenarioError::NoStages(self.name.clone()));
        }
        let family = |message: String| ScenarioError::Family {
            name: self.name.clone(),
            message,
        };
        match self.family {
            Family::GaussianCorrelated { rho } if !(-1.0..=1.0).contains(&rho) => {
                return Err(family(format!("correlation {rho} outside [-1, 1]")));
            }
            Family::BernoulliScaled { scale } if !(scale > 0.0 && scale.is_finite()) => {
                return Err(family(format!("scale {scale} must be positive")));
            }
            Family::StudentTShifted { df } if !(df > 2.0 && df.is_finite()) => {
                return Err(family(format!(
                    "degrees of freedom {df} must exceed 2 for a finite variance"
                )));
            }
            _ => {}
        }
        for (i, s) in self.stages.iter().enumerate() {
            let bad = |message: String| ScenarioError::Stage {
                name: self.name.clone(),
                stage: i + 1,
                message,
            };
            if s.population == 0 {
                return Err(bad("population must be positive".into()));
            }
            for (arm, mean, var) in [
                ("control", s.mean.control, s.variance.control),
                ("treatment", s.mean.treatment, s.variance.treatment),
            ] {
                if !mean.is_finite() {
                    return Err(bad(format!("{arm} mean is not finite")));
                }
                if !(var > 0.0 && var.is_finite()) {
                    return Err(bad(format!("{arm} variance {var} must be positive")));
                }
                if let Family::BernoulliScaled { scale } = self.family {
                    let p = mean / scale;
                    if !(0.0..=1.0).contains(&p) {
                        return Err(bad(format!("{arm} mean {mean} outside [0, {scale}]")));
                    }
                    let implied = scale * scale * p * (1.0 - p);
                    if (implied - var).abs() > 1e-9 * implied.max(1.0) {
                        return Err(bad(format!(
                            "{arm} variance {var} differs from scale²p(1-p) = {implied}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Potential outcomes of one stage, unit `i` at index `i` of both vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageOutcomes {
    pub control: Vec<f64>,
    pub treatment: Vec<f64>,
}

impl StageOutcomes {
    pub fn len(&self) -> usize {
        self.control.len()
    }

    pub fn is_empty(&self) -> bool {
        self.control.is_empty()
    }
}

/// Draws `(Y_i(0), Y_i(1))` for every unit of 1-based stage `t`.
///
/// Panics if `t` is outside `1..=T`.
pub fn generate_stage_outcomes<R: Rng + ?Sized>(
    scenario: &Scenario,
    t: usize,
    rng: &mut R,
) -> StageOutcomes {
    let spec = scenario
        .stage(t)
        .unwrap_or_else(|| panic!("stage {t} outside 1..={}", scenario.horizon()));
    let n = spec.population as usize;
    let sd = spec.variance.map(f64::sqrt);
    let mu = spec.mean;
    let mut out = StageOutcomes {
        control: Vec::with_capacity(n),
        treatment: Vec::with_capacity(n),
    };
    match scenario.family {
        Family::GaussianIid | Family::GaussianTimeVarying => {
            for _ in 0..n {
                let z0: f64 = rng.sample(StandardNormal);
                let z1: f64 = rng.sample(StandardNormal);
                out.control.push(mu.control + sd.control * z0);
                out.treatment.push(mu.treatment + sd.treatment * z1);
            }
        }
        Family::GaussianCorrelated { rho } => {
            let tail = (1.0 - rho * rho).max(0.0).sqrt();
            for _ in 0..n {
                let z0: f64 = rng.sample(StandardNormal);
                let z1: f64 = rng.sample(StandardNormal);
                out.control.push(mu.control + sd.control * z0);
                out.treatment
                    .push(mu.treatment + sd.treatment * (rho * z0 + tail * z1));
            }
        }
        Family::BernoulliScaled { scale } => {
            let p = mu.map(|m| m / scale);
            for _ in 0..n {
                let c = rng.random::<f64>() < p.control;
                let t = rng.random::<f64>() < p.treatment;
                out.control.push(if c { scale } else { 0.0 });
                out.treatment.push(if t { scale } else { 0.0 });
            }
        }
        Family::StudentTShifted { df } => {
            let chi = ChiSquared::new(df).expect("validated degrees of freedom");
            let unit_scale = ((df - 2.0) / df).sqrt();
            let t_draw = |rng: &mut R| {
                let z: f64 = rng.sample(StandardNormal);
                z / (chi.sample(rng) / df).sqrt()
            };
            for _ in 0..n {
                let t0 = t_draw(rng);
                let t1 = t_draw(rng);
                out.control.push(mu.control + sd.control * unit_scale * t0);
                out.treatment
                    .push(mu.treatment + sd.treatment * unit_scale * t1);
            }
        }
    }
    out
}

const STAGES: usize = 10;
const POPULATION: u64 = 500;
const NOISE: f64 = 10.0;

fn constant(name: &str, family: Family, mean: PerArm<f64>, variance: PerArm<f64>) -> Scenario {
    Scenario {
        name: name.into(),
        family,
        stages: vec![
            StageSpec {
                population: POPULATION,
                mean,
                variance,
            };
            STAGES
        ],
    }
}

fn treatment_path(name: &str, path: impl Fn(usize) -> f64) -> Scenario {
    Scenario {
        name: name.into(),
        family: Family::GaussianTimeVarying,
        stages: (1..=STAGES)
            .map(|t| StageSpec {
                population: POPULATION,
                mean: PerArm::new(0.0, path(t)),
                variance: PerArm::splat(NOISE),
            })
            .collect(),
    }
}

fn scaled_bernoulli(scale: f64, p: PerArm<f64>) -> (PerArm<f64>, PerArm<f64>) {
    (
        p.map(|p| scale * p),
        p.map(|p| scale * scale * p * (1.0 - p)),
    )
}

const LINKEDIN_POPULATION: [u64; 6] = [10756, 10460, 10598, 7580, 10550, 10688];
const LINKEDIN_MEAN_CONTROL: [f64; 6] = [0.3648, 0.3780, 0.3752, 0.2317, 0.4009, 0.3930];
const LINKEDIN_MEAN_TREATMENT: [f64; 6] = [0.3659, 0.3788, 0.3754, 0.2317, 0.4010, 0.3941];
const LINKEDIN_VAR_CONTROL: [f64; 6] = [2.0993, 2.2769, 2.0909, 1.1165, 2.2705, 2.3982];
const LINKEDIN_VAR_TREATMENT: [f64; 6] = [2.0923, 2.2248, 2.0135, 1.0526, 2.2476, 2.4430];

fn linkedin() -> Scenario {
    Scenario {
        name: "linkedin".into(),
        family: Family::GaussianTimeVarying,
        stages: (0..6)
            .map(|i| StageSpec {
                population: LINKEDIN_POPULATION[i],
                mean: PerArm::new(LINKEDIN_MEAN_CONTROL[i], LINKEDIN_MEAN_TREATMENT[i]),
                variance: PerArm::new(LINKEDIN_VAR_CONTROL[i], LINKEDIN_VAR_TREATMENT[i]),
            })
            .collect(),
    }
}

/// Names accepted by [`builtin_scenario`].
pub const BUILTIN_NAMES: [&str; 9] = [
    "pte", "nte", "npte", "norm", "corr", "bern", "fat", "dec", "linkedin",
];

/// Every built-in scenario, in [`BUILTIN_NAMES`] order.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let noise = PerArm::splat(NOISE);
    let up = PerArm::new(0.0, 1.0);
    let down = PerArm::new(1.0, 0.0);
    let (bern_mean, bern_var) = scaled_bernoulli(6.4, PerArm::new(0.5786, 0.4224));
    vec![
        constant("pte", Family::GaussianIid, up, noise),
        constant("nte", Family::GaussianIid, down, noise),
        treatment_path("npte", |t| (-2.0 + 0.5 * (t as f64 - 1.0)).min(2.0)),
        constant("norm", Family::GaussianIid, down, noise),
        constant("corr", Family::GaussianCorrelated { rho: 0.8 }, down, noise),
        constant(
            "bern",
            Family::BernoulliScaled { scale: 6.4 },
            bern_mean,
            bern_var,
        ),
        constant(
            "fat",
            Family::StudentTShifted { df: 4.0 },
            down,
            PerArm::splat(5.0 * 4.0 / 2.0),
        ),
        treatment_path("dec", |t| -(t as f64 - 1.0)),
        linkedin(),
    ]
}

/// Looks up a built-in scenario by case-insensitive name.
pub fn builtin_scenario(name: &str) -> Result<Scenario, ScenarioError> {
    let key = name.to_ascii_lowercase();
    let key = match key.as_str() {
        "nor" => "norm".to_string(),
        "pnte" => "npte".to_string(),
        _ => key,
    };
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name == key)
        .ok_or_else(|| ScenarioError::Unknown(name.to_string()))
}

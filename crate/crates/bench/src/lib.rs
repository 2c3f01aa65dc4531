//! Fixtures shared by the criterion benches.

use rampguard_core::posterior::VarianceKind;
use rampguard_core::{
    builtin_scenario, Algorithm, ExperimentSetup, GaussianPrior, OutcomeVariance, PerArm,
    PosteriorState, RampInputs, RiskSchedule, StudyConfig, VarianceMode,
};

/// Second-stage inputs of the constant-effect ramp: 13 units already treated.
pub fn ramp_inputs() -> RampInputs {
    RampInputs {
        posterior: PosteriorState {
            mean: PerArm::new(-0.9, 0.02),
            variance: PerArm::new(0.77, 0.02),
        },
        variance: OutcomeVariance {
            sigma_sq: PerArm::splat(10.0),
            kind: VarianceKind::Known,
        },
        treated_before: 13,
        treated_sum_before: -12.0,
        stage_budget: -500.0,
        tolerance: 0.0051,
        population: 500,
    }
}

/// One replication study of a built-in scenario at `(-500, 0.05)`, ten stages.
pub fn study(scenario: &str, algorithm: Algorithm, replications: usize) -> StudyConfig {
    let scenario = builtin_scenario(scenario).expect("built-in scenario");
    let schedule = RiskSchedule::uniform(-500.0, 0.05, 10).expect("valid schedule");
    let variance = VarianceMode::PerStage {
        sigma_sq: scenario.stages.iter().map(|s| s.variance).collect(),
    };
    StudyConfig {
        scenario,
        setup: ExperimentSetup {
            prior: GaussianPrior::symmetric(0.0, 100.0).expect("positive variance"),
            variance,
        },
        schedule,
        algorithm,
        cost: Default::default(),
        replications,
        seed: 0,
    }
}

//! Risk-of-ruin constrained ramp scheduling for phased feature releases.
//!
//! A phased release exposes a growing share of users to a new feature over
//! `T` stages. Treating a user whose outcome is worse under the feature
//! costs `Y(1) - Y(0)`, which is never observed directly. Given a budget
//! `B < 0` and a tolerance `δ`, the ramp rules here choose each stage's
//! treatment size so that `P(R_T > B) >= 1 - δ` for the cumulative cost
//! `R_T`.
//!
//! - [`schedule`] splits `(B, δ)` into per-stage budgets and tolerances.
//! - [`posterior`] holds the conjugate Gaussian model.
//! - [`ramp`] solves each stage in closed form.
//! - [`cantelli`] solves each stage from posterior draws for general costs.
//! - [`thompson`] is a budget-unaware bandit baseline.
//! - [`scenario`], [`simulation`] and [`diagnostics`] run replication studies.

// `!(x < y)` is used deliberately so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arm;
pub mod cantelli;
pub mod diagnostics;
pub mod experiment;
pub mod normal;
pub mod posterior;
pub mod ramp;
pub mod rng;
pub mod scenario;
pub mod schedule;
pub mod simulation;
pub mod thompson;

pub use arm::{Arm, PerArm};
pub use cantelli::{
    estimate_posterior_quantities, solve_ramp_size_cantelli, CantelliPolicy, CostFunction,
    CostSpec, CovarianceEstimator, GaussianExactSampler, PosteriorQuantities,
};
pub use experiment::{
    drive, Branch, ExperimentSetup, ExperimentTrace, StageDecision, StageFeed, StagePolicy,
    StageRecord, StopRule, Termination, VarianceMode,
};
pub use posterior::{
    compute_posterior, estimate_variance, init_posterior, update_stats, GaussianPrior,
    OutcomeVariance, PosteriorState, StageSums, SufficientStats,
};
pub use ramp::{run_rrc_experiment, solve_ramp_size, AnalyticPolicy, RampInputs};
pub use scenario::{builtin_scenario, builtin_scenarios, generate_stage_outcomes, Scenario};
pub use schedule::{sinc_schedule, uniform_tolerance, RiskSchedule, ScheduleError, ScheduleSpec};
pub use simulation::{run_replications, Algorithm, ReplicationSummary, StudyConfig};
pub use thompson::{run_thompson_experiment, thompson_assignment_probability, ThompsonConfig};

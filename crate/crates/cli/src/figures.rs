//! Canned study configurations behind `reproduce`.

use rampguard_core::schedule::{uniform_tolerance, ToleranceSpec};
use rampguard_core::{Algorithm, GaussianPrior, PerArm, ScheduleSpec};
use serde::Serialize;

use crate::config::{
    default_prior, AlgorithmSpec, OutputSpec, RunConfig, ScenarioRef, VarianceSpec,
};
use crate::error::CliError;

pub const FIGURE_IDS: [&str; 14] = [
    "fig1a", "fig1b", "fig1c", "fig1d", "fig1e", "fig1f", "fig1g", "fig1h", "fig1i", "fig2a",
    "fig2b", "fig2c", "fig2d", "fig2e",
];

pub const RAMP_REPLICATIONS: usize = 500;
pub const RUIN_REPLICATIONS: usize = 5000;
pub const THOMPSON_EXPONENTS: [f64; 3] = [0.25, 1.0, 4.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Panel {
    /// Quantiles of `m_t`.
    RampSchedule,
    /// Quantiles of `R_t - B`.
    BudgetSurplus,
    /// Ruin rates and the distribution of `R_t - B`.
    RuinRate,
}

#[derive(Debug, Clone, Serialize)]
pub struct FigureRun {
    pub label: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct Figure {
    pub id: &'static str,
    pub title: String,
    pub panel: Panel,
    pub runs: Vec<FigureRun>,
}

fn base(scenario: &str, schedule: ScheduleSpec, replications: usize) -> RunConfig {
    RunConfig {
        scenario: ScenarioRef::Name(scenario.into()),
        algorithm: AlgorithmSpec::Full(Algorithm::RrcAnalytic),
        schedule,
        prior: default_prior(),
        variance: VarianceSpec::default(),
        cost: Default::default(),
        replications,
        seed: 0,
        population: None,
        output: OutputSpec::default(),
    }
}

fn flat(scenario: &str, budget: f64, delta: f64, stages: usize, reps: usize) -> FigureRun {
    FigureRun {
        label: format!("B{budget}_delta{delta}"),
        config: base(scenario, ScheduleSpec::uniform(budget, delta, stages), reps),
    }
}

/// `b_t = early` for `t <= switch`, `B` afterwards, uniform `Δ_t`.
fn rationed_budget(
    label: &str,
    scenario: &str,
    budget: f64,
    (early, switch): (f64, usize),
    delta: f64,
    stages: usize,
    reps: usize,
) -> FigureRun {
    let budgets = (1..=stages)
        .map(|t| if t <= switch { early } else { budget })
        .collect();
    let spec = ScheduleSpec {
        budget,
        delta,
        stage_budgets: Some(budgets),
        stage_tolerances: ToleranceSpec::Values(
            uniform_tolerance(delta, stages).expect("delta in range"),
        ),
    };
    FigureRun {
        label: label.into(),
        config: base(scenario, spec, reps),
    }
}

fn npte_ration_tolerance(reps: usize) -> FigureRun {
    let tolerances = (1..=10)
        .map(|t| if t <= 5 { 0.0001 } else { 0.0019 })
        .collect();
    let spec = ScheduleSpec {
        budget: -500.0,
        delta: 0.01,
        stage_budgets: None,
        stage_tolerances: ToleranceSpec::Values(tolerances),
    };
    FigureRun {
        label: "ration_tolerance".into(),
        config: base("npte", spec, reps),
    }
}

/// Bandit prior that starts conservative: `μ₀ = (0, -2)`, `σ₀² = 0.05`.
pub fn thompson_prior() -> GaussianPrior {
    GaussianPrior::new(PerArm::new(0.0, -2.0), PerArm::splat(0.05)).expect("positive variance")
}

fn thompson_runs(scenario: &str, budget: f64, stages: usize, reps: usize) -> Vec<FigureRun> {
    THOMPSON_EXPONENTS
        .iter()
        .map(|&c| {
            let mut config = base(scenario, ScheduleSpec::uniform(budget, 0.05, stages), reps);
            config.algorithm = AlgorithmSpec::Full(Algorithm::Thompson {
                c,
                cap_at_half: false,
            });
            config.prior = thompson_prior();
            FigureRun {
                label: format!("c{c}"),
                config,
            }
        })
        .collect()
}

fn constant_effect(scenario: &str, reps: usize) -> Vec<FigureRun> {
    vec![
        flat(scenario, -250.0, 0.05, 10, reps),
        flat(scenario, -500.0, 0.05, 10, reps),
        flat(scenario, -500.0, 0.01, 10, reps),
    ]
}

fn npte(reps: usize) -> Vec<FigureRun> {
    vec![
        flat("npte", -500.0, 0.05, 10, reps),
        flat("npte", -500.0, 0.01, 10, reps),
        rationed_budget("ration_budget", "npte", -500.0, (-400.0, 5), 0.01, 10, reps),
        npte_ration_tolerance(reps),
    ]
}

fn linkedin(reps: usize) -> Vec<FigureRun> {
    vec![
        flat("linkedin", -1500.0, 0.01, 6, reps),
        flat("linkedin", -1500.0, 0.05, 6, reps),
        rationed_budget(
            "ration_budget_linkedin",
            "linkedin",
            -1500.0,
            (-400.0, 4),
            0.01,
            6,
            reps,
        ),
    ]
}

/// Configuration of figure `id` with the documented defaults (seed 0).
pub fn figure(id: &str) -> Result<Figure, CliError> {
    let (r, k) = (RAMP_REPLICATIONS, RUIN_REPLICATIONS);
    let (title, panel, runs) = match id {
        "fig1a" => (
            "ramp schedule, pte",
            Panel::RampSchedule,
            constant_effect("pte", r),
        ),
        "fig1b" => (
            "ramp schedule, nte",
            Panel::RampSchedule,
            constant_effect("nte", r),
        ),
        "fig1c" => ("ramp schedule, npte", Panel::RampSchedule, npte(r)),
        "fig1d" => ("ramp schedule, linkedin", Panel::RampSchedule, linkedin(r)),
        "fig1e" => (
            "ramp schedule, npte, thompson",
            Panel::RampSchedule,
            thompson_runs("npte", -500.0, 10, r),
        ),
        "fig1f" => (
            "ramp schedule, linkedin, thompson",
            Panel::RampSchedule,
            thompson_runs("linkedin", -1500.0, 6, r),
        ),
        "fig1g" => (
            "budget surplus, nte",
            Panel::BudgetSurplus,
            constant_effect("nte", r),
        ),
        "fig1h" => ("budget surplus, npte", Panel::BudgetSurplus, npte(r)),
        "fig1i" => (
            "budget surplus, npte, thompson",
            Panel::BudgetSurplus,
            thompson_runs("npte", -500.0, 10, r),
        ),
        "fig2a" | "fig2b" | "fig2c" | "fig2d" | "fig2e" => {
            let scenario = match id {
                "fig2a" => "norm",
                "fig2b" => "corr",
                "fig2c" => "bern",
                "fig2d" => "fat",
                _ => "dec",
            };
            let mut run = flat(scenario, -500.0, 0.05, 10, k);
            run.label = scenario.into();
            let title = format!("ruin rate, {scenario}");
            return Ok(Figure {
                id: FIGURE_IDS
                    .iter()
                    .copied()
                    .find(|f| *f == id)
                    .expect("listed"),
                title,
                panel: Panel::RuinRate,
                runs: vec![run],
            });
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown figure {other:?}; expected one of {}",
                FIGURE_IDS.join(", ")
            )))
        }
    };
    Ok(Figure {
        id: FIGURE_IDS
            .iter()
            .copied()
            .find(|f| *f == id)
            .expect("listed"),
        title: title.into(),
        panel,
        runs,
    })
}

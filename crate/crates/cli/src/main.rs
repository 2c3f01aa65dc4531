use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rampguard_cli::config::DEFAULT_PRIOR_VARIANCE;
use rampguard_cli::state::{ExperimentState, NextStage, NextStageRequest};
use rampguard_cli::{
    cmd_reproduce, cmd_run, threads_from_env, CliError, Overrides, ReproduceOptions, RunConfig,
};
use rampguard_core::{GaussianPrior, PerArm, StageSums, VarianceMode};

/// Risk-of-ruin constrained ramp schedules for phased releases.
#[derive(Parser)]
#[command(name = "rampguard", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replication study and write schedule.csv, summary.json and
    /// quantiles.csv.
    Run(RunArgs),
    /// Re-run a canned figure configuration.
    Reproduce(ReproduceArgs),
    /// Decide the next stage of a live experiment from a state file.
    NextStage(NextStageArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; other flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// rrc_analytic, rrc_cantelli or thompson.
    #[arg(long)]
    algo: Option<String>,
    /// Thompson exponent.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    budget: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Number of stages, with uniform tolerances.
    #[arg(long = "T")]
    stages: Option<usize>,
    /// Units per stage, replacing the scenario's.
    #[arg(long)]
    population: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// known or estimated.
    #[arg(long)]
    variance_mode: Option<String>,
    #[arg(long)]
    pretrial_sigma_sq: Option<f64>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// fig1a..fig1i or fig2a..fig2e.
    figure: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `stage,m` CSV of the observed LinkedIn ramp (fig1d).
    #[arg(long)]
    actual: Option<PathBuf>,
    /// Skip per-replication schedule.csv files.
    #[arg(long)]
    no_traces: bool,
}

#[derive(Args)]
struct NextStageArgs {
    /// State file, created if absent.
    #[arg(long)]
    state: PathBuf,
    /// `N` of the stage being decided.
    #[arg(long = "n-next")]
    population: u64,
    /// `Δ` of the stage being decided.
    #[arg(long = "delta-next")]
    tolerance: f64,
    /// `b` of the stage being decided; the global budget when omitted.
    #[arg(long = "b-next", allow_hyphen_values = true)]
    stage_budget: Option<f64>,
    /// Stage number, for an explicit retry or advance.
    #[arg(long)]
    stage: Option<usize>,
    /// JSON file with the previous stage's sums.
    #[arg(long, conflicts_with_all = ["treated_sum", "control_sum"])]
    observed: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true, requires_all = ["control_sum", "treated_sumsq", "control_sumsq"])]
    treated_sum: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    control_sum: Option<f64>,
    #[arg(long)]
    treated_sumsq: Option<f64>,
    #[arg(long)]
    control_sumsq: Option<f64>,
    /// Global budget `B` of a new experiment.
    #[arg(long, allow_hyphen_values = true)]
    budget: Option<f64>,
    /// Global tolerance `δ` of a new experiment.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    prior_mean: f64,
    #[arg(long, default_value_t = DEFAULT_PRIOR_VARIANCE)]
    prior_var: f64,
    /// Known outcome variance, both arms.
    #[arg(long)]
    sigma_sq: Option<f64>,
    /// known or estimated.
    #[arg(long, default_value = "known")]
    variance_mode: String,
    #[arg(long)]
    pretrial_sigma_sq: Option<f64>,
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let base = args
        .config
        .as_deref()
        .map(RunConfig::from_path)
        .transpose()?;
    let overrides = Overrides {
        scenario: args.scenario,
        algorithm: args.algo,
        thompson_c: args.c,
        budget: args.budget,
        delta: args.delta,
        stages: args.stages,
        replications: args.reps,
        seed: args.seed,
        out: args.out,
        variance_mode: args.variance_mode,
        pretrial_sigma_sq: args.pretrial_sigma_sq,
        population: args.population,
    };
    let cfg = RunConfig::with_overrides(base, &overrides)?;
    let summary = cmd_run(&cfg, threads_from_env()?)?;
    println!(
        "{} {}: ruin {}/{} ({:.4}), output in {}",
        summary.scenario,
        summary.algorithm,
        summary.ruin_count,
        summary.replications,
        summary.ruin_rate,
        cfg.output.dir.display()
    );
    Ok(())
}

fn reproduce(args: ReproduceArgs) -> Result<(), CliError> {
    let opts = ReproduceOptions {
        out: args.out,
        replications: args.reps,
        seed: args.seed,
        actual: args.actual,
        traces: !args.no_traces,
    };
    let studies = cmd_reproduce(&args.figure, &opts, threads_from_env()?)?;
    for (label, s) in studies {
        let m50: Vec<String> = s.stages.iter().map(|x| x.m.q50.to_string()).collect();
        println!(
            "{label}: ruin {:.4}, median m [{}]",
            s.ruin_rate,
            m50.join(" ")
        );
    }
    Ok(())
}

fn new_state(args: &NextStageArgs) -> Result<ExperimentState, CliError> {
    let (Some(budget), Some(delta)) = (args.budget, args.delta) else {
        return Err(CliError::Config(
            "a new state needs --budget and --delta".into(),
        ));
    };
    let prior = GaussianPrior::symmetric(args.prior_mean, args.prior_var)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let variance = match args.variance_mode.as_str() {
        "known" => VarianceMode::Known {
            sigma_sq: PerArm::splat(
                args.sigma_sq
                    .ok_or_else(|| CliError::Config("known variance needs --sigma-sq".into()))?,
            ),
        },
        "estimated" => VarianceMode::Estimated {
            pretrial: PerArm::splat(args.pretrial_sigma_sq.ok_or_else(|| {
                CliError::Config("estimated variance needs --pretrial-sigma-sq".into())
            })?),
        },
        other => {
            return Err(CliError::Config(format!(
                "unknown variance mode {other:?} (expected known or estimated)"
            )))
        }
    };
    ExperimentState::new(budget, delta, prior, variance)
}

fn next_stage(args: NextStageArgs) -> Result<(), CliError> {
    let mut state = if args.state.exists() {
        ExperimentState::load(&args.state)?
    } else {
        new_state(&args)?
    };
    let observed = match (&args.observed, args.treated_sum) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Some(
                serde_json::from_str::<StageSums>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
            )
        }
        (None, Some(treated_sum)) => Some(StageSums {
            treated_sum,
            control_sum: args.control_sum.unwrap_or_default(),
            treated_sumsq: args.treated_sumsq.unwrap_or_default(),
            control_sumsq: args.control_sumsq.unwrap_or_default(),
        }),
        (None, None) => None,
    };
    let req = NextStageRequest {
        observed,
        population: args.population,
        tolerance: args.tolerance,
        stage_budget: args.stage_budget.unwrap_or(state.budget),
        stage: args.stage,
    };
    let outcome = state.next_stage(&req)?;
    state.save(&args.state)?;
    match outcome {
        NextStage::Decided { entry, .. } => {
            println!(
                "stage={} m={} p={} branch={}",
                entry.stage, entry.m, entry.assignment_probability, entry.branch
            );
            Ok(())
        }
        NextStage::Exhausted { completed, product } => Err(CliError::ToleranceExhausted(format!(
            "risk tolerance exhausted after stage {completed} (product {product}); stop the ramp"
        ))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Reproduce(a) => reproduce(a),
        Command::NextStage(a) => next_stage(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rampguard: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

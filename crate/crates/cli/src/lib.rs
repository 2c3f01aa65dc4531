//! Command implementations behind the `rampguard` binary.

// `!(x < y)` is used deliberately so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod figures;
pub mod output;
pub mod state;

use std::path::{Path, PathBuf};

use rampguard_core::{run_replications, ReplicationSummary};
use serde::Serialize;

pub use config::{Overrides, RunConfig};
pub use error::CliError;

/// Environment variable bounding the worker count.
pub const THREADS_ENV: &str = "RAMPGUARD_THREADS";

/// Worker count from [`THREADS_ENV`], or `None` for one per core.
pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Serialize)]
struct RunProvenance<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a RunConfig,
}

/// Runs one study and writes its files into `out`.
pub fn run_study(
    cfg: &RunConfig,
    out: &Path,
    threads: Option<usize>,
) -> Result<ReplicationSummary, CliError> {
    let study = cfg.study()?;
    let result = run_replications(&study, threads)?;
    create_dir(out)?;
    if cfg.output.traces {
        output::write_schedule_csv(&out.join("schedule.csv"), &result.traces)?;
    }
    output::write_json(&out.join("summary.json"), &result.summary)?;
    output::write_quantiles_csv(&out.join("quantiles.csv"), &result.summary)?;
    Ok(result.summary)
}

/// `run`: one study into the configured output directory.
pub fn cmd_run(cfg: &RunConfig, threads: Option<usize>) -> Result<ReplicationSummary, CliError> {
    let out = cfg.output.dir.clone();
    let summary = run_study(cfg, &out, threads)?;
    output::write_json(
        &out.join("provenance.json"),
        &RunProvenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            config: cfg,
        },
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, Default)]
pub struct ReproduceOptions {
    pub out: PathBuf,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    /// CSV with columns `stage,m` overlaid on the LinkedIn ramp panel.
    pub actual: Option<PathBuf>,
    pub traces: bool,
}

#[derive(Serialize)]
struct FigureProvenance<'a> {
    tool: &'static str,
    version: &'static str,
    figure: &'a str,
    title: &'a str,
    panel: figures::Panel,
    seed: u64,
    replications: usize,
    /// Where the observed LinkedIn ramp came from, if supplied.
    actual_series: Option<String>,
    runs: &'a [figures::FigureRun],
}

/// Reads a `stage,m` CSV.
pub fn read_actual_series(path: &Path) -> Result<Vec<(usize, f64)>, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in r.deserialize::<(usize, f64)>() {
        rows.push(rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?);
    }
    Ok(rows)
}

/// `reproduce`: every run of a figure under `out/<id>/`.
pub fn cmd_reproduce(
    id: &str,
    opts: &ReproduceOptions,
    threads: Option<usize>,
) -> Result<Vec<(String, ReplicationSummary)>, CliError> {
    let mut fig = figures::figure(id)?;
    let actual = match &opts.actual {
        Some(p) if fig.id == "fig1d" => Some((p.clone(), read_actual_series(p)?)),
        Some(_) => return Err(CliError::Config("--actual only applies to fig1d".into())),
        None => None,
    };
    for run in &mut fig.runs {
        if let Some(k) = opts.replications {
            run.config.replications = k;
        }
        if let Some(s) = opts.seed {
            run.config.seed = s;
        }
        run.config.output.traces = opts.traces;
    }
    let dir = opts.out.join(fig.id);
    create_dir(&dir)?;
    let mut studies = Vec::with_capacity(fig.runs.len());
    for run in &fig.runs {
        let summary = run_study(&run.config, &dir.join(&run.label), threads)?;
        studies.push((run.label.clone(), summary));
    }
    output::write_labelled_quantiles_csv(&dir.join("quantiles.csv"), &studies)?;
    output::write_ruin_csv(&dir.join("ruin.csv"), &studies)?;
    if let Some((_, rows)) = &actual {
        let path = dir.join("actual.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Runtime(e.to_string()))?;
        w.write_record(["stage", "m"])
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        for (stage, m) in rows {
            w.write_record([stage.to_string(), m.to_string()])
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    let first = &fig.runs[0].config;
    output::write_json(
        &dir.join("provenance.json"),
        &FigureProvenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            figure: fig.id,
            title: &fig.title,
            panel: fig.panel,
            seed: first.seed,
            replications: first.replications,
            actual_series: actual.map(|(p, _)| p.display().to_string()),
            runs: &fig.runs,
        },
    )?;
    Ok(studies)
}

//! CSV and JSON writers. Column orders here are a stable interface.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rampguard_core::{ExperimentTrace, ReplicationSummary};
use serde::Serialize;

use crate::error::CliError;

pub const SCHEDULE_HEADER: [&str; 6] = [
    "replication",
    "stage",
    "m",
    "branch",
    "stage_cost",
    "cum_cost",
];
pub const QUANTILE_HEADER: [&str; 7] = [
    "stage",
    "m_q25",
    "m_q50",
    "m_q75",
    "surplus_q25",
    "surplus_q50",
    "surplus_q75",
];
pub const RUIN_HEADER: [&str; 6] = [
    "config",
    "ruin_count",
    "replications",
    "ruin_rate",
    "ci95_low",
    "ci95_high",
];

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per replication and stage.
pub fn write_schedule_csv(path: &Path, traces: &[ExperimentTrace]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(SCHEDULE_HEADER).map_err(&err)?;
    for (i, trace) in traces.iter().enumerate() {
        for r in &trace.records {
            w.write_record([
                i.to_string(),
                r.stage.to_string(),
                r.m.to_string(),
                r.branch.as_str().to_string(),
                fmt_opt(r.stage_cost),
                fmt_opt(r.cumulative_cost),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn quantile_row(s: &rampguard_core::simulation::StageSummary) -> [String; 7] {
    [
        s.stage.to_string(),
        s.m.q25.to_string(),
        s.m.q50.to_string(),
        s.m.q75.to_string(),
        s.surplus.q25.to_string(),
        s.surplus.q50.to_string(),
        s.surplus.q75.to_string(),
    ]
}

pub fn write_quantiles_csv(path: &Path, summary: &ReplicationSummary) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(QUANTILE_HEADER).map_err(&err)?;
    for s in &summary.stages {
        w.write_record(quantile_row(s)).map_err(&err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Quantile rows of several studies, distinguished by a leading `config`
/// column.
pub fn write_labelled_quantiles_csv(
    path: &Path,
    studies: &[(String, ReplicationSummary)],
) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    let mut header = vec!["config"];
    header.extend(QUANTILE_HEADER);
    w.write_record(&header).map_err(&err)?;
    for (label, summary) in studies {
        for s in &summary.stages {
            let mut row = vec![label.clone()];
            row.extend(quantile_row(s));
            w.write_record(&row).map_err(&err)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_ruin_csv(
    path: &Path,
    studies: &[(String, ReplicationSummary)],
) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(RUIN_HEADER).map_err(&err)?;
    for (label, s) in studies {
        w.write_record([
            label.clone(),
            s.ruin_count.to_string(),
            s.replications.to_string(),
            s.ruin_rate.to_string(),
            (s.ruin_rate - s.ruin_half_width).max(0.0).to_string(),
            (s.ruin_rate + s.ruin_half_width).min(1.0).to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?);
    serde_json::to_writer_pretty(&mut f, value)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    f.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    f.flush().map_err(|e| CliError::io(path, e))
}

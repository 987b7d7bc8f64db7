//! Experiment harness: run a config to a JSON-lines report plus summary, and
//! drive the built-in sweep studies.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, KernelKind, MmdMode, Transmit};
use crate::error::{Error, Result};
use crate::federation::{run_federation, FederationOutcome, RoundReport};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub rounds: usize,
    pub best_map: f64,
    pub best_map_round: usize,
    pub best_rank1: f64,
    pub best_rank1_round: usize,
    pub total_uploaded_bytes: u64,
    pub total_downloaded_bytes: u64,
    pub total_prototype_bytes: u64,
}

pub fn summarize(outcome: &FederationOutcome) -> Summary {
    let mut best_map = 0.0;
    let mut best_map_round = 0;
    let mut best_rank1 = 0.0;
    let mut best_rank1_round = 0;
    for r in &outcome.reports {
        if r.map > best_map {
            best_map = r.map;
            best_map_round = r.round;
        }
        if r.rank1 > best_rank1 {
            best_rank1 = r.rank1;
            best_rank1_round = r.round;
        }
    }
    Summary {
        rounds: outcome.reports.len(),
        best_map,
        best_map_round,
        best_rank1,
        best_rank1_round,
        total_uploaded_bytes: outcome.ledger.total_uploaded,
        total_downloaded_bytes: outcome.ledger.total_downloaded,
        total_prototype_bytes: outcome.ledger.total_prototype,
    }
}

/// One JSON object per line, in round order.
pub fn write_reports(reports: &[RoundReport], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in reports {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::InvalidArgument(format!("report serialization: {e}")))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Execute the configured federation, write the report file, and return the
/// summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Summary, FederationOutcome)> {
    let outcome = run_federation(cfg)?;
    write_reports(&outcome.reports, Path::new(&cfg.output))?;
    Ok((summarize(&outcome), outcome))
}

/// Sweepable configuration axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Kernel,
    ProtoFraction,
    Transmit,
    MmdMode,
}

impl SweepAxis {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "kernel" => Ok(Self::Kernel),
            "proto_fraction" => Ok(Self::ProtoFraction),
            "transmit" => Ok(Self::Transmit),
            "mmd_mode" => Ok(Self::MmdMode),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep axis {other:?}; expected kernel, proto_fraction, transmit, or mmd_mode"
            ))),
        }
    }
}

fn apply_axis(cfg: &mut ExperimentConfig, axis: SweepAxis, value: &str) -> Result<()> {
    let bad = |what: &str| Err(Error::InvalidArgument(format!("bad sweep value {what:?}")));
    match axis {
        SweepAxis::Kernel => {
            cfg.train.kernel = match value {
                "none" => KernelKind::None,
                "linear" => KernelKind::Linear,
                "poly2" => KernelKind::Poly2,
                "gaussian" => KernelKind::Gaussian,
                _ => return bad(value),
            };
        }
        SweepAxis::ProtoFraction => {
            let f: f64 = match value.parse() {
                Ok(f) => f,
                Err(_) => return bad(value),
            };
            cfg.train.proto_fraction = f;
        }
        SweepAxis::Transmit => {
            cfg.train.transmit = match value {
                "teacher" => Transmit::Teacher,
                "student" => Transmit::Student,
                _ => return bad(value),
            };
        }
        SweepAxis::MmdMode => {
            cfg.train.mmd_mode = match value {
                "minibatch" => MmdMode::Minibatch,
                "full" => MmdMode::Full,
                _ => return bad(value),
            };
        }
    }
    cfg.validate()
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub best_map: f64,
    pub best_rank1: f64,
    pub best_round: usize,
    pub total_bytes: u64,
}

/// Run one configuration per value, all from the same master seed, and emit a
/// flat CSV next to the per-value reports.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one value".into()));
    }
    let stem = PathBuf::from(&base.output);
    let stem_str = stem
        .to_str()
        .ok_or_else(|| Error::InvalidArgument("non-utf8 output path".into()))?
        .trim_end_matches(".jsonl")
        .to_string();
    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let mut cfg = base.clone();
        apply_axis(&mut cfg, axis, value)?;
        cfg.output = format!("{stem_str}.{}.jsonl", sanitize(value));
        let (summary, outcome) = run_experiment(&cfg)?;
        rows.push(SweepRow {
            value: value.clone(),
            best_map: summary.best_map,
            best_rank1: summary.best_rank1,
            best_round: summary.best_map_round,
            total_bytes: outcome.ledger.total_uploaded + outcome.ledger.total_downloaded,
        });
    }
    let csv_path = format!("{stem_str}.sweep.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    writeln!(w, "value,best_map,best_rank1,best_round,total_bytes")?;
    for row in &rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.value, row.best_map, row.best_rank1, row.best_round, row.total_bytes
        )?;
    }
    w.flush()?;
    Ok(rows)
}

fn sanitize(value: &str) -> String {
    value
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { '_' })
        .collect()
}

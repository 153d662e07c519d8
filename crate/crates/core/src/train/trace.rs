//! Per-iteration training records and observer hooks.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Ran out of epoch budget.
    Completed,
    /// Gradient norm fell below tolerance.
    GradTolerance,
    /// Loss change fell below tolerance.
    ChangeTolerance,
    /// No step satisfying the line-search conditions was found.
    LineSearchFailed,
    /// Loss became non-finite; the trace up to that point is retained.
    Diverged,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::GradTolerance => "grad_tolerance",
            RunStatus::ChangeTolerance => "change_tolerance",
            RunStatus::LineSearchFailed => "line_search_failed",
            RunStatus::Diverged => "diverged",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// `|W_{k+1} - W_k|` of the update that produced this iterate (0 at
    /// the initial record).
    pub step_magnitude: f64,
    pub stage: String,
}

/// Full record of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<TraceRecord>,
    /// Sparse top-eigenvalue samples (iter, lambda_max).
    pub lambda_max: Vec<(usize, f64)>,
    pub status: RunStatus,
    pub wall_secs: f64,
    pub final_theta: Vec<f64>,
}

impl TrainingTrace {
    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    /// Step magnitudes after the first record whose loss drops below
    /// `loss_threshold`.
    pub fn steps_below(&self, loss_threshold: f64) -> Vec<f64> {
        match self.records.iter().position(|r| r.loss < loss_threshold) {
            Some(k) => self.records[k + 1..].iter().map(|r| r.step_magnitude).collect(),
            None => Vec::new(),
        }
    }

    /// Write `iter,loss,grad_norm,step_magnitude,stage_tag` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "iter,loss,grad_norm,step_magnitude,stage_tag")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.iter, r.loss, r.grad_norm, r.step_magnitude, r.stage
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_lambda_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "iter,lambda_max")?;
        for (iter, lam) in &self.lambda_max {
            writeln!(w, "{iter},{lam}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Parse a trace CSV back into records (used when diagnosing persisted runs).
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if !line.starts_with("iter,") {
                return Err(Error::Format(format!(
                    "unexpected trace header in {}",
                    path.display()
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(5, ',');
        let parse_err = || Error::Format(format!("bad trace row {i} in {}", path.display()));
        let iter = parts.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
        let loss = parts.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
        let grad_norm = parts.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
        let step_magnitude = parts.next().ok_or_else(parse_err)?.parse().map_err(|_| parse_err())?;
        let stage = parts.next().unwrap_or("").to_string();
        out.push(TraceRecord {
            iter,
            loss,
            grad_norm,
            step_magnitude,
            stage,
        });
    }
    Ok(out)
}

/// Evidence about the accepted line-search step at one iteration.
#[derive(Clone, Copy, Debug)]
pub struct LineSearchEvidence {
    pub f_prev: f64,
    /// Directional derivative g'd at the previous iterate.
    pub dir_deriv_prev: f64,
    pub step: f64,
    pub f_new: f64,
    /// Directional derivative g'd at the accepted iterate.
    pub dir_deriv_new: f64,
}

pub struct StepInfo<'a> {
    pub iter: usize,
    pub theta: &'a [f64],
    pub loss: f64,
    pub grad_norm: f64,
    pub ls: Option<LineSearchEvidence>,
}

/// Callback invoked once per recorded iteration of any optimizer.
pub trait IterObserver {
    fn observe(&mut self, info: &StepInfo<'_>);
}

pub struct NoopObserver;

impl IterObserver for NoopObserver {
    fn observe(&mut self, _info: &StepInfo<'_>) {}
}

/// Outcome of a single optimizer stage.
#[derive(Clone, Debug)]
pub struct StageResult {
    pub records: Vec<TraceRecord>,
    pub status: RunStatus,
    pub theta: Vec<f64>,
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let trace = TrainingTrace {
            records: vec![
                TraceRecord {
                    iter: 0,
                    loss: 1.5,
                    grad_norm: 2.0,
                    step_magnitude: 0.0,
                    stage: "lbfgs".into(),
                },
                TraceRecord {
                    iter: 1,
                    loss: 0.5,
                    grad_norm: 1.0,
                    step_magnitude: 0.25,
                    stage: "lbfgs".into(),
                },
            ],
            lambda_max: vec![(0, 3.0)],
            status: RunStatus::Completed,
            wall_secs: 0.0,
            final_theta: vec![1.0],
        };
        trace.write_csv(&path).unwrap();
        let rows = read_trace_csv(&path).unwrap();
        assert_eq!(rows, trace.records);
    }

    #[test]
    fn steps_below_threshold_takes_the_tail() {
        let rec = |iter: usize, loss: f64, mag: f64| TraceRecord {
            iter,
            loss,
            grad_norm: 0.0,
            step_magnitude: mag,
            stage: String::new(),
        };
        let trace = TrainingTrace {
            records: vec![rec(0, 1.0, 0.0), rec(1, 0.09, 0.5), rec(2, 0.05, 0.25), rec(3, 0.01, 0.125)],
            lambda_max: vec![],
            status: RunStatus::Completed,
            wall_secs: 0.0,
            final_theta: vec![],
        };
        assert_eq!(trace.steps_below(0.1), vec![0.25, 0.125]);
        assert!(trace.steps_below(1e-9).is_empty());
    }
}

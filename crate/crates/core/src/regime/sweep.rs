//! Resumable sweep execution over (x, y, seed) cells.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Completed,
    Diverged,
    /// The run ended early (tolerance or line-search stop); final values
    /// are still recorded.
    Stopped,
    Failed,
}

/// Persisted outcome of one (cell, seed) training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub x: f64,
    pub y: f64,
    pub seed: u64,
    pub train_loss: f64,
    pub test_error: f64,
    pub lambda_max: Option<f64>,
    pub status: CellStatus,
}

/// Complete rectangular sweep: `records[iy][ix][seed_idx]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepGrid {
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub records: Vec<Vec<Vec<RunRecord>>>,
}

impl SweepGrid {
    pub fn all_records(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().flatten().flatten()
    }
}

pub fn record_path(dir: &Path, iy: usize, ix: usize, seed: u64) -> PathBuf {
    dir.join(format!("cell_y{iy}_x{ix}")).join(format!("seed_{seed}")).join("record.json")
}

/// Run every (cell, seed) through `runner`, skipping runs whose record is
/// already persisted under `dir`. Failures are recorded per cell rather
/// than aborting the sweep. When `parallel` is set, pending runs execute
/// on the rayon pool; aggregation is always a deterministic
/// single-threaded pass over the persisted files.
pub fn run_sweep<F>(
    x_values: &[f64],
    y_values: &[f64],
    seeds: &[u64],
    dir: &Path,
    runner: F,
    parallel: bool,
) -> Result<SweepGrid>
where
    F: Fn(f64, f64, u64) -> Result<RunRecord> + Sync,
{
    if x_values.is_empty() || y_values.is_empty() || seeds.is_empty() {
        return Err(Error::Empty("sweep axes and seeds must be non-empty".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut pending: Vec<(usize, usize, u64)> = Vec::new();
    for (iy, _) in y_values.iter().enumerate() {
        for (ix, _) in x_values.iter().enumerate() {
            for &seed in seeds {
                if !record_path(dir, iy, ix, seed).exists() {
                    pending.push((iy, ix, seed));
                }
            }
        }
    }

    let execute = |&(iy, ix, seed): &(usize, usize, u64)| -> Result<()> {
        let x = x_values[ix];
        let y = y_values[iy];
        let record = match runner(x, y, seed) {
            Ok(r) => r,
            Err(err) => RunRecord {
                x,
                y,
                seed,
                train_loss: f64::NAN,
                test_error: f64::NAN,
                lambda_max: None,
                status: CellStatus::Failed,
            }
            .tap_log(&err),
        };
        let path = record_path(dir, iy, ix, seed);
        std::fs::create_dir_all(path.parent().expect("record path has a parent"))?;
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        std::fs::write(&tmp, serde_json::to_string_pretty(&record).expect("record serializes"))?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    };

    if parallel {
        pending.par_iter().map(execute).collect::<Result<Vec<_>>>()?;
    } else {
        for task in &pending {
            execute(task)?;
        }
    }

    // deterministic single-threaded aggregation
    let mut records = Vec::with_capacity(y_values.len());
    for (iy, &y) in y_values.iter().enumerate() {
        let mut row = Vec::with_capacity(x_values.len());
        for (ix, &x) in x_values.iter().enumerate() {
            let mut cell = Vec::with_capacity(seeds.len());
            for &seed in seeds {
                let path = record_path(dir, iy, ix, seed);
                let text = std::fs::read_to_string(&path)?;
                let record: RunRecord = serde_json::from_str(&text)
                    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
                if record.x != x || record.y != y || record.seed != seed {
                    return Err(Error::Format(format!(
                        "record at {} does not match its cell",
                        path.display()
                    )));
                }
                cell.push(record);
            }
            row.push(cell);
        }
        records.push(row);
    }
    Ok(SweepGrid {
        x_values: x_values.to_vec(),
        y_values: y_values.to_vec(),
        seeds: seeds.to_vec(),
        records,
    })
}

trait TapLog {
    fn tap_log(self, err: &Error) -> Self;
}

impl TapLog for RunRecord {
    fn tap_log(self, err: &Error) -> Self {
        eprintln!(
            "run (x={}, y={}, seed={}) failed: {err}",
            self.x, self.y, self.seed
        );
        self
    }
}

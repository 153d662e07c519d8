//! Sweep orchestration over (physical parameter x data quantity) grids,
//! seed averaging, three-regime classification, boundary extraction, and
//! relative-improvement maps.
//!
//! Cells and seeds execute concurrently with independent state; the
//! aggregation is a single-threaded reduce over persisted per-run files,
//! so results do not depend on execution order.

pub mod boundary;
pub mod stats;
pub mod sweep;

pub use boundary::{extract_boundaries, BoundaryExtraction, Polyline};
pub use stats::{
    classify, normalize_percentile, relative_improvement, seed_mean, MetricGrid, Regime,
};
pub use sweep::{run_sweep, CellStatus, RunRecord, SweepGrid};

use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Seed-averaged metric grids with regime labels, thresholds, and
/// extracted boundaries (main curve plus the +/- perturbation band).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegimeMap {
    pub train_mean: MetricGrid,
    pub test_mean: MetricGrid,
    pub lambda_mean: Option<MetricGrid>,
    pub labels: Vec<Regime>,
    pub t_train: f64,
    pub t_test: f64,
    /// Solid: separates trainable from under-trained cells.
    pub training_boundary: BoundaryExtraction,
    /// Dashed: separates generalizing from over-trained cells.
    pub generalization_boundary: BoundaryExtraction,
}

/// Aggregate a persisted sweep into a regime map. Thresholds are inputs;
/// the boundary band re-extracts at `threshold * (1 -/+ perturb)`.
pub fn build_regime_map(
    grid: &SweepGrid,
    t_train: f64,
    t_test: f64,
    perturb: f64,
) -> Result<RegimeMap> {
    let train_mean = seed_mean(grid, &|r: &RunRecord| r.train_loss)?;
    let test_mean = seed_mean(grid, &|r: &RunRecord| r.test_error)?;
    let lambda_mean = if grid.all_records().all(|r| r.lambda_max.is_some()) {
        Some(seed_mean(grid, &|r: &RunRecord| r.lambda_max.unwrap())?)
    } else {
        None
    };
    let labels = train_mean
        .values
        .iter()
        .zip(&test_mean.values)
        .map(|(&tr, &te)| classify(tr, te, t_train, t_test))
        .collect();
    let training_boundary = extract_boundaries(&train_mean, t_train, perturb);
    let generalization_boundary = extract_boundaries(&test_mean, t_test, perturb);
    Ok(RegimeMap {
        train_mean,
        test_mean,
        lambda_mean,
        labels,
        t_train,
        t_test,
        training_boundary,
        generalization_boundary,
    })
}

impl RegimeMap {
    /// `x,y,train_mean,test_error_mean,label` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "x,y,train_mean,test_error_mean,label")?;
        let nx = self.train_mean.x_values.len();
        for (iy, &y) in self.train_mean.y_values.iter().enumerate() {
            for (ix, &x) in self.train_mean.x_values.iter().enumerate() {
                let idx = iy * nx + ix;
                let fmt = |v: f64| {
                    if v.is_finite() {
                        format!("{v}")
                    } else {
                        String::new()
                    }
                };
                writeln!(
                    w,
                    "{x},{y},{},{},{}",
                    fmt(self.train_mean.values[idx]),
                    fmt(self.test_mean.values[idx]),
                    self.labels[idx].as_str()
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Parse a regime-map CSV back into (train, test) grids; missing cells
/// (blank fields) become NaN.
pub fn read_map_csv(path: &Path) -> Result<(MetricGrid, MetricGrid)> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut rows: Vec<(f64, f64, f64, f64)> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if !line.starts_with("x,y,") {
                return Err(Error::Format(format!("bad map header in {}", path.display())));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() < 4 {
            return Err(Error::Format(format!("bad map row {i} in {}", path.display())));
        }
        let parse = |s: &str| -> f64 {
            if s.trim().is_empty() {
                f64::NAN
            } else {
                s.trim().parse().unwrap_or(f64::NAN)
            }
        };
        rows.push((parse(parts[0]), parse(parts[1]), parse(parts[2]), parse(parts[3])));
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!("no data rows in {}", path.display())));
    }
    let mut x_values: Vec<f64> = Vec::new();
    let mut y_values: Vec<f64> = Vec::new();
    for (x, y, _, _) in &rows {
        if !x_values.iter().any(|v| v == x) {
            x_values.push(*x);
        }
        if !y_values.iter().any(|v| v == y) {
            y_values.push(*y);
        }
    }
    let (nx, ny) = (x_values.len(), y_values.len());
    if rows.len() != nx * ny {
        return Err(Error::Format(format!(
            "map is not a complete {nx}x{ny} grid in {}",
            path.display()
        )));
    }
    let mut train = vec![f64::NAN; nx * ny];
    let mut test = vec![f64::NAN; nx * ny];
    for (x, y, tr, te) in rows {
        let ix = x_values.iter().position(|v| *v == x).unwrap();
        let iy = y_values.iter().position(|v| *v == y).unwrap();
        train[iy * nx + ix] = tr;
        test[iy * nx + ix] = te;
    }
    Ok((
        MetricGrid {
            x_values: x_values.clone(),
            y_values: y_values.clone(),
            values: train,
        },
        MetricGrid {
            x_values,
            y_values,
            values: test,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(x: f64, y: f64, seed: u64, tr: f64, te: f64) -> RunRecord {
        RunRecord {
            x,
            y,
            seed,
            train_loss: tr,
            test_error: te,
            lambda_max: None,
            status: CellStatus::Completed,
        }
    }

    #[test]
    fn regime_map_roundtrips_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let grid = SweepGrid {
            x_values: vec![5.0, 20.0],
            y_values: vec![100.0, 1000.0],
            seeds: vec![0],
            records: vec![
                vec![
                    vec![record(5.0, 100.0, 0, 1e-4, 0.1)],
                    vec![record(20.0, 100.0, 0, 0.5, 0.9)],
                ],
                vec![
                    vec![record(5.0, 1000.0, 0, 1e-5, 0.05)],
                    vec![record(20.0, 1000.0, 0, 1e-4, 0.8)],
                ],
            ],
        };
        let map = build_regime_map(&grid, 3.8e-3, 0.434, 0.2).unwrap();
        assert_eq!(map.labels.len(), 4);
        assert_eq!(map.labels[0], Regime::I);
        assert_eq!(map.labels[1], Regime::II);
        assert_eq!(map.labels[3], Regime::III);
        let path = dir.path().join("map.csv");
        map.write_csv(&path).unwrap();
        let (train, test) = read_map_csv(&path).unwrap();
        assert_eq!(train.values, map.train_mean.values);
        assert_eq!(test.values, map.test_mean.values);
    }
}

//! Seed averaging, robust percentile normalization, regime
//! classification, and relative-improvement grids.

use serde::{Deserialize, Serialize};

use super::sweep::{RunRecord, SweepGrid};
use crate::error::{Error, Result};

/// One metric per cell over a rectangular sweep; row-major in y:
/// `values[iy * nx + ix]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricGrid {
    pub x_values: Vec<f64>,
    pub y_values: Vec<f64>,
    pub values: Vec<f64>,
}

impl MetricGrid {
    pub fn nx(&self) -> usize {
        self.x_values.len()
    }

    pub fn ny(&self) -> usize {
        self.y_values.len()
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx() + ix]
    }
}

/// Arithmetic per-cell mean across seeds; divergent values are included
/// deliberately, never excluded.
pub fn seed_mean(grid: &SweepGrid, metric: &dyn Fn(&RunRecord) -> f64) -> Result<MetricGrid> {
    let mut values = Vec::with_capacity(grid.x_values.len() * grid.y_values.len());
    for row in &grid.records {
        for cell in row {
            if cell.is_empty() {
                return Err(Error::Empty("cell without seed records".into()));
            }
            values.push(cell.iter().map(|r| metric(r)).sum::<f64>() / cell.len() as f64);
        }
    }
    Ok(MetricGrid {
        x_values: grid.x_values.clone(),
        y_values: grid.y_values.clone(),
        values,
    })
}

/// Percentile by linear interpolation between order statistics.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = (p / 100.0) * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi.min(n - 1)] - sorted[lo]) * frac
}

/// Robust percentile normalization into [0, 1]: values map through
/// `(v - p_lo) / (p_hi - p_lo)` and clamp to the endpoints. Non-finite
/// values keep their sign at the endpoints (NaN stays NaN); a degenerate
/// window maps everything to 0.5.
pub fn normalize_percentile(values: &[f64], p_lo: f64, p_hi: f64) -> Result<Vec<f64>> {
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 {
        return Err(Error::Empty(format!(
            "percentile normalization needs at least 2 finite values, got {}",
            finite.len()
        )));
    }
    finite.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let v_min = percentile(&finite, p_lo);
    let v_max = percentile(&finite, p_hi);
    let span = v_max - v_min;
    Ok(values
        .iter()
        .map(|&v| {
            if v.is_nan() {
                f64::NAN
            } else if span == 0.0 {
                0.5
            } else {
                ((v - v_min) / span).clamp(0.0, 1.0)
            }
        })
        .collect())
}

/// Well-Trained (I), Under-Trained (II), Over-Trained (III).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    I,
    II,
    III,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::I => "I",
            Regime::II => "II",
            Regime::III => "III",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" => Ok(Regime::I),
            "II" => Ok(Regime::II),
            "III" => Ok(Regime::III),
            other => Err(Error::Format(format!("unknown regime label {other:?}"))),
        }
    }
}

/// Three-regime rule: the training criterion dominates, so any cell with
/// train above threshold is Under-Trained regardless of its test error
/// (non-finite training means count as training failures too).
pub fn classify(train_mean: f64, test_mean: f64, t_train: f64, t_test: f64) -> Regime {
    if !(train_mean <= t_train) {
        Regime::II
    } else if test_mean <= t_test {
        Regime::I
    } else {
        Regime::III
    }
}

/// Percentage improvement of `method` over `base`: positive is better.
/// Zero or non-finite base cells yield NaN (emitted as missing).
pub fn relative_improvement(base: &MetricGrid, method: &MetricGrid) -> Result<MetricGrid> {
    if base.values.len() != method.values.len()
        || base.x_values != method.x_values
        || base.y_values != method.y_values
    {
        return Err(Error::Dimension {
            expected: base.values.len(),
            got: method.values.len(),
        });
    }
    let values = base
        .values
        .iter()
        .zip(&method.values)
        .map(|(&b, &m)| {
            if b == 0.0 || !b.is_finite() || !m.is_finite() {
                f64::NAN
            } else {
                (b - m) / b * 100.0
            }
        })
        .collect();
    Ok(MetricGrid {
        x_values: base.x_values.clone(),
        y_values: base.y_values.clone(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(values: Vec<f64>) -> MetricGrid {
        MetricGrid {
            x_values: (0..values.len()).map(|i| i as f64).collect(),
            y_values: vec![0.0],
            values,
        }
    }

    #[test]
    fn seed_mean_basics() {
        use crate::regime::sweep::{CellStatus, SweepGrid};
        let rec = |tr: f64| RunRecord {
            x: 0.0,
            y: 0.0,
            seed: 0,
            train_loss: tr,
            test_error: 0.0,
            lambda_max: None,
            status: CellStatus::Completed,
        };
        let grid = SweepGrid {
            x_values: vec![0.0],
            y_values: vec![0.0],
            seeds: vec![0, 1],
            records: vec![vec![vec![rec(1.0), rec(3.0)]]],
        };
        let m = seed_mean(&grid, &|r: &RunRecord| r.train_loss).unwrap();
        assert_eq!(m.values, vec![2.0]);
        // divergent values stay in the average
        let grid2 = SweepGrid {
            records: vec![vec![vec![rec(1e-3), rec(1e6)]]],
            ..grid
        };
        let m2 = seed_mean(&grid2, &|r: &RunRecord| r.train_loss).unwrap();
        assert!((m2.values[0] - 5.000005e5).abs() < 1.0);
    }

    #[test]
    fn normalization_endpoints_and_clamping() {
        let values: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        let out = normalize_percentile(&values, 5.0, 95.0).unwrap();
        // p5 = 5, p95 = 95 under linear interpolation
        assert!((out[50] - 0.5).abs() < 1e-12);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[100], 1.0);
        assert_eq!(out[5], 0.0);
        assert_eq!(out[95], 1.0);
    }

    #[test]
    fn degenerate_window_maps_to_half() {
        let out = normalize_percentile(&[3.0, 3.0, 3.0], 5.0, 95.0).unwrap();
        assert!(out.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn all_non_finite_is_an_error() {
        assert!(normalize_percentile(&[f64::NAN, f64::INFINITY], 5.0, 95.0).is_err());
    }

    #[test]
    fn classification_table() {
        let (tt, te) = (3.80e-3, 0.434);
        assert_eq!(classify(1e-4, 0.2, tt, te), Regime::I);
        assert_eq!(classify(1.0, 1.0, tt, te), Regime::II);
        assert_eq!(classify(1e-4, 0.9, tt, te), Regime::III);
        // ambiguous quadrant goes to II (training failure dominates)
        assert_eq!(classify(1.0, 0.1, tt, te), Regime::II);
        assert_eq!(classify(f64::NAN, 0.1, tt, te), Regime::II);
    }

    #[test]
    fn relative_improvement_examples() {
        let base = grid(vec![2.0, 1.0, 3.0]);
        let method = grid(vec![1.0, 1.5, 3.0]);
        let d = relative_improvement(&base, &method).unwrap();
        assert_eq!(d.values[0], 50.0);
        assert_eq!(d.values[1], -50.0);
        assert_eq!(d.values[2], 0.0);
        let zero_base = grid(vec![0.0]);
        let m = grid(vec![1.0]);
        assert!(relative_improvement(&zero_base, &m).unwrap().values[0].is_nan());
    }

    proptest! {
        #[test]
        fn classify_is_exhaustive_and_exclusive(
            train in -1e6f64..1e6,
            test in -1e6f64..1e6,
            tt in 1e-9f64..1e3,
            te in 1e-9f64..1e3,
        ) {
            let r = classify(train, test, tt, te);
            let expected = if train > tt { Regime::II }
                else if test <= te { Regime::I }
                else { Regime::III };
            prop_assert_eq!(r, expected);
        }

        #[test]
        fn normalization_is_monotone_and_affine_invariant(
            mut values in proptest::collection::vec(-1e3f64..1e3, 4..40),
            a in 0.1f64..10.0,
            b in -100.0f64..100.0,
        ) {
            let out = normalize_percentile(&values, 5.0, 95.0).unwrap();
            // monotone: sort indices by value, normalized follows
            let mut idx: Vec<usize> = (0..values.len()).collect();
            idx.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
            for w in idx.windows(2) {
                prop_assert!(out[w[0]] <= out[w[1]] + 1e-12);
            }
            // affine invariance
            let scaled: Vec<f64> = values.iter().map(|v| a * v + b).collect();
            let out2 = normalize_percentile(&scaled, 5.0, 95.0).unwrap();
            for (u, v) in out.iter().zip(&out2) {
                prop_assert!((u - v).abs() < 1e-9, "affine changed normalization: {} vs {}", u, v);
            }
            values.clear();
        }

        #[test]
        fn improvement_swap_flips_sign(
            base in proptest::collection::vec(0.1f64..10.0, 1..10),
            method in proptest::collection::vec(0.1f64..10.0, 1..10),
        ) {
            let n = base.len().min(method.len());
            let g1 = grid(base[..n].to_vec());
            let g2 = grid(method[..n].to_vec());
            let d12 = relative_improvement(&g1, &g2).unwrap();
            let d21 = relative_improvement(&g2, &g1).unwrap();
            for i in 0..n {
                let expected = -d12.values[i] * g1.values[i] / g2.values[i];
                prop_assert!((d21.values[i] - expected).abs() < 1e-9);
            }
        }
    }
}

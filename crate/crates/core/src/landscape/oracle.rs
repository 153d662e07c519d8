//! Dense symmetric matrix wrapped as an HVP oracle; the estimators are
//! validated against direct linear algebra through this adapter.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mlp::HvpOracle;

pub struct DenseOracle {
    matrix: DMatrix<f64>,
}

impl DenseOracle {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        Ok(DenseOracle { matrix })
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        DenseOracle {
            matrix: DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(diag)),
        }
    }

    /// Random symmetric matrix with N(0,1)-scaled entries plus
    /// `diag_shift * I` (a shift keeps the trace away from zero).
    pub fn random_symmetric(dim: usize, diag_shift: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..=i {
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let g = (-2.0 * u1.ln()).sqrt() * u2.cos();
                m[(i, j)] = g;
                m[(j, i)] = g;
            }
        }
        for i in 0..dim {
            m[(i, i)] += diag_shift;
        }
        DenseOracle { matrix: m }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn exact_trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Eigenvalues sorted ascending.
    pub fn exact_eigenvalues(&self) -> Vec<f64> {
        let mut eigs: Vec<f64> = self
            .matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        eigs
    }
}

impl HvpOracle for DenseOracle {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.matrix.nrows() {
            return Err(Error::Dimension {
                expected: self.matrix.nrows(),
                got: v.len(),
            });
        }
        let vv = nalgebra::DVector::from_row_slice(v);
        let out = &self.matrix * vv;
        Ok(out.iter().copied().collect())
    }
}

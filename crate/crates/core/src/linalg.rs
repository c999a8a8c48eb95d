//! Small dense helpers on top of faer.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Col, Mat};

use crate::error::{Error, Result};

/// Group (Drazin) inverse of a generator with a one-dimensional kernel,
/// applied through `(M + v 1^T)^{-1} - v 1^T` where `v` is the normalized
/// right null vector and `1` the all-ones left null vector.
pub struct GroupInverse {
    lu: PartialPivLu<f64>,
    stationary: Vec<f64>,
}

impl GroupInverse {
    pub fn new(generator: &Mat<f64>, stationary: &[f64]) -> Result<Self> {
        let dim = generator.nrows();
        let shifted = Mat::from_fn(dim, dim, |i, j| generator[(i, j)] + stationary[i]);
        let lu = shifted.partial_piv_lu();
        Ok(Self { lu, stationary: stationary.to_vec() })
    }

    /// Returns `D y` where `D` is the group inverse.
    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        let dim = y.len();
        let rhs = Col::from_fn(dim, |i| y[i]);
        let x = self.lu.solve(&rhs);
        let total: f64 = y.iter().sum();
        let out: Vec<f64> = (0..dim).map(|i| x[i] - self.stationary[i] * total).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("group-inverse solve produced non-finite values".into()));
        }
        Ok(out)
    }
}

/// `y = M x` for a dense real matrix.
pub fn matvec(m: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let n = m.nrows();
    let mut y = vec![0.0; n];
    for j in 0..m.ncols() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        let col = m.col(j);
        for i in 0..n {
            y[i] += col[i] * xj;
        }
    }
    y
}

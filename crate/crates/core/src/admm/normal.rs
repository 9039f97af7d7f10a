//! Small dense least-squares solves through the normal equations.

use nalgebra::{DMatrix, DVector};

use super::state::Degeneracy;

/// Ridge added to a rank-deficient normal matrix.
pub const RIDGE: f64 = 1e-10;

/// Eigenvalue ratio below which the normal matrix is treated as singular.
const SINGULAR_RATIO: f64 = 1e-12;

/// Accumulates `X^T X` and `X^T r` row by row, in a fixed order.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl NormalEquations {
    pub fn new(dim: usize) -> Self {
        Self {
            gram: DMatrix::zeros(dim, dim),
            rhs: DVector::zeros(dim),
        }
    }

    /// Adds one design row `x` with target `r`.
    #[inline]
    #[allow(clippy::needless_range_loop)]
    pub fn add_row(&mut self, x: &[f64], r: f64) {
        let d = x.len();
        for i in 0..d {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            self.rhs[i] += xi * r;
            for j in i..d {
                self.gram[(i, j)] += xi * x[j];
            }
        }
    }

    fn symmetrize(&mut self) {
        let d = self.gram.nrows();
        for i in 0..d {
            for j in 0..i {
                self.gram[(i, j)] = self.gram[(j, i)];
            }
        }
    }

    /// Solves for the least-squares coefficients. A singular system gets a
    /// ridge centered at `prev`, so unidentifiable directions keep their
    /// previous values.
    pub fn solve(mut self, prev: &[f64]) -> (Vec<f64>, Degeneracy) {
        self.symmetrize();
        let d = self.gram.nrows();
        let max_diag = (0..d).map(|i| self.gram[(i, i)]).fold(0.0, f64::max);
        let flagged: Vec<usize> = (0..d)
            .filter(|&i| self.gram[(i, i)] <= SINGULAR_RATIO * max_diag)
            .collect();
        let eig = self.gram.clone().symmetric_eigenvalues();
        let (emin, emax) = eig.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| {
            (a.min(e), b.max(e.abs()))
        });
        let singular = emax == 0.0 || emin <= SINGULAR_RATIO * emax || !flagged.is_empty();

        let mut gram = self.gram.clone();
        let mut rhs = self.rhs.clone();
        if singular {
            for i in 0..d {
                gram[(i, i)] += RIDGE;
                rhs[i] += RIDGE * prev[i];
            }
        }
        let solution = match gram.clone().cholesky() {
            Some(chol) => {
                let mut x = chol.solve(&rhs);
                // one refinement step
                let resid = &rhs - &gram * &x;
                x += chol.solve(&resid);
                x
            }
            None => gram
                .clone()
                .svd(true, true)
                .solve(&rhs, 0.0)
                .unwrap_or_else(|_| DVector::from_column_slice(prev)),
        };
        (
            solution.iter().copied().collect(),
            Degeneracy { singular, flagged },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_system() {
        let mut ne = NormalEquations::new(2);
        ne.add_row(&[1.0, 0.0], 2.0);
        ne.add_row(&[0.0, 1.0], 3.0);
        ne.add_row(&[1.0, 1.0], 5.0);
        let (x, deg) = ne.solve(&[0.0, 0.0]);
        assert!(!deg.singular);
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_column_keeps_previous_value() {
        let mut ne = NormalEquations::new(3);
        for r in [1.0, 2.0, 3.0] {
            ne.add_row(&[1.0, 0.0, 0.0], r);
        }
        let (x, deg) = ne.solve(&[0.0, 0.7, -0.2]);
        assert!(deg.singular);
        assert_eq!(deg.flagged, vec![1, 2]);
        assert!((x[0] - 2.0).abs() < 1e-9);
        assert!((x[1] - 0.7).abs() < 1e-12 && (x[2] + 0.2).abs() < 1e-12);
    }
}

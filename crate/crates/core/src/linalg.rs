//! Least-squares solves shared by the mass model, the RBF output layer and
//! the ANFIS consequent step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for rank decisions.
pub const DEFAULT_RCOND: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LstsqSolution {
    /// Solution, one column per right-hand side.
    pub x: DMatrix<f64>,
    /// Numerical rank of the column-equilibrated design matrix.
    pub rank: usize,
}

impl LstsqSolution {
    pub fn full_rank(&self) -> bool {
        self.rank == self.x.nrows()
    }
}

/// Minimum-norm least-squares solution of `a x ≈ b` through an SVD of the
/// column-equilibrated design matrix.
///
/// Columns are scaled to unit norm before the decomposition so that features
/// in mm and mm² enter on equal footing; singular values below
/// `rcond * σ_max` are treated as zero.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, rcond: f64) -> Result<LstsqSolution> {
    svd_solve(a, b, rcond, true)
}

/// Minimum-norm least squares without column scaling.
///
/// Columns with negligible energy stay negligible, which keeps coefficients
/// of barely excited regressors small in underdetermined systems.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DMatrix<f64>, rcond: f64) -> Result<LstsqSolution> {
    svd_solve(a, b, rcond, false)
}

fn svd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, rcond: f64, equilibrate: bool) -> Result<LstsqSolution> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::Empty("least-squares design matrix"));
    }
    let scales: Vec<f64> = a
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if equilibrate && n > 0.0 && n.is_finite() {
                n
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = a.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*s);
    }

    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = rcond * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if rank == 0 {
        return Err(Error::Singular { rank, cols: a.ncols() });
    }
    let mut x = svd
        .solve(b, cutoff)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    for (j, s) in scales.iter().enumerate() {
        x.row_mut(j).unscale_mut(*s);
    }
    Ok(LstsqSolution { x, rank })
}

/// Ridge-regularized solve of `(aᵀa + penalty·I) x = aᵀb`.
pub fn ridge(a: &DMatrix<f64>, b: &DMatrix<f64>, penalty: f64) -> Result<DMatrix<f64>> {
    let mut gram = a.transpose() * a;
    for i in 0..gram.nrows() {
        gram[(i, i)] += penalty;
    }
    let rhs = a.transpose() * b;
    gram.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or(Error::Singular {
            rank: 0,
            cols: a.ncols(),
        })
}

/// Solves the symmetric positive definite system `m x = v`.
pub fn solve_spd(m: &DMatrix<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
    m.clone().cholesky().map(|c| c.solve(v))
}

/// Squared Pearson correlation between two equally long series.
///
/// Returns `None` when either series has zero variance.
pub fn pearson_r2(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy * sxy / (sxx * syy)).min(1.0))
}

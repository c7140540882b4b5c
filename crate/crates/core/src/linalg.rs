//! Small dense helpers around a covariance matrix Σ.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest tolerated `|Σ - Σᵀ|` entry before symmetrisation.
pub const ASYMMETRY_TOL: f64 = 1e-9;
/// Smallest accepted eigenvalue of the symmetrised Σ.
pub const MIN_EIGENVALUE: f64 = 1e-10;

/// Symmetrises `sigma` and checks it is positive definite.
pub fn checked_covariance(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !sigma.is_square() || sigma.nrows() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "covariance must be square and nonempty, got {}x{}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::SigmaNotPd("non-finite entry".into()));
    }
    let asym = (sigma - sigma.transpose()).amax();
    if asym > ASYMMETRY_TOL {
        return Err(Error::SigmaNotPd(format!(
            "asymmetry {asym:e} exceeds {ASYMMETRY_TOL:e}"
        )));
    }
    let sym = (sigma + sigma.transpose()) * 0.5;
    let min_eig = min_eigenvalue(&sym);
    if min_eig <= MIN_EIGENVALUE {
        return Err(Error::SigmaNotPd(format!("minimum eigenvalue {min_eig:e}")));
    }
    Ok(sym)
}

pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Σ⁻¹-inner products through one Cholesky factorisation of Σ.
#[derive(Debug, Clone)]
pub struct SigmaMetric {
    chol: Cholesky<f64, Dyn>,
}

impl SigmaMetric {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        let sym = checked_covariance(sigma)?;
        let chol = Cholesky::new(sym).ok_or_else(|| Error::SigmaNotPd("Cholesky failed".into()))?;
        Ok(Self { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Lower-triangular factor `L` with `Σ = L Lᵀ`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `Σ⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    /// `uᵀ Σ⁻¹ v`.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&self.solve(v))
    }

    /// `‖v‖² = vᵀ Σ⁻¹ v`.
    pub fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        self.inner(v, v)
    }
}

/// Row-major nested vectors to a matrix.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::ShapeMismatch("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

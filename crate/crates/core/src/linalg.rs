//! Dense symmetric linear algebra shared by the numerical modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::{Error, Result};

/// Relative asymmetry tolerated before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn ensure_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn ensure_finite_vec(v: &DVector<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn ensure_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() == m.ncols() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() })
    }
}

/// Checks `‖M − Mᵀ‖_max ≤ SYMMETRY_TOL · ‖M‖_max`.
pub fn ensure_symmetric(m: &DMatrix<f64>) -> Result<()> {
    ensure_square(m)?;
    let scale = m.amax();
    let mut worst = 0.0_f64;
    for j in 0..m.ncols() {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst <= SYMMETRY_TOL * scale {
        Ok(())
    } else {
        Err(Error::NotSymmetric(worst / scale))
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted in decreasing order.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(m.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    m.clone().symmetric_eigenvalues()
}

/// `(λ_min, λ_max)` of a symmetric matrix.
pub fn extreme_eigenvalues(m: &DMatrix<f64>) -> (f64, f64) {
    let values = symmetric_eigenvalues(m);
    (values.min(), values.max())
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).max()
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).min()
}

/// Cholesky factor of `M + shift·I`.
pub fn shifted_cholesky(m: &DMatrix<f64>, shift: f64) -> Result<Cholesky<f64, Dyn>> {
    ensure_square(m)?;
    let mut a = m.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += shift;
    }
    Cholesky::new(a).ok_or(Error::NotPositiveDefinite)
}

/// Solves `(M + shift·I) X = rhs`.
pub fn shifted_solve(m: &DMatrix<f64>, shift: f64, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if rhs.nrows() != m.nrows() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: rhs.nrows() });
    }
    Ok(shifted_cholesky(m, shift)?.solve(rhs))
}

pub fn shifted_solve_vec(m: &DMatrix<f64>, shift: f64, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if rhs.len() != m.nrows() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: rhs.len() });
    }
    Ok(shifted_cholesky(m, shift)?.solve(rhs))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

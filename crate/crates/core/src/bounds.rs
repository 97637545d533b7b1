//! Deviation matrices and concentration bounds for sketched kernels.
//!
//! With `K = UΣUᵀ` and `Φ = Σ(Σ + nγI)⁻¹`, let `Ψ = Φ^{1/2}Uᵀ`. Column `i` of
//! `Ψ` has squared norm `l_i(γ)`, `‖Ψ‖_F² = d_eff(γ)` and `ΨΨᵀ = Φ`. For a
//! sketching matrix `S` the deviation
//!
//! ```text
//! D = ΨΨᵀ − ΨSSᵀΨᵀ = Φ − Φ^{1/2}UᵀSSᵀUΦ^{1/2}
//! ```
//!
//! controls the bias of the sketched estimator: if `λ_max(D) ≤ t` and
//! `γ ≤ (1 − t)λ` then `bias(L) ≤ (1 − (γ/λ)/(1 − t))⁻¹ bias(K)`. Under column
//! sampling with replacement the tail of `λ_max(D)` obeys the matrix
//! Bernstein bound computed by [`bernstein_bound`].

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::leverage::SpectralData;
use crate::linalg;
use crate::rng::{derive_seed, rng_from_seed};
use crate::sampling::{beta_factor, sample_with_rng, Distribution};
use crate::sketch::{sketching_matrix, SketchingMatrix};
use crate::{Error, Result};

/// `Ψ = Φ^{1/2}Uᵀ` with `Φ = Σ(Σ + nγI)⁻¹`.
pub fn psi_matrix(spectral: &SpectralData, gamma: f64) -> Result<DMatrix<f64>> {
    linalg::ensure_finite(&spectral.eigenvectors, "eigenvectors")?;
    linalg::ensure_finite_vec(&spectral.eigenvalues, "eigenvalues")?;
    let phi = spectral.ridge_filter(gamma)?;
    let mut psi = spectral.eigenvectors.transpose();
    for (j, mut row) in psi.row_iter_mut().enumerate() {
        row *= phi[j].sqrt();
    }
    Ok(psi)
}

/// Squared column norms of `Ψ`.
pub fn column_norms_sq(psi: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(psi.ncols(), psi.column_iter().map(|c| c.norm_squared()))
}

/// Signed `λ_max(ΨΨᵀ − ΨSSᵀΨᵀ)`.
pub fn deviation_lambda_max(psi: &DMatrix<f64>, sketch: &SketchingMatrix) -> Result<f64> {
    if psi.ncols() != sketch.rows() {
        return Err(Error::DimensionMismatch { expected: psi.ncols(), found: sketch.rows() });
    }
    // SSᵀ is diagonal, so the difference is Ψ·diag(1 − SSᵀ)·Ψᵀ.
    let keep = sketch.gram_diagonal().map(|d| 1.0 - d);
    let mut scaled = psi.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= keep[j];
    }
    let mut diff = scaled * psi.transpose();
    linalg::symmetrize(&mut diff);
    Ok(linalg::lambda_max(&diff))
}

/// Right-hand side `n·exp(−(pt²/2) / (λ_max(ΨΨᵀ)(‖Ψ‖_F²/β + t/3)))` of the
/// tail bound on `P(λ_max(ΨΨᵀ − ΨSSᵀΨᵀ) ≥ t)`.
pub fn bernstein_bound(p: usize, t: f64, lmax: f64, frob_sq: f64, beta: f64, n: usize) -> Result<f64> {
    if p == 0 || n == 0 {
        return Err(Error::invalid("p and n must be positive"));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid(format!("t must be positive, got {t}")));
    }
    if !(lmax.is_finite() && lmax > 0.0 && frob_sq.is_finite() && frob_sq > 0.0) {
        return Err(Error::invalid("lmax and frob_sq must be positive"));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(format!("beta must be in (0, 1], got {beta}")));
    }
    let exponent = -(p as f64) * t * t / 2.0 / (lmax * (frob_sq / beta + t / 3.0));
    Ok(n as f64 * exponent.exp())
}

#[derive(Debug, Clone)]
pub struct TailExperiment {
    pub t_grid: Vec<f64>,
    pub trials: usize,
    pub p: usize,
    /// Fraction of trials with deviation `≥ t`, per threshold.
    pub empirical: Vec<f64>,
    /// Bernstein right-hand side per threshold; values above 1 are vacuous.
    pub bound: Vec<f64>,
    pub beta_used: f64,
    pub lmax: f64,
    pub frob_sq: f64,
}

/// Empirical tail of the deviation against the Bernstein bound, with `β`
/// measured from `dist` against the squared column norms of `Ψ`.
pub fn empirical_tail(
    psi: &DMatrix<f64>,
    dist: &Distribution,
    p: usize,
    t_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<TailExperiment> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if t_grid.is_empty() {
        return Err(Error::invalid("empty threshold grid"));
    }
    let n = psi.ncols();
    if dist.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: dist.len() });
    }
    let norms = column_norms_sq(psi);
    let frob_sq = norms.sum();
    let beta = beta_factor(dist.probabilities(), norms.as_slice())?;
    if beta <= 0.0 {
        return Err(Error::InvalidDistribution("distribution misses a column with positive norm".into()));
    }
    let mut gram = psi * psi.transpose();
    linalg::symmetrize(&mut gram);
    let lmax = linalg::lambda_max(&gram);
    let bound =
        t_grid.iter().map(|&t| bernstein_bound(p, t, lmax, frob_sq, beta, psi.nrows())).collect::<Result<Vec<_>>>()?;

    let deviations = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng_from_seed(derive_seed(seed, trial as u64));
            let sampled = sample_with_rng(dist, p, &mut rng)?;
            let s = sketching_matrix(&sampled, dist)?;
            deviation_lambda_max(psi, &s)
        })
        .collect::<Result<Vec<f64>>>()?;
    let empirical =
        t_grid.iter().map(|&t| deviations.iter().filter(|&&d| d >= t).count() as f64 / trials as f64).collect();
    Ok(TailExperiment { t_grid: t_grid.to_vec(), trials, p, empirical, bound, beta_used: beta, lmax, frob_sq })
}

/// `(1 − (γ/λ)/(1 − t))⁻¹`, defined when `0 < γ ≤ (1 − t)λ` with strict
/// positivity of the bracket.
pub fn bias_inflation(gamma: f64, t: f64, lambda: f64) -> Option<f64> {
    let bracket = 1.0 - (gamma / lambda) / (1.0 - t);
    (gamma > 0.0 && gamma <= (1.0 - t) * lambda && bracket > 0.0).then(|| 1.0 / bracket)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationCheck {
    pub gamma: f64,
    pub t: f64,
    pub lambda: f64,
    pub lambda_max_d: f64,
    /// `λ_max(D) ≤ t`.
    pub condition_met: bool,
    /// Bias inflation factor, present when the condition holds and
    /// `γ ≤ (1 − t)λ`.
    pub inflation: Option<f64>,
}

pub fn deviation_matrix_check(
    spectral: &SpectralData,
    sketch: &SketchingMatrix,
    gamma: f64,
    t: f64,
    lambda: f64,
) -> Result<DeviationCheck> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::invalid(format!("t must be in (0, 1), got {t}")));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    let psi = psi_matrix(spectral, gamma)?;
    let lambda_max_d = deviation_lambda_max(&psi, sketch)?;
    let condition_met = lambda_max_d <= t;
    let inflation = if condition_met { bias_inflation(gamma, t, lambda) } else { None };
    Ok(DeviationCheck { gamma, t, lambda, lambda_max_d, condition_met, inflation })
}

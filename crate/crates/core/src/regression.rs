//! Kernel ridge regression and its fixed-design risk.
//!
//! Observations follow `y = f* + σξ` with `ξ` standard normal. For an SPSD
//! matrix `M` (the full kernel `K` or a Nyström approximation `L`) the fitted
//! values are `M(M + nλI)⁻¹y` and the expected in-sample risk splits into
//!
//! ```text
//! bias²    = nλ² ‖(M + nλI)⁻¹ f*‖²
//! variance = σ²/n · Tr(M²(M + nλI)⁻²)
//! ```
//!
//! Bias grows and variance shrinks as `M` decreases in the semidefinite order,
//! so replacing `K` by `L ⪯ K` trades one for the other.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;

use crate::leverage::SpectralData;
use crate::linalg;
use crate::rng::{derive_seed, rng_from_seed};
use crate::sketch::NystromSketch;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitSource {
    Full,
    Nystrom,
}

#[derive(Debug, Clone)]
pub struct KrrModel {
    /// Dual coefficients `(M + nλI)⁻¹y`.
    pub alpha: DVector<f64>,
    pub lambda: f64,
    /// Fitted values at the training points.
    pub fitted: DVector<f64>,
    pub source: FitSource,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub f_star: DVector<f64>,
    pub sigma_sq: f64,
}

impl GroundTruth {
    pub fn new(f_star: DVector<f64>, sigma_sq: f64) -> Result<Self> {
        linalg::ensure_finite_vec(&f_star, "f_star")?;
        if !(sigma_sq.is_finite() && sigma_sq >= 0.0) {
            return Err(Error::invalid(format!("noise variance must be nonnegative, got {sigma_sq}")));
        }
        Ok(GroundTruth { f_star, sigma_sq })
    }

    pub fn n(&self) -> usize {
        self.f_star.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskReport {
    pub bias_sq: f64,
    pub variance: f64,
    pub total: f64,
    pub noise_sigma_sq: f64,
    pub lambda: f64,
}

impl RiskReport {
    fn new(bias_sq: f64, variance: f64, noise_sigma_sq: f64, lambda: f64) -> Self {
        RiskReport { bias_sq, variance, total: bias_sq + variance, noise_sigma_sq, lambda }
    }

    pub fn ratio_to(&self, baseline: &RiskReport) -> f64 {
        self.total / baseline.total
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("lambda must be positive, got {lambda}")))
    }
}

fn check_square_input(m: &DMatrix<f64>, len: usize) -> Result<()> {
    linalg::ensure_square(m)?;
    if m.nrows() != len {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: len });
    }
    linalg::ensure_finite(m, "kernel matrix")
}

/// Full KRR solve, `O(n³)`.
pub fn krr_fit(k: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<KrrModel> {
    check_lambda(lambda)?;
    check_square_input(k, y.len())?;
    linalg::ensure_finite_vec(y, "targets")?;
    let alpha = linalg::shifted_solve_vec(k, k.nrows() as f64 * lambda, y)?;
    let fitted = k * &alpha;
    Ok(KrrModel { alpha, lambda, fitted, source: FitSource::Full })
}

/// KRR with `L = BBᵀ` through the matrix inversion lemma, `O(nr² + r³)`:
/// `L(L + nλI)⁻¹y = B(BᵀB + nλI)⁻¹Bᵀy`.
pub fn krr_fit_nystrom(sketch: &NystromSketch, y: &DVector<f64>, lambda: f64) -> Result<KrrModel> {
    check_lambda(lambda)?;
    let b = sketch.factor();
    if b.ncols() == 0 {
        return Err(Error::DegenerateSketch("factor has no columns".into()));
    }
    if b.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: b.nrows(), found: y.len() });
    }
    linalg::ensure_finite_vec(y, "targets")?;
    let shift = y.len() as f64 * lambda;
    let bty = b.transpose() * y;
    let coef = linalg::shifted_solve_vec(&(b.transpose() * b), shift, &bty)?;
    let fitted = b * coef;
    // (L + nλI)⁻¹y = (y − L(L + nλI)⁻¹y)/(nλ)
    let alpha = (y - &fitted) / shift;
    Ok(KrrModel { alpha, lambda, fitted, source: FitSource::Nystrom })
}

pub fn bias_squared(m: &DMatrix<f64>, truth: &GroundTruth, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_square_input(m, truth.n())?;
    let n = truth.n() as f64;
    let r = linalg::shifted_solve_vec(m, n * lambda, &truth.f_star)?;
    Ok(n * lambda * lambda * r.norm_squared())
}

pub fn variance_term(m: &DMatrix<f64>, sigma_sq: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(sigma_sq.is_finite() && sigma_sq >= 0.0) {
        return Err(Error::invalid(format!("noise variance must be nonnegative, got {sigma_sq}")));
    }
    check_square_input(m, m.nrows())?;
    let n = m.nrows() as f64;
    let values = linalg::symmetric_eigenvalues(m);
    Ok(variance_from_eigenvalues(values.iter().copied(), n, sigma_sq, lambda))
}

fn variance_from_eigenvalues(values: impl Iterator<Item = f64>, n: f64, sigma_sq: f64, lambda: f64) -> f64 {
    let shift = n * lambda;
    let trace: f64 = values
        .map(|s| {
            let s = s.max(0.0);
            let h = s / (s + shift);
            h * h
        })
        .sum();
    sigma_sq / n * trace
}

pub fn analytic_risk(m: &DMatrix<f64>, truth: &GroundTruth, lambda: f64) -> Result<RiskReport> {
    let bias = bias_squared(m, truth, lambda)?;
    let variance = variance_term(m, truth.sigma_sq, lambda)?;
    Ok(RiskReport::new(bias, variance, truth.sigma_sq, lambda))
}

/// Risk from a precomputed eigendecomposition, for reuse across many
/// comparisons against the same `K`.
pub fn analytic_risk_spectral(spectral: &SpectralData, truth: &GroundTruth, lambda: f64) -> Result<RiskReport> {
    check_lambda(lambda)?;
    if spectral.n() != truth.n() {
        return Err(Error::DimensionMismatch { expected: spectral.n(), found: truth.n() });
    }
    let n = truth.n() as f64;
    let shift = n * lambda;
    let values = spectral.clamped_eigenvalues();
    let coords = spectral.eigenvectors.transpose() * &truth.f_star;
    let resolvent_sq: f64 = coords.iter().zip(values.iter()).map(|(c, s)| (c / (s + shift)).powi(2)).sum();
    let bias = n * lambda * lambda * resolvent_sq;
    let variance = variance_from_eigenvalues(values.iter().copied(), n, truth.sigma_sq, lambda);
    Ok(RiskReport::new(bias, variance, truth.sigma_sq, lambda))
}

/// Risk of the Nyström estimator without forming `L`: the nonzero spectrum of
/// `L = BBᵀ` is that of `BᵀB`, and `(L + nλI)⁻¹f* = (f* − B(BᵀB + nλI)⁻¹Bᵀf*)/(nλ)`.
pub fn sketch_risk(sketch: &NystromSketch, truth: &GroundTruth, lambda: f64) -> Result<RiskReport> {
    check_lambda(lambda)?;
    let b = sketch.factor();
    if b.nrows() != truth.n() {
        return Err(Error::DimensionMismatch { expected: b.nrows(), found: truth.n() });
    }
    let n = truth.n() as f64;
    let shift = n * lambda;
    let gram = b.transpose() * b;
    let projected = linalg::shifted_solve_vec(&gram, shift, &(b.transpose() * &truth.f_star))?;
    let resolvent = (&truth.f_star - b * projected) / shift;
    let bias = n * lambda * lambda * resolvent.norm_squared();
    let values = linalg::symmetric_eigenvalues(&gram);
    let variance = variance_from_eigenvalues(values.iter().copied(), n, truth.sigma_sq, lambda);
    Ok(RiskReport::new(bias, variance, truth.sigma_sq, lambda))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloRisk {
    pub mean: f64,
    /// Standard error of `mean`, from the sample standard deviation.
    pub std_error: f64,
    pub trials: usize,
}

/// Average of `(1/n)‖M(M + nλI)⁻¹(f* + σξ) − f*‖²` over independent noise
/// draws. Trial `t` uses seed `derive_seed(seed, t)`; partial sums are
/// combined in trial order, so the result does not depend on scheduling.
pub fn monte_carlo_risk(
    m: &DMatrix<f64>,
    truth: &GroundTruth,
    lambda: f64,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloRisk> {
    check_lambda(lambda)?;
    check_square_input(m, truth.n())?;
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let n = truth.n();
    let mut hat = linalg::shifted_solve(m, n as f64 * lambda, m)?;
    linalg::symmetrize(&mut hat);
    let sigma = truth.sigma_sq.sqrt();
    let mean_fit = &hat * &truth.f_star;
    let losses: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(seed, t as u64));
            let noise = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let err = &mean_fit + &hat * noise * sigma - &truth.f_star;
            err.norm_squared() / n as f64
        })
        .collect();
    let count = trials as f64;
    let mean = losses.iter().sum::<f64>() / count;
    let std_error = if trials > 1 {
        let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (count - 1.0);
        (var / count).sqrt()
    } else {
        0.0
    };
    Ok(MonteCarloRisk { mean, std_error, trials })
}

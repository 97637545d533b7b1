//! λ-ridge leverage scores.
//!
//! For an SPSD kernel matrix `K = UΣUᵀ` and `λ > 0`,
//!
//! ```text
//! l_i(λ) = Σ_j σ_j / (σ_j + nλ) · U_ij²  =  [K(K + nλI)⁻¹]_ii
//! ```
//!
//! Their sum is the effective dimension `d_eff(λ)` and `n·max_i l_i(λ)` is the
//! maximal degrees of freedom `d_mof(λ)`.
//!
//! The fast approximation samples `p` columns, builds a Nyström factor `B`
//! with `BBᵀ = L ⪯ K` and returns `l̃_i = B_iᵀ(BᵀB + nλI)⁻¹B_i`, which equals
//! `[L(L + nλI)⁻¹]_ii` and therefore never exceeds `l_i(λ)`. Only `p` kernel
//! columns are evaluated and all solves are `r × r` with `r ≤ p`.

use nalgebra::{DMatrix, DVector};

use crate::kernels::{ColumnSource, KernelMatrix};
use crate::linalg;
use crate::rng::rng_from_seed;
use crate::sampling::{sample_with_rng, Distribution};
use crate::sketch::NystromSketch;
use crate::{Error, Result};

/// Eigendecomposition `K = UΣUᵀ` with `σ₁ ≥ … ≥ σ_n`.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralData {
    pub fn decompose(k: &DMatrix<f64>) -> Result<Self> {
        linalg::ensure_finite(k, "kernel matrix")?;
        linalg::ensure_symmetric(k)?;
        let (eigenvalues, eigenvectors) = linalg::sorted_symmetric_eigen(k);
        Ok(SpectralData { eigenvalues, eigenvectors })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues with round-off negatives clamped to zero.
    pub fn clamped_eigenvalues(&self) -> DVector<f64> {
        self.eigenvalues.map(|s| s.max(0.0))
    }

    /// Spectral filter `σ_j/(σ_j + nλ)` for each eigenvalue.
    pub fn ridge_filter(&self, lambda: f64) -> Result<DVector<f64>> {
        check_lambda(lambda)?;
        let shift = self.n() as f64 * lambda;
        Ok(self.clamped_eigenvalues().map(|s| s / (s + shift)))
    }

    pub fn ridge_leverage(&self, lambda: f64) -> Result<LeverageScores> {
        let filter = self.ridge_filter(lambda)?;
        let u = &self.eigenvectors;
        let scores =
            DVector::from_fn(self.n(), |i, _| u.row(i).iter().zip(filter.iter()).map(|(x, f)| f * x * x).sum::<f64>());
        Ok(LeverageScores { scores, lambda, method: ScoreMethod::Exact })
    }

    pub fn effective_dimension(&self, lambda: f64) -> Result<f64> {
        Ok(self.ridge_filter(lambda)?.sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMethod {
    Exact,
    Approximate {
        /// Number of draws `p`.
        sketch_size: usize,
        /// Rank of the Nyström factor actually used.
        rank: usize,
    },
}

#[derive(Debug, Clone)]
pub struct LeverageScores {
    pub scores: DVector<f64>,
    pub lambda: f64,
    pub method: ScoreMethod,
}

impl LeverageScores {
    pub fn sum(&self) -> f64 {
        self.scores.sum()
    }

    pub fn max(&self) -> f64 {
        self.scores.max()
    }

    /// `n · max_i l_i`.
    pub fn max_dof(&self) -> f64 {
        self.scores.len() as f64 * self.max()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.scores.as_slice()
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("lambda must be positive, got {lambda}")))
    }
}

/// Exact scores through the eigendecomposition of `K`.
pub fn exact_ridge_leverage(k: &KernelMatrix, lambda: f64) -> Result<LeverageScores> {
    check_lambda(lambda)?;
    SpectralData::decompose(k.entries())?.ridge_leverage(lambda)
}

/// Exact scores as `diag(K(K + nλI)⁻¹)` through a Cholesky solve; the
/// cross-check path for [`exact_ridge_leverage`].
pub fn exact_ridge_leverage_by_solve(k: &KernelMatrix, lambda: f64) -> Result<LeverageScores> {
    check_lambda(lambda)?;
    let m = k.entries();
    let n = m.nrows();
    // (K + nλI)⁻¹K = K(K + nλI)⁻¹ since both are functions of K.
    let x = linalg::shifted_solve(m, n as f64 * lambda, m)?;
    Ok(LeverageScores { scores: x.diagonal(), lambda, method: ScoreMethod::Exact })
}

pub fn effective_dimension(k: &KernelMatrix, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    SpectralData::decompose(k.entries())?.effective_dimension(lambda)
}

pub fn max_dof(k: &KernelMatrix, lambda: f64) -> Result<f64> {
    Ok(exact_ridge_leverage(k, lambda)?.max_dof())
}

/// `l̃_i = B_iᵀ(BᵀB + nλI)⁻¹B_i` for every row of the sketch factor.
pub fn approx_scores_from_sketch(sketch: &NystromSketch, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    let b = sketch.factor();
    let n = b.nrows();
    let gram = b.transpose() * b;
    let chol = linalg::shifted_cholesky(&gram, n as f64 * lambda)?;
    // BᵀB + nλI = RRᵀ  ⇒  l̃_i = ‖R⁻¹B_i‖².
    let z = chol.l().solve_lower_triangular(&b.transpose()).ok_or(Error::NotPositiveDefinite)?;
    Ok(DVector::from_iterator(n, z.column_iter().map(|c| c.norm_squared())))
}

/// Fast approximate λ-ridge leverage scores from `p` columns drawn with
/// replacement from `dist`.
pub fn approx_ridge_leverage<S: ColumnSource + ?Sized>(
    source: &S,
    lambda: f64,
    p: usize,
    dist: &Distribution,
    seed: u64,
) -> Result<LeverageScores> {
    check_lambda(lambda)?;
    if dist.len() != source.n() {
        return Err(Error::DimensionMismatch { expected: source.n(), found: dist.len() });
    }
    let sampled = sample_with_rng(dist, p, &mut rng_from_seed(seed))?;
    let sketch = NystromSketch::from_source(source, &sampled)?;
    let scores = approx_scores_from_sketch(&sketch, lambda)?;
    Ok(LeverageScores { scores, lambda, method: ScoreMethod::Approximate { sketch_size: p, rank: sketch.rank() } })
}

/// Sample size from the squared-length guarantee:
/// `p ≥ 8(Tr(K)/(nλε) + 1/6)·ln(n/ρ)`.
pub fn squared_length_sample_size(trace: f64, n: usize, lambda: f64, epsilon: f64, rho: f64) -> Result<usize> {
    check_lambda(lambda)?;
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::invalid(format!("epsilon must be in (0, 1/2), got {epsilon}")));
    }
    if !(trace.is_finite() && trace > 0.0) {
        return Err(Error::invalid(format!("trace must be positive, got {trace}")));
    }
    crate::sampling::sufficient_p(trace / (n as f64 * lambda * epsilon), 1.0, n, rho)
}

/// Lower factor `(σ_n − nλε)/(σ_n + nλε)` of the multiplicative guarantee;
/// `None` when `σ_n ≤ nλε` and the bound is vacuous.
pub fn multiplicative_factor(sigma_min: f64, n: usize, lambda: f64, epsilon: f64) -> Option<f64> {
    let shift = n as f64 * lambda * epsilon;
    (sigma_min > shift).then(|| (sigma_min - shift) / (sigma_min + shift))
}

//! Nyström sketches and column-sampling sketching matrices.
//!
//! A [`NystromSketch`] stores the sampled columns `C = K[:, I]`, the overlap
//! block `W = K[I, I]` and a thin factor `B` with `BBᵀ = CW†Cᵀ`. `W†` comes from
//! a symmetric eigendecomposition `W = VΛVᵀ` that discards eigenvalues below
//! `p'·ε_mach·λ_max(W)·100`; the factor is `B = C·V₊·Λ₊^{−1/2}`, so it has one
//! column per retained eigenvalue. Repeated indices are dropped first, which
//! leaves `CW†Cᵀ` unchanged.
//!
//! A [`SketchingMatrix`] keeps every draw (duplicates included) with weight
//! `1/√(p·p_i)`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::kernels::{ColumnSource, KernelSpec, LazyGram, PointSet};
use crate::linalg;
use crate::sampling::Distribution;
use crate::{Error, Result};

/// Default cap on `n` for materializing dense `n × n` matrices.
pub const DEFAULT_DENSE_CAP: usize = 5000;

/// Safety multiplier in the pseudo-inverse threshold for `W`.
pub const PINV_SAFETY: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct NystromSketch {
    columns: DMatrix<f64>,
    overlap: DMatrix<f64>,
    factor: DMatrix<f64>,
    indices: Vec<usize>,
    tolerance: f64,
}

impl NystromSketch {
    /// Builds the sketch from any column source; `sampled` may contain repeats.
    pub fn from_source<S: ColumnSource + ?Sized>(source: &S, sampled: &[usize]) -> Result<Self> {
        if sampled.is_empty() {
            return Err(Error::invalid("empty sample"));
        }
        let n = source.n();
        if let Some(&bad) = sampled.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, n });
        }
        let indices: Vec<usize> = sampled.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let columns = source.columns(&indices)?;
        linalg::ensure_finite(&columns, "sampled kernel columns")?;
        let mut overlap = columns.select_rows(&indices);
        linalg::symmetrize(&mut overlap);

        let (values, vectors) = linalg::sorted_symmetric_eigen(&overlap);
        let top = values[0];
        if top <= 0.0 {
            return Err(Error::DegenerateSketch(format!("overlap block has no positive eigenvalue (largest {top:e})")));
        }
        let tolerance = indices.len() as f64 * f64::EPSILON * top * PINV_SAFETY;
        let rank = values.iter().take_while(|&&v| v > tolerance).count();
        if rank == 0 {
            return Err(Error::DegenerateSketch("all overlap eigenvalues below tolerance".into()));
        }
        let mut basis = vectors.columns(0, rank).into_owned();
        for (k, mut col) in basis.column_iter_mut().enumerate() {
            col /= values[k].sqrt();
        }
        let factor = &columns * basis;
        Ok(NystromSketch { columns, overlap, factor, indices, tolerance })
    }

    /// `n × r` factor `B` with `BBᵀ = CW†Cᵀ`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Sampled columns `C` (one per distinct index).
    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// Overlap block `W = K[I, I]`.
    pub fn overlap(&self) -> &DMatrix<f64> {
        &self.overlap
    }

    /// Distinct sampled indices, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn n(&self) -> usize {
        self.factor.nrows()
    }

    /// Absolute eigenvalue threshold used for `W†`.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Materializes `L = BBᵀ`, refusing when `n > cap`.
    pub fn to_dense(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.n();
        if n > cap {
            return Err(Error::CapExceeded { n, cap });
        }
        let mut l = &self.factor * self.factor.transpose();
        linalg::symmetrize(&mut l);
        Ok(l)
    }
}

pub fn build_sketch(points: &PointSet, spec: KernelSpec, sampled: &[usize]) -> Result<NystromSketch> {
    NystromSketch::from_source(&LazyGram::new(points, spec)?, sampled)
}

pub fn sketch_to_dense(sketch: &NystromSketch) -> Result<DMatrix<f64>> {
    sketch.to_dense(DEFAULT_DENSE_CAP)
}

/// Sparse `n × p` matrix with one positive entry per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchingMatrix {
    n: usize,
    /// `(row, weight)` for each column, in draw order.
    entries: Vec<(usize, f64)>,
}

impl SketchingMatrix {
    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.n, self.entries.len());
        for (j, &(i, w)) in self.entries.iter().enumerate() {
            s[(i, j)] = w;
        }
        s
    }

    /// Diagonal of `SSᵀ`, which has no off-diagonal entries.
    pub fn gram_diagonal(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.n);
        for &(i, w) in &self.entries {
            d[i] += w * w;
        }
        d
    }

    /// `K·S` computed from the sampled columns only.
    pub fn right_apply<S: ColumnSource + ?Sized>(&self, source: &S) -> Result<DMatrix<f64>> {
        if source.n() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: source.n() });
        }
        let rows: Vec<usize> = self.entries.iter().map(|&(i, _)| i).collect();
        let mut ks = source.columns(&rows)?;
        for (j, &(_, w)) in self.entries.iter().enumerate() {
            ks.column_mut(j).scale_mut(w);
        }
        Ok(ks)
    }
}

/// Weighted sketching matrix for a with-replacement sample drawn from `dist`.
pub fn sketching_matrix(sampled: &[usize], dist: &Distribution) -> Result<SketchingMatrix> {
    if sampled.is_empty() {
        return Err(Error::invalid("empty sample"));
    }
    let n = dist.len();
    let p = sampled.len() as f64;
    let entries = sampled
        .iter()
        .map(|&i| {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            let pi = dist.probabilities()[i];
            if pi <= 0.0 {
                return Err(Error::InvalidDistribution(format!("index {i} sampled with zero probability")));
            }
            Ok((i, 1.0 / (p * pi).sqrt()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SketchingMatrix { n, entries })
}

/// Regularized approximation `L_γ = KS(SᵀKS + nγI)⁻¹SᵀK`.
pub fn apply_regularized_sketch(
    points: &PointSet,
    spec: KernelSpec,
    sketch: &SketchingMatrix,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    regularized_approximation(&LazyGram::new(points, spec)?, sketch, gamma)
}

pub fn regularized_approximation<S: ColumnSource + ?Sized>(
    source: &S,
    sketch: &SketchingMatrix,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    let n = source.n();
    if n > DEFAULT_DENSE_CAP {
        return Err(Error::CapExceeded { n, cap: DEFAULT_DENSE_CAP });
    }
    let ks = sketch.right_apply(source)?;
    linalg::ensure_finite(&ks, "sketched kernel columns")?;
    // (SᵀKS)_{ab} = w_a · (KS)_{i_a, b}
    let mut sks = DMatrix::from_fn(sketch.cols(), sketch.cols(), |a, b| {
        let (row, w) = sketch.entries[a];
        w * ks[(row, b)]
    });
    linalg::symmetrize(&mut sks);
    let solved = linalg::shifted_solve(&sks, n as f64 * gamma, &ks.transpose())?;
    let mut l = &ks * solved;
    linalg::symmetrize(&mut l);
    Ok(l)
}

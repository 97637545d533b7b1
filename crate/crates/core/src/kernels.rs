//! Kernel functions, Gram matrices and column access.
//!
//! Three families are supported:
//!
//! * `Linear`: `k(x, x') = ⟨x, x'⟩`
//! * `Rbf { bandwidth: h }`: `k(x, x') = exp(−‖x − x'‖² / (2h²))`
//! * `Bernoulli { order: β }`: the periodic Sobolev kernel on `[0, 1)`,
//!   `k(x, x') = (−1)^{β+1} B_{2β}(frac(x − x')) / (2β)!`, where `B_m` is the
//!   `m`-th Bernoulli polynomial and `frac(u) = u − ⌊u⌋`.
//!
//! The sign `(−1)^{β+1}` is `+1` for odd orders. For even orders it flips the
//! sign of the bare `B_{2β}/(2β)!` expression, which is otherwise negative
//! semi-definite (its Fourier coefficients are `(−1)^{β+1}·2/(2πk)^{2β}`).
//!
//! Gram entries are only ever produced through [`KernelSpec::eval`], so a
//! column fetched with [`kernel_columns`] is bitwise equal to the same column
//! of [`kernel_matrix`].

use std::fmt;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{Error, Result};

/// Largest Bernoulli polynomial degree `2β` with a precomputed table.
pub const MAX_BERNOULLI_DEGREE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Linear,
    Rbf { bandwidth: f64 },
    Bernoulli { order: u32 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { bandwidth } => {
                if bandwidth.is_finite() && bandwidth > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("rbf bandwidth must be positive, got {bandwidth}")))
                }
            }
            KernelSpec::Bernoulli { order } => {
                if order >= 1 && 2 * order as usize <= MAX_BERNOULLI_DEGREE {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "bernoulli order must be in 1..={}, got {order}",
                        MAX_BERNOULLI_DEGREE / 2
                    )))
                }
            }
        }
    }

    /// Checks that a point set of dimension `dim` is admissible for this kernel.
    pub fn check_dimension(&self, dim: usize) -> Result<()> {
        match self {
            KernelSpec::Bernoulli { .. } if dim != 1 => Err(Error::DimensionMismatch { expected: 1, found: dim }),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
        }
        if !x.iter().chain(y).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("kernel input"));
        }
        self.validate()?;
        match *self {
            KernelSpec::Linear => Ok(dot(x, y)),
            KernelSpec::Rbf { bandwidth } => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                Ok((-sq / (2.0 * bandwidth * bandwidth)).exp())
            }
            KernelSpec::Bernoulli { order } => {
                self.check_dimension(x.len())?;
                Ok(bernoulli_kernel(order, x[0], y[0]))
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Rbf { bandwidth } => write!(f, "rbf(bandwidth={bandwidth})"),
            KernelSpec::Bernoulli { order } => write!(f, "bernoulli(order={order})"),
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `u − ⌊u⌋`, always in `[0, 1)`.
pub fn frac(u: f64) -> f64 {
    let r = u - u.floor();
    // u slightly below an integer can round up to exactly 1.
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

fn bernoulli_kernel(order: u32, x: f64, y: f64) -> f64 {
    // Ordering the arguments makes the evaluation bitwise symmetric.
    let (a, b) = if x >= y { (x, y) } else { (y, x) };
    let t = frac(a - b);
    let degree = 2 * order as usize;
    let value = horner(&scaled_bernoulli_tables()[degree], t);
    if order % 2 == 1 {
        value
    } else {
        -value
    }
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// Coefficients (ascending powers) of `B_m(t)/m!` for `m = 0..=MAX_BERNOULLI_DEGREE`.
///
/// With `b_m = B_m/m!` the recurrence `B_m' = m·B_{m−1}` becomes `b_m' = b_{m−1}`,
/// and `∫₀¹ b_m = 0` fixes the constant term.
fn scaled_bernoulli_tables() -> &'static [Vec<f64>] {
    static TABLES: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut tables: Vec<Vec<f64>> = vec![vec![1.0]];
        for m in 1..=MAX_BERNOULLI_DEGREE {
            let prev = &tables[m - 1];
            let mut coeffs = vec![0.0; m + 1];
            for k in 1..=m {
                coeffs[k] = prev[k - 1] / k as f64;
            }
            let integral: f64 = (1..=m).map(|k| coeffs[k] / (k + 1) as f64).sum();
            coeffs[0] = -integral;
            tables.push(coeffs);
        }
        tables
    })
}

/// Coefficients (ascending powers) of the Bernoulli polynomial `B_m`.
pub fn bernoulli_polynomial(m: usize) -> Result<Vec<f64>> {
    if m > MAX_BERNOULLI_DEGREE {
        return Err(Error::invalid(format!("bernoulli degree {m} exceeds {MAX_BERNOULLI_DEGREE}")));
    }
    let factorial: f64 = (1..=m).map(|k| k as f64).product();
    Ok(scaled_bernoulli_tables()[m].iter().map(|c| c * factorial).collect())
}

/// `n` points in `d` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f64>,
    n: usize,
    dim: usize,
}

impl PointSet {
    pub fn from_row_major(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::invalid("point set needs at least one point and one dimension"));
        }
        if data.len() != n * dim {
            return Err(Error::DimensionMismatch { expected: n * dim, found: data.len() });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("point set"));
        }
        Ok(PointSet { data, n, dim })
    }

    pub fn from_scalars(xs: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        Self::from_row_major(n, 1, xs)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(rows.len(), dim, data)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// A dense symmetric Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: DMatrix<f64>,
    spec: Option<KernelSpec>,
}

impl KernelMatrix {
    /// Wraps an arbitrary SPSD matrix, e.g. one not generated from points.
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        linalg::ensure_finite(&entries, "kernel matrix")?;
        linalg::ensure_symmetric(&entries)?;
        if entries.nrows() == 0 {
            return Err(Error::invalid("empty kernel matrix"));
        }
        Ok(KernelMatrix { entries, spec: None })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn spec(&self) -> Option<KernelSpec> {
        self.spec
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }
}

impl AsRef<DMatrix<f64>> for KernelMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

fn check_inputs(points: &PointSet, spec: KernelSpec) -> Result<()> {
    spec.validate()?;
    spec.check_dimension(points.dim())
}

pub fn eval_kernel(spec: KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.eval(x, y)
}

/// Full `n × n` Gram matrix, computed on the upper triangle and mirrored.
pub fn kernel_matrix(points: &PointSet, spec: KernelSpec) -> Result<KernelMatrix> {
    check_inputs(points, spec)?;
    let n = points.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| (0..=j).map(|i| spec.eval(points.row(i), points.row(j))).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let mut entries = DMatrix::zeros(n, n);
    for (j, col) in upper.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    Ok(KernelMatrix { entries, spec: Some(spec) })
}

/// Columns `indices` of the Gram matrix, without forming the rest of it.
pub fn kernel_columns(points: &PointSet, indices: &[usize], spec: KernelSpec) -> Result<DMatrix<f64>> {
    check_inputs(points, spec)?;
    let n = points.len();
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, n });
    }
    let columns: Vec<Vec<f64>> = indices
        .par_iter()
        .map(|&j| (0..n).map(|i| spec.eval(points.row(i), points.row(j))).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(n, indices.len(), |i, c| columns[c][i]))
}

/// `(k(x_i, x_i))_i` in `O(n)` evaluations.
pub fn kernel_diagonal(points: &PointSet, spec: KernelSpec) -> Result<DVector<f64>> {
    check_inputs(points, spec)?;
    let values = points.rows().map(|x| spec.eval(x, x)).collect::<Result<Vec<f64>>>()?;
    Ok(DVector::from_vec(values))
}

/// Anything that can hand out columns and the diagonal of an SPSD kernel
/// matrix. Implemented lazily for points plus a kernel and eagerly for a
/// precomputed [`KernelMatrix`].
pub trait ColumnSource: Sync {
    fn n(&self) -> usize;
    fn columns(&self, indices: &[usize]) -> Result<DMatrix<f64>>;
    fn diagonal(&self) -> Result<DVector<f64>>;
}

/// Lazy Gram matrix over a point set.
#[derive(Debug, Clone, Copy)]
pub struct LazyGram<'a> {
    pub points: &'a PointSet,
    pub spec: KernelSpec,
}

impl<'a> LazyGram<'a> {
    pub fn new(points: &'a PointSet, spec: KernelSpec) -> Result<Self> {
        check_inputs(points, spec)?;
        Ok(LazyGram { points, spec })
    }
}

impl ColumnSource for LazyGram<'_> {
    fn n(&self) -> usize {
        self.points.len()
    }

    fn columns(&self, indices: &[usize]) -> Result<DMatrix<f64>> {
        kernel_columns(self.points, indices, self.spec)
    }

    fn diagonal(&self) -> Result<DVector<f64>> {
        kernel_diagonal(self.points, self.spec)
    }
}

impl ColumnSource for (&PointSet, KernelSpec) {
    fn n(&self) -> usize {
        self.0.len()
    }

    fn columns(&self, indices: &[usize]) -> Result<DMatrix<f64>> {
        kernel_columns(self.0, indices, self.1)
    }

    fn diagonal(&self) -> Result<DVector<f64>> {
        kernel_diagonal(self.0, self.1)
    }
}

impl ColumnSource for KernelMatrix {
    fn n(&self) -> usize {
        self.entries.nrows()
    }

    fn columns(&self, indices: &[usize]) -> Result<DMatrix<f64>> {
        let n = self.n();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, n });
        }
        Ok(self.entries.select_columns(indices))
    }

    fn diagonal(&self) -> Result<DVector<f64>> {
        Ok(self.entries.diagonal())
    }
}

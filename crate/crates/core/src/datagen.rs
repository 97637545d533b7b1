//! Synthetic regression problems and CSV datasets.
//!
//! Synthetic data live on `[0, 1)` with the periodic Bernoulli kernel. The
//! regression function is a normalized anchor expansion
//! `f*(x) = Σ_k c_k k(x, z_k)` with unit RKHS norm, and observations are
//! `y = f* + σξ`.
//!
//! Three input layouts are available: the regular grid `x_i = (i − 1)/n`
//! (circulant Gram matrix, constant leverage), i.i.d. uniform points, and the
//! arcsine law `x = sin²(πu/2)`, `u ~ U(0, 1)`, which is symmetric about 1/2
//! and piles up near both ends of the interval.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::kernels::{kernel_matrix, KernelSpec, PointSet};
use crate::regression::GroundTruth;
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Error, Result};

/// Variance floor used when standardizing CSV features.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    UniformGrid,
    Arcsine,
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n: usize,
    pub density: Density,
    pub bernoulli_order: u32,
    pub noise_sigma: f64,
    #[serde(default = "default_anchors")]
    pub anchors: usize,
    pub seed: u64,
}

fn default_anchors() -> usize {
    10
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid(format!("synthetic n must be at least 2, got {}", self.n)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid(format!("noise_sigma must be nonnegative, got {}", self.noise_sigma)));
        }
        if self.anchors == 0 {
            return Err(Error::invalid("anchors must be at least 1"));
        }
        self.kernel().validate()
    }

    pub fn kernel(&self) -> KernelSpec {
        KernelSpec::Bernoulli { order: self.bernoulli_order }
    }
}

#[derive(Debug, Clone)]
pub struct RegressionDataset {
    pub points: PointSet,
    pub y: DVector<f64>,
    /// Known only for synthetic data.
    pub truth: Option<GroundTruth>,
    /// Kernel the data were generated with, if any.
    pub spec: Option<KernelSpec>,
    /// Feature names, one per point dimension.
    pub feature_names: Vec<String>,
}

impl RegressionDataset {
    pub fn n(&self) -> usize {
        self.points.len()
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::invalid(format!("need at least 2 points, got {n}")))
    } else {
        Ok(())
    }
}

/// `x_i = (i − 1)/n`.
pub fn grid_points(n: usize) -> Result<PointSet> {
    check_n(n)?;
    PointSet::from_scalars((0..n).map(|i| i as f64 / n as f64).collect())
}

pub fn arcsine_from_uniform(u: f64) -> f64 {
    let s = (std::f64::consts::FRAC_PI_2 * u).sin();
    s * s
}

pub fn arcsine_points(n: usize, seed: u64) -> Result<PointSet> {
    check_n(n)?;
    let mut rng = rng_from_seed(seed);
    PointSet::from_scalars((0..n).map(|_| arcsine_from_uniform(rng.random())).collect())
}

pub fn uniform_points(n: usize, seed: u64) -> Result<PointSet> {
    check_n(n)?;
    let mut rng = rng_from_seed(seed);
    PointSet::from_scalars((0..n).map(|_| rng.random()).collect())
}

#[derive(Debug, Clone)]
pub struct AnchorFunction {
    /// `f*` at the input points.
    pub values: DVector<f64>,
    pub anchors: PointSet,
    pub coefficients: DVector<f64>,
    /// `cᵀK_z c`; equal to one up to round-off.
    pub rkhs_norm_sq: f64,
}

/// Random element of the RKHS with unit norm: `m` anchors drawn uniformly in
/// `[0, 1)^d`, standard normal coefficients rescaled so `cᵀK_z c = 1`, sign
/// fixed so the first coefficient is positive.
pub fn make_f_star(points: &PointSet, spec: KernelSpec, anchors: usize, seed: u64) -> Result<AnchorFunction> {
    if anchors == 0 {
        return Err(Error::invalid("anchors must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    // One retry when the anchor Gram matrix annihilates the coefficients.
    for _ in 0..2 {
        let z: Vec<f64> = (0..anchors * points.dim()).map(|_| rng.random()).collect();
        let z = PointSet::from_row_major(anchors, points.dim(), z)?;
        let mut c = DVector::from_fn(anchors, |_, _| StandardNormal.sample(&mut rng));
        let gram = kernel_matrix(&z, spec)?;
        let norm_sq = c.dot(&(gram.entries() * &c));
        let scale = gram.trace().abs().max(f64::MIN_POSITIVE) * c.norm_squared();
        if norm_sq.is_nan() || norm_sq <= 1e-14 * scale {
            continue;
        }
        c /= norm_sq.sqrt();
        if c[0] < 0.0 {
            c = -c;
        }
        let mut values = DVector::zeros(points.len());
        for (i, x) in points.rows().enumerate() {
            let mut acc = 0.0;
            for (k, zk) in z.rows().enumerate() {
                acc += c[k] * spec.eval(x, zk)?;
            }
            values[i] = acc;
        }
        let rkhs_norm_sq = c.dot(&(gram.entries() * &c));
        return Ok(AnchorFunction { values, anchors: z, coefficients: c, rkhs_norm_sq });
    }
    Err(Error::invalid("anchor Gram matrix is numerically singular"))
}

/// Full synthetic dataset; a pure function of `config`.
pub fn synthesize(config: &SyntheticConfig) -> Result<RegressionDataset> {
    config.validate()?;
    let spec = config.kernel();
    let points = match config.density {
        Density::UniformGrid => grid_points(config.n)?,
        Density::Arcsine => arcsine_points(config.n, derive_seed(config.seed, 0))?,
        Density::UniformRandom => uniform_points(config.n, derive_seed(config.seed, 0))?,
    };
    let f = make_f_star(&points, spec, config.anchors, derive_seed(config.seed, 1))?;
    let mut rng = rng_from_seed(derive_seed(config.seed, 2));
    let sigma = config.noise_sigma;
    let y = DVector::from_fn(config.n, |i, _| {
        let xi: f64 = StandardNormal.sample(&mut rng);
        f.values[i] + sigma * xi
    });
    Ok(RegressionDataset {
        points,
        y,
        truth: Some(GroundTruth::new(f.values, sigma * sigma)?),
        spec: Some(spec),
        feature_names: vec!["x".into()],
    })
}

/// Loads a comma-separated file with a header row. Every column except
/// `target` (and an optional `f_star` column written by [`write_csv`]) becomes
/// a feature.
pub fn load_csv(path: &Path, target: &str, standardize: bool) -> Result<RegressionDataset> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    let target_col = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::Csv(format!("missing target column '{target}'")))?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != target_col && &headers[c] != "f_star").collect();
    if feature_cols.is_empty() {
        return Err(Error::Csv("no feature columns".into()));
    }
    let mut features = Vec::new();
    let mut y = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(format!("row {row}: {e}")))?;
        let parse = |col: usize| -> Result<f64> {
            let cell = record.get(col).unwrap_or("");
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Csv(format!("row {row}, column '{}': non-numeric value '{cell}'", &headers[col])))
        };
        for &c in &feature_cols {
            features.push(parse(c)?);
        }
        y.push(parse(target_col)?);
    }
    let n = y.len();
    if n < 2 {
        return Err(Error::Csv(format!("need at least 2 data rows, found {n}")));
    }
    let dim = feature_cols.len();
    if standardize {
        standardize_columns(&mut features, n, dim);
    }
    Ok(RegressionDataset {
        points: PointSet::from_row_major(n, dim, features)?,
        y: DVector::from_vec(y),
        truth: None,
        spec: None,
        feature_names: feature_cols.iter().map(|&c| headers[c].to_string()).collect(),
    })
}

fn standardize_columns(data: &mut [f64], n: usize, dim: usize) {
    for c in 0..dim {
        let mean = (0..n).map(|i| data[i * dim + c]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (data[i * dim + c] - mean).powi(2)).sum::<f64>() / n as f64;
        let scale = var.max(VARIANCE_FLOOR).sqrt();
        for i in 0..n {
            data[i * dim + c] = (data[i * dim + c] - mean) / scale;
        }
    }
}

/// Writes features, `y` and (for synthetic data) `f_star` with round-trip
/// exact float formatting.
pub fn write_csv(dataset: &RegressionDataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    let mut header: Vec<String> = dataset.feature_names.clone();
    if header.len() != dataset.points.dim() {
        header = (0..dataset.points.dim()).map(|d| format!("x{d}")).collect();
    }
    header.push("y".into());
    if dataset.truth.is_some() {
        header.push("f_star".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for (i, x) in dataset.points.rows().enumerate() {
        let mut cells: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        cells.push(dataset.y[i].to_string());
        if let Some(truth) = &dataset.truth {
            cells.push(truth.f_star[i].to_string());
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Mean of `values[i]` over points whose first coordinate falls in `[lo, hi)`.
pub fn region_mean(points: &PointSet, values: &[f64], lo: f64, hi: f64) -> Option<f64> {
    let picked: Vec<f64> =
        points.rows().zip(values).filter(|(x, _)| x[0] >= lo && x[0] < hi).map(|(_, v)| *v).collect();
    (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
}

/// Center-decile mean and border-decile mean (first and last decile of
/// `[0, 1)`) of per-point values.
pub fn center_and_border_means(points: &PointSet, values: &[f64]) -> Option<(f64, f64)> {
    let center = region_mean(points, values, 0.45, 0.55)?;
    let (lo_sum, lo_count) = region_sum(points, values, 0.0, 0.1);
    let (hi_sum, hi_count) = region_sum(points, values, 0.9, f64::INFINITY);
    let count = lo_count + hi_count;
    (count > 0).then(|| (center, (lo_sum + hi_sum) / count as f64))
}

fn region_sum(points: &PointSet, values: &[f64], lo: f64, hi: f64) -> (f64, usize) {
    points.rows().zip(values).filter(|(x, _)| x[0] >= lo && x[0] < hi).fold((0.0, 0), |(s, c), (_, v)| (s + v, c + 1))
}

/// Whether `K[i][j]` depends only on `(i − j) mod n`, to `tol` absolute.
pub fn is_circulant(k: &DMatrix<f64>, tol: f64) -> bool {
    let n = k.nrows();
    (0..n).all(|j| (0..n).all(|i| (k[(i, j)] - k[((i + n - j) % n, 0)]).abs() <= tol))
}

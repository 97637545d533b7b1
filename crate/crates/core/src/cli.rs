//! Batch experiment harness.
//!
//! A run is described by a TOML file (see `configs/` in the repository) plus
//! a handful of flag overrides. Each requested experiment writes one CSV file
//! into the output directory. The file starts with `#`-prefixed lines that
//! record the resolved configuration and summary values. Output is a pure
//! function of the configuration: rows are computed in parallel but collected
//! in a fixed order, and wall-clock timings are only written when
//! `record_timing = true`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{column_norms_sq, empirical_tail, psi_matrix};
use crate::datagen::{center_and_border_means, load_csv, synthesize, RegressionDataset, SyntheticConfig};
use crate::kernels::{kernel_diagonal, kernel_matrix, KernelMatrix, KernelSpec, LazyGram};
use crate::leverage::{
    approx_ridge_leverage, approx_scores_from_sketch, multiplicative_factor, squared_length_sample_size, SpectralData,
};
use crate::regression::{analytic_risk_spectral, sketch_risk, GroundTruth, RiskReport};
use crate::rng::derive_seed;
use crate::sampling::{beta_factor, make_distribution, sample_with_replacement, Distribution, SamplingKind};
use crate::sketch::NystromSketch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LeverageProfile,
    RiskCurve,
    SummaryTable,
    Concentration,
    ScoreApproximation,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::LeverageProfile,
        ExperimentKind::RiskCurve,
        ExperimentKind::SummaryTable,
        ExperimentKind::Concentration,
        ExperimentKind::ScoreApproximation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::LeverageProfile => "leverage_profile",
            ExperimentKind::RiskCurve => "risk_curve",
            ExperimentKind::SummaryTable => "summary_table",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::ScoreApproximation => "score_approximation",
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic(SyntheticConfig),
    Csv {
        path: PathBuf,
        target: String,
        #[serde(default)]
        standardize: bool,
        #[serde(default)]
        name: Option<String>,
    },
}

impl DatasetConfig {
    pub fn name(&self) -> String {
        match self {
            DatasetConfig::Synthetic(_) => "synth".into(),
            DatasetConfig::Csv { path, name, .. } => name
                .clone()
                .unwrap_or_else(|| path.file_stem().map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_experiments")]
    pub experiments: Vec<ExperimentKind>,
    pub lambda: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub p_values: Vec<usize>,
    #[serde(default = "default_samplers")]
    pub samplers: Vec<SamplingKind>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    /// Columns drawn for the fast score approximation used by the
    /// `approx_leverage` sampler and the leverage profile; defaults to
    /// `max(20, ⌈4·d_eff⌉)` capped at `n`.
    #[serde(default)]
    pub approx_p: Option<usize>,
    #[serde(default)]
    pub record_timing: bool,
    /// Overrides the dataset's own kernel; required for CSV data.
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    pub dataset: DatasetConfig,
}

fn default_experiments() -> Vec<ExperimentKind> {
    vec![ExperimentKind::SummaryTable]
}
fn default_epsilon() -> f64 {
    0.25
}
fn default_rho() -> f64 {
    0.1
}
fn default_samplers() -> Vec<SamplingKind> {
    vec![SamplingKind::Uniform, SamplingKind::Diagonal, SamplingKind::ExactLeverage, SamplingKind::ApproxLeverage]
}
fn default_trials() -> usize {
    10
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_t_grid() -> Vec<f64> {
    vec![0.1, 0.25, 0.5, 0.75]
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return bad(format!("epsilon must be in (0, 1/2), got {}", self.epsilon));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho must be in (0, 1), got {}", self.rho));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.experiments.is_empty() {
            return bad("no experiments requested".into());
        }
        if self.samplers.is_empty() {
            return bad("no samplers requested".into());
        }
        if self.samplers.contains(&SamplingKind::Custom) {
            return bad("the custom sampler cannot be driven from a config file".into());
        }
        if self.p_values.contains(&0) {
            return bad("p_values must be positive".into());
        }
        if self.approx_p == Some(0) {
            return bad("approx_p must be positive".into());
        }
        if self.t_grid.is_empty() || self.t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return bad("t_grid must hold positive thresholds".into());
        }
        if let Some(spec) = &self.kernel {
            spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        match &self.dataset {
            DatasetConfig::Synthetic(s) => s.validate().map_err(|e| CliError::Config(e.to_string()))?,
            DatasetConfig::Csv { .. } if self.kernel.is_none() => {
                return bad("CSV datasets need a [kernel] section".into());
            }
            DatasetConfig::Csv { .. } => {}
        }
        if self.experiments.contains(&ExperimentKind::RiskCurve) && self.p_values.is_empty() {
            return bad("risk_curve needs a nonempty p_values list".into());
        }
        if self.experiments.contains(&ExperimentKind::Concentration) && self.p_values.is_empty() {
            return bad("concentration needs a nonempty p_values list".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(#[from] crate::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(crate::Error::Io(_)) => 3,
            CliError::Runtime(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

/// Everything the experiments share: data, kernel, full spectrum.
pub struct Workspace {
    pub name: String,
    pub data: RegressionDataset,
    pub spec: KernelSpec,
    pub kernel: KernelMatrix,
    pub spectral: SpectralData,
    /// Ground truth for risk computations. For CSV data the observed targets
    /// stand in for `f*` with zero noise.
    pub truth: GroundTruth,
}

impl Workspace {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let data = match &cfg.dataset {
            DatasetConfig::Synthetic(s) => synthesize(s)?,
            DatasetConfig::Csv { path, target, standardize, .. } => load_csv(path, target, *standardize)?,
        };
        let spec =
            cfg.kernel.or(data.spec).ok_or_else(|| CliError::Config("no kernel configured for this dataset".into()))?;
        let kernel = kernel_matrix(&data.points, spec)?;
        let spectral = SpectralData::decompose(kernel.entries())?;
        let truth = match &data.truth {
            Some(t) => t.clone(),
            None => GroundTruth::new(data.y.clone(), 0.0)?,
        };
        Ok(Workspace { name: cfg.dataset.name(), data, spec, kernel, spectral, truth })
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    fn default_approx_p(&self, cfg: &ExperimentConfig) -> Result<usize, CliError> {
        Ok(match cfg.approx_p {
            Some(p) => p,
            None => {
                let d = self.spectral.effective_dimension(cfg.lambda * cfg.epsilon)?;
                ((4.0 * d).ceil() as usize).max(20).min(self.n())
            }
        })
    }

    /// Sampling distribution of the given kind. Leverage kinds use scores at
    /// level `λε`; the approximate variant estimates them from a
    /// squared-length pilot sample seeded with `pilot_seed`.
    pub fn distribution(
        &self,
        cfg: &ExperimentConfig,
        kind: SamplingKind,
        pilot_seed: u64,
    ) -> Result<Distribution, CliError> {
        let level = cfg.lambda * cfg.epsilon;
        let dist = match kind {
            SamplingKind::Uniform => Distribution::uniform(self.n())?,
            SamplingKind::Diagonal => {
                make_distribution(kind, kernel_diagonal(&self.data.points, self.spec)?.as_slice())?
            }
            SamplingKind::ExactLeverage => make_distribution(kind, self.spectral.ridge_leverage(level)?.as_slice())?,
            SamplingKind::ApproxLeverage => {
                let source = LazyGram::new(&self.data.points, self.spec)?;
                let pilot = make_distribution(SamplingKind::Diagonal, source_diag(&source)?.as_slice())?;
                let p = self.default_approx_p(cfg)?;
                let approx = approx_ridge_leverage(&source, level, p, &pilot, pilot_seed)?;
                make_distribution(kind, approx.as_slice())?
            }
            SamplingKind::Custom => return Err(CliError::Config("custom sampler is not configurable".into())),
        };
        Ok(dist)
    }
}

fn source_diag(source: &LazyGram<'_>) -> crate::Result<DVector<f64>> {
    kernel_diagonal(source.points, source.spec)
}

/// A finished experiment: file name, header lines and CSV body.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub summary: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ExperimentOutput {
    pub fn render(&self, cfg: &ExperimentConfig) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# nystrom-ridge {}", self.kind.as_str());
        let _ = writeln!(out, "# rbf kernel convention: exp(-|x - x'|^2 / (2 h^2))");
        let _ = writeln!(out, "# seed derivation: ChaCha8 keyed by seed, stream = index, first u64");
        let _ = writeln!(out, "# --- resolved config ---");
        for line in cfg.to_toml().lines() {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "# --- summary ---");
        for line in &self.summary {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Column draw used by the harness. A request for `p ≥ n` columns is read as
/// full sampling and takes every column once.
pub fn draw_columns(dist: &Distribution, p: usize, seed: u64) -> crate::Result<Vec<usize>> {
    if p >= dist.len() {
        Ok((0..dist.len()).collect())
    } else {
        sample_with_replacement(dist, p, seed)
    }
}

struct SketchOutcome {
    risk: RiskReport,
    beta: f64,
    elapsed_ms: f64,
}

fn run_sketch(
    ws: &Workspace,
    cfg: &ExperimentConfig,
    kind: SamplingKind,
    p: usize,
    seed: u64,
) -> Result<SketchOutcome, CliError> {
    let started = Instant::now();
    let dist = ws.distribution(cfg, kind, derive_seed(seed, 1))?;
    let sampled = draw_columns(&dist, p, seed)?;
    let source = LazyGram::new(&ws.data.points, ws.spec)?;
    let sketch = NystromSketch::from_source(&source, &sampled)?;
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    let risk = sketch_risk(&sketch, &ws.truth, cfg.lambda)?;
    let reference = ws.spectral.ridge_leverage(cfg.lambda * cfg.epsilon)?;
    let beta = beta_factor(dist.probabilities(), reference.as_slice())?;
    Ok(SketchOutcome { risk, beta, elapsed_ms })
}

pub fn run_leverage_profile(ws: &Workspace, cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let exact = ws.spectral.ridge_leverage(cfg.lambda)?;
    let source = LazyGram::new(&ws.data.points, ws.spec)?;
    let pilot = make_distribution(SamplingKind::Diagonal, source_diag(&source)?.as_slice())?;
    let p = ws.default_approx_p(cfg)?;
    let approx = approx_ridge_leverage(&source, cfg.lambda, p, &pilot, derive_seed(cfg.seed, 0))?;
    let dim = ws.data.points.dim();
    let mut columns = vec!["index".to_string()];
    columns.extend((0..dim).map(|d| format!("x{d}")));
    columns.extend(["exact_score".to_string(), "approx_score".to_string()]);
    let rows = ws
        .data
        .points
        .rows()
        .enumerate()
        .map(|(i, x)| {
            let mut row = vec![i.to_string()];
            row.extend(x.iter().map(|v| fmt(*v)));
            row.push(fmt(exact.scores[i]));
            row.push(fmt(approx.scores[i]));
            row
        })
        .collect();
    let mut summary = vec![
        format!("d_eff = {}", fmt(exact.sum())),
        format!("d_mof = {}", fmt(exact.max_dof())),
        format!("approx_p = {p} (diagonal sampling)"),
    ];
    if dim == 1 {
        if let Some((center, border)) = center_and_border_means(&ws.data.points, exact.as_slice()) {
            summary.push(format!("center_decile_mean = {}", fmt(center)));
            summary.push(format!("border_decile_mean = {}", fmt(border)));
        }
    }
    Ok(ExperimentOutput { kind: ExperimentKind::LeverageProfile, summary, columns, rows })
}

pub fn run_risk_curve(ws: &Workspace, cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let full = analytic_risk_spectral(&ws.spectral, &ws.truth, cfg.lambda)?;
    let tasks: Vec<(SamplingKind, usize, usize)> = cfg
        .samplers
        .iter()
        .flat_map(|&s| cfg.p_values.iter().flat_map(move |&p| (0..cfg.trials).map(move |t| (s, p, t))))
        .collect();
    let rows = tasks
        .par_iter()
        .map(|&(kind, p, trial)| {
            let seed = derive_seed(cfg.seed, trial as u64);
            let out = run_sketch(ws, cfg, kind, p, seed)?;
            Ok(vec![
                kind.to_string(),
                p.to_string(),
                trial.to_string(),
                seed.to_string(),
                fmt(out.risk.bias_sq),
                fmt(out.risk.variance),
                fmt(out.risk.total),
                fmt(out.risk.ratio_to(&full)),
            ])
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let summary = vec![
        format!("full_bias_sq = {}", fmt(full.bias_sq)),
        format!("full_variance = {}", fmt(full.variance)),
        format!("full_risk = {}", fmt(full.total)),
    ];
    Ok(ExperimentOutput {
        kind: ExperimentKind::RiskCurve,
        summary,
        columns: cols(&["sampler", "p", "trial", "seed", "bias_sq", "variance", "risk", "risk_ratio"]),
        rows,
    })
}

pub fn run_summary_table(ws: &Workspace, cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let full = analytic_risk_spectral(&ws.spectral, &ws.truth, cfg.lambda)?;
    let scores = ws.spectral.ridge_leverage(cfg.lambda)?;
    let d_eff = scores.sum();
    let d_mof = scores.max_dof();
    let p = ((2.0 * d_eff).ceil() as usize).max(1);
    let tasks: Vec<(SamplingKind, usize)> =
        cfg.samplers.iter().flat_map(|&s| (0..cfg.trials).map(move |t| (s, t))).collect();
    let outcomes = tasks
        .par_iter()
        .map(|&(kind, trial)| {
            let seed = derive_seed(cfg.seed, trial as u64);
            run_sketch(ws, cfg, kind, p, seed).map(|o| (kind, seed, o))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let kernel = ws.spec.to_string().replace(',', ";");
    let rows = outcomes
        .iter()
        .map(|(kind, seed, o)| {
            vec![
                ws.name.clone(),
                kernel.clone(),
                kind.to_string(),
                p.to_string(),
                seed.to_string(),
                fmt(d_eff),
                fmt(d_mof),
                fmt(o.risk.bias_sq),
                fmt(o.risk.variance),
                fmt(o.risk.total),
                fmt(o.risk.ratio_to(&full)),
                fmt(o.beta),
                if cfg.record_timing { format!("{:.3}", o.elapsed_ms) } else { String::new() },
            ]
        })
        .collect();
    let mut summary = vec![
        format!("n = {}", ws.n()),
        format!("d_eff = {}", fmt(d_eff)),
        format!("d_mof = {}", fmt(d_mof)),
        format!("p = {p} (2 d_eff rounded up)"),
        format!("full_risk = {}", fmt(full.total)),
    ];
    for kind in &cfg.samplers {
        let mut ratios: Vec<f64> =
            outcomes.iter().filter(|(k, _, _)| k == kind).map(|(_, _, o)| o.risk.ratio_to(&full)).collect();
        summary.push(format!("median_risk_ratio[{kind}] = {}", fmt(median(&mut ratios))));
    }
    Ok(ExperimentOutput {
        kind: ExperimentKind::SummaryTable,
        summary,
        columns: cols(&[
            "dataset",
            "kernel",
            "sampler",
            "p",
            "seed",
            "d_eff",
            "d_mof",
            "bias_sq",
            "variance",
            "risk",
            "risk_ratio",
            "beta",
            "wall_time_ms",
        ]),
        rows,
    })
}

pub fn run_concentration(ws: &Workspace, cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let gamma = cfg.lambda * cfg.epsilon;
    let psi = psi_matrix(&ws.spectral, gamma)?;
    let norms = column_norms_sq(&psi);
    let mut rows = Vec::new();
    for (si, &kind) in cfg.samplers.iter().enumerate() {
        let dist = match kind {
            // Exactly proportional to the columns of Ψ.
            SamplingKind::ExactLeverage => Distribution::proportional(norms.as_slice())?,
            _ => ws.distribution(cfg, kind, derive_seed(cfg.seed, 1000 + si as u64))?,
        };
        for (pi, &p) in cfg.p_values.iter().enumerate() {
            let seed = derive_seed(cfg.seed, (si * cfg.p_values.len() + pi) as u64);
            let tail = empirical_tail(&psi, &dist, p, &cfg.t_grid, cfg.trials, seed)?;
            for (k, &t) in tail.t_grid.iter().enumerate() {
                rows.push(vec![
                    kind.to_string(),
                    p.to_string(),
                    seed.to_string(),
                    fmt(t),
                    tail.trials.to_string(),
                    fmt(tail.empirical[k]),
                    fmt(tail.bound[k]),
                    fmt(tail.beta_used),
                    fmt(tail.lmax),
                    fmt(tail.frob_sq),
                ]);
            }
        }
    }
    let summary = vec![format!("gamma = {}", fmt(gamma)), format!("d_eff(gamma) = {}", fmt(norms.sum()))];
    Ok(ExperimentOutput {
        kind: ExperimentKind::Concentration,
        summary,
        columns: cols(&["sampler", "p", "seed", "t", "trials", "empirical", "bound", "beta", "lmax", "frob_sq"]),
        rows,
    })
}

pub fn run_score_approximation(ws: &Workspace, cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let n = ws.n();
    let exact = ws.spectral.ridge_leverage(cfg.lambda)?;
    let formula_p = squared_length_sample_size(ws.kernel.trace(), n, cfg.lambda, cfg.epsilon, cfg.rho)?;
    let p = cfg.p_values.first().copied().unwrap_or(formula_p);
    let dist = ws.distribution(cfg, SamplingKind::Diagonal, 0)?;
    let source = LazyGram::new(&ws.data.points, ws.spec)?;
    let sigma_min = ws.spectral.eigenvalues[n - 1];
    let mult = multiplicative_factor(sigma_min, n, cfg.lambda, cfg.epsilon);
    let rows = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = derive_seed(cfg.seed, trial as u64);
            let sampled = draw_columns(&dist, p, seed)?;
            let sketch = NystromSketch::from_source(&source, &sampled)?;
            let approx = approx_scores_from_sketch(&sketch, cfg.lambda)?;
            let diff = &exact.scores - &approx;
            let max_error = diff.max();
            let upper_violations = diff.iter().filter(|&&d| d < -1e-8).count();
            let additive_ok = diff.iter().all(|&d| d <= 2.0 * cfg.epsilon);
            let multiplicative_ok =
                mult.map(|f| exact.scores.iter().zip(approx.iter()).all(|(e, a)| f * e <= a + 1e-12));
            Ok(vec![
                trial.to_string(),
                seed.to_string(),
                p.to_string(),
                sketch.rank().to_string(),
                fmt(max_error),
                upper_violations.to_string(),
                additive_ok.to_string(),
                multiplicative_ok.map_or_else(|| "na".to_string(), |b| b.to_string()),
            ])
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let successes = rows.iter().filter(|r| r[6] == "true").count();
    let violating = rows.iter().filter(|r| r[5] != "0").count();
    let summary = vec![
        format!("p_formula = {formula_p}"),
        format!("p_used = {p}"),
        format!("additive_success_fraction = {}", fmt(successes as f64 / cfg.trials as f64)),
        format!("target_fraction = {}", fmt(1.0 - cfg.rho)),
        format!("trials_with_upper_bound_violation = {violating}"),
        format!("multiplicative_factor = {}", mult.map_or_else(|| "vacuous (sigma_n <= n lambda epsilon)".into(), fmt)),
    ];
    Ok(ExperimentOutput {
        kind: ExperimentKind::ScoreApproximation,
        summary,
        columns: cols(&[
            "trial",
            "seed",
            "p",
            "rank",
            "max_additive_error",
            "upper_violations",
            "additive_ok",
            "multiplicative_ok",
        ]),
        rows,
    })
}

pub fn run_experiment(
    kind: ExperimentKind,
    ws: &Workspace,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutput, CliError> {
    match kind {
        ExperimentKind::LeverageProfile => run_leverage_profile(ws, cfg),
        ExperimentKind::RiskCurve => run_risk_curve(ws, cfg),
        ExperimentKind::SummaryTable => run_summary_table(ws, cfg),
        ExperimentKind::Concentration => run_concentration(ws, cfg),
        ExperimentKind::ScoreApproximation => run_score_approximation(ws, cfg),
    }
}

/// Flag overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub trials: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        if let Some(e) = self.experiment {
            cfg.experiments = vec![e];
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        cfg.validate()
    }
}

/// Runs every requested experiment, writing one file each. Failures are
/// reported per experiment; the first error decides the exit code.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let ws = Workspace::prepare(cfg)?;
    let mut written = Vec::new();
    let mut first_error = None;
    for &kind in &cfg.experiments {
        match run_experiment(kind, &ws, cfg) {
            Ok(output) => {
                let path = cfg.output_dir.join(kind.file_name());
                std::fs::write(&path, output.render(cfg))?;
                written.push(path);
            }
            Err(e) => {
                eprintln!("experiment {} failed: {e}", kind.as_str());
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(written),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
lambda = 1e-4
experiments = ["leverage_profile"]

[dataset]
kind = "synthetic"
n = 40
density = "uniform_grid"
bernoulli_order = 1
noise_sigma = 0.01
seed = 1
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.epsilon, 0.25);
        assert_eq!(cfg.trials, 10);
        assert_eq!(cfg.samplers.len(), 4);
        assert_eq!(cfg.dataset.name(), "synth");
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn config_errors_map_to_exit_code_one() {
        for broken in [
            MINIMAL.replace("lambda = 1e-4", "lambda = -1.0"),
            MINIMAL.replace("leverage_profile", "nonsense"),
            MINIMAL.replace("experiments = [\"leverage_profile\"]", "experiments = [\"risk_curve\"]"),
            MINIMAL.replace("kind = \"synthetic\"", "kind = \"csv\""),
            format!("{MINIMAL}\nunknown_key = 3\n"),
        ] {
            let err = ExperimentConfig::from_toml(&broken).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{broken}");
        }
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::Runtime(crate::Error::NotPositiveDefinite).exit_code(), 2);
        assert_eq!(CliError::Io(std::io::Error::other("x")).exit_code(), 3);
        assert_eq!(CliError::Runtime(crate::Error::Io(std::io::Error::other("x"))).exit_code(), 3);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

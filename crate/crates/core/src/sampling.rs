//! Column-sampling distributions and sample-size formulas.
//!
//! Draws are with replacement, by inverse-CDF lookup (binary search over the
//! cumulative probabilities) on a [`ChaCha8Rng`](rand_chacha::ChaCha8Rng).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{rng_from_seed, SeededRng};
use crate::{Error, Result};

/// Tolerance on `|Σ p_i − 1|` for caller-supplied probabilities.
pub const SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    Uniform,
    /// `p_i = K_ii / Tr(K)`.
    Diagonal,
    ExactLeverage,
    ApproxLeverage,
    Custom,
}

impl SamplingKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplingKind::Uniform => "uniform",
            SamplingKind::Diagonal => "diagonal",
            SamplingKind::ExactLeverage => "exact_leverage",
            SamplingKind::ApproxLeverage => "approx_leverage",
            SamplingKind::Custom => "custom",
        }
    }
}

impl fmt::Display for SamplingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SamplingKind::Uniform),
            "diagonal" => Ok(SamplingKind::Diagonal),
            "exact_leverage" => Ok(SamplingKind::ExactLeverage),
            "approx_leverage" => Ok(SamplingKind::ApproxLeverage),
            "custom" => Ok(SamplingKind::Custom),
            other => Err(Error::invalid(format!("unknown sampler '{other}'"))),
        }
    }
}

/// A validated probability vector with its cumulative sums.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl Distribution {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        Ok(Self::build(vec![1.0 / n as f64; n]))
    }

    /// Normalizes nonnegative weights to sum to one.
    pub fn proportional(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidDistribution(format!("weight {w} is negative or non-finite")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("all weights are zero".into()));
        }
        Ok(Self::build(weights.iter().map(|w| w / total).collect()))
    }

    /// Accepts probabilities that already sum to one within [`SUM_TOL`].
    pub fn from_probabilities(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("probability {p} is negative or non-finite")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        Ok(Self::build(probs))
    }

    fn build(probs: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        // Pin the top so a uniform draw in [0, 1) always lands on the support.
        if let Some(last) = probs.iter().rposition(|&p| p > 0.0) {
            for c in &mut cdf[last..] {
                *c = f64::INFINITY;
            }
        }
        Distribution { probs, cdf }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    fn draw(&self, rng: &mut SeededRng) -> usize {
        let u: f64 = rng.random();
        // First index whose cumulative probability exceeds u; zero-probability
        // entries share their predecessor's cumulative value and are skipped.
        self.cdf.partition_point(|&c| c <= u)
    }
}

/// Builds the distribution of the given kind from its source vector: ignored
/// (only its length is used) for `Uniform`, the kernel diagonal for
/// `Diagonal`, and scores or arbitrary weights for the remaining kinds.
pub fn make_distribution(kind: SamplingKind, source: &[f64]) -> Result<Distribution> {
    match kind {
        SamplingKind::Uniform => Distribution::uniform(source.len()),
        _ => Distribution::proportional(source),
    }
}

pub fn sample_with_rng(dist: &Distribution, p: usize, rng: &mut SeededRng) -> Result<Vec<usize>> {
    if p == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    Ok((0..p).map(|_| dist.draw(rng)).collect())
}

/// `p` independent draws from `dist`; a pure function of `(dist, p, seed)`.
pub fn sample_with_replacement(dist: &Distribution, p: usize, seed: u64) -> Result<Vec<usize>> {
    sample_with_rng(dist, p, &mut rng_from_seed(seed))
}

/// Largest `β ∈ (0, 1]` with `p_i ≥ β·s_i/Σs` for all `i`; `0` signals that
/// some index with a positive score has zero probability.
pub fn beta_factor(probabilities: &[f64], scores: &[f64]) -> Result<f64> {
    if probabilities.len() != scores.len() {
        return Err(Error::DimensionMismatch { expected: probabilities.len(), found: scores.len() });
    }
    if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::invalid("scores must be finite and nonnegative"));
    }
    if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution("probabilities must be finite and nonnegative".into()));
    }
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("scores must have a positive sum"));
    }
    let beta = probabilities
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s > 0.0)
        .map(|(&p, &s)| p * total / s)
        .fold(f64::INFINITY, f64::min);
    // Round-off from normalization would otherwise report 1 - 1e-16.
    Ok(if beta > 1.0 - 1e-12 { 1.0 } else { beta })
}

/// Smallest integer `p ≥ 8(d_eff/β + 1/6)·ln(n/ρ)`.
pub fn sufficient_p(d_eff: f64, beta: f64, n: usize, rho: f64) -> Result<usize> {
    if !(d_eff.is_finite() && d_eff > 0.0) {
        return Err(Error::invalid(format!("d_eff must be positive, got {d_eff}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(format!("beta must be in (0, 1], got {beta}")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("rho must be in (0, 1), got {rho}")));
    }
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let rhs = 8.0 * (d_eff / beta + 1.0 / 6.0) * (n as f64 / rho).ln();
    Ok(rhs.ceil().max(0.0) as usize)
}

/// Everything needed to replay one column sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub kind: SamplingKind,
    pub distribution: Distribution,
    pub sampled: Vec<usize>,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn draw(kind: SamplingKind, distribution: Distribution, p: usize, seed: u64) -> Result<Self> {
        let sampled = sample_with_replacement(&distribution, p, seed)?;
        Ok(SamplingPlan { kind, distribution, sampled, seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distribution_examples() {
        let rbf_diag = [1.0; 5];
        let d = make_distribution(SamplingKind::Diagonal, &rbf_diag).unwrap();
        assert!(d.probabilities().iter().all(|&p| (p - 0.2).abs() < 1e-15));
        let d = make_distribution(SamplingKind::Diagonal, &[3.0, 1.0]).unwrap();
        assert_eq!(d.probabilities(), &[0.75, 0.25]);
        let d = make_distribution(SamplingKind::ExactLeverage, &[0.5; 4]).unwrap();
        assert_eq!(d.probabilities(), &[0.25; 4]);
        assert!(make_distribution(SamplingKind::Diagonal, &[0.0, 0.0]).is_err());
        assert!(Distribution::from_probabilities(vec![0.5, 0.4]).is_err());
        assert!(Distribution::from_probabilities(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn point_mass_and_determinism() {
        let d = Distribution::from_probabilities(vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(sample_with_replacement(&d, 7, 1).unwrap(), vec![2; 7]);
        let u = Distribution::uniform(10).unwrap();
        assert_eq!(sample_with_replacement(&u, 50, 9).unwrap(), sample_with_replacement(&u, 50, 9).unwrap());
        assert_ne!(sample_with_replacement(&u, 50, 9).unwrap(), sample_with_replacement(&u, 50, 10).unwrap());
        assert!(sample_with_replacement(&u, 0, 1).is_err());
    }

    #[test]
    fn fair_coin_frequencies() {
        let d = Distribution::uniform(2).unwrap();
        let draws = sample_with_replacement(&d, 100_000, 2024).unwrap();
        let ones = draws.iter().filter(|&&i| i == 1).count() as f64 / 1e5;
        assert!((ones - 0.5).abs() < 0.01, "{ones}");
    }

    #[test]
    fn beta_examples() {
        assert!((beta_factor(&[0.5, 0.25, 0.25], &[2.0, 1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        // Uniform vs scores: β = Σs / (n·max s).
        let scores = [0.9, 0.1, 0.2, 0.3];
        let beta = beta_factor(&[0.25; 4], &scores).unwrap();
        assert!((beta - 1.5 / (4.0 * 0.9)).abs() < 1e-15);
        assert_eq!(beta_factor(&[1.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        // Zero-score entries do not constrain β.
        assert_eq!(beta_factor(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert!(beta_factor(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn sufficient_p_examples() {
        // 8·(24 + 1/6)·ln(5000) = 1646.66…
        assert_eq!(sufficient_p(24.0, 1.0, 500, 0.1).unwrap(), 1647);
        assert!(sufficient_p(24.0, 0.5, 500, 0.1).unwrap() > 1647);
        assert_eq!(sufficient_p(1.0, 1.0, 1, 1.0 - 1e-12).unwrap(), 1);
        assert!(sufficient_p(0.0, 1.0, 10, 0.1).is_err());
        assert!(sufficient_p(1.0, 1.5, 10, 0.1).is_err());
        assert!(sufficient_p(1.0, 1.0, 10, 1.0).is_err());
    }

    #[test]
    fn sampler_names_round_trip() {
        for kind in [
            SamplingKind::Uniform,
            SamplingKind::Diagonal,
            SamplingKind::ExactLeverage,
            SamplingKind::ApproxLeverage,
            SamplingKind::Custom,
        ] {
            assert_eq!(kind.as_str().parse::<SamplingKind>().unwrap(), kind);
        }
    }

    proptest! {
        #[test]
        fn beta_is_one_iff_proportional(
            scores in prop::collection::vec(0.01f64..10.0, 2..20),
            bump in 0usize..20,
        ) {
            let d = Distribution::proportional(&scores).unwrap();
            prop_assert!((beta_factor(d.probabilities(), &scores).unwrap() - 1.0).abs() < 1e-12);
            let mut w = scores.clone();
            let i = bump % w.len();
            w[i] *= 2.0;
            let skewed = Distribution::proportional(&w).unwrap();
            prop_assert!(beta_factor(skewed.probabilities(), &scores).unwrap() < 1.0 - 1e-9);
        }

        #[test]
        fn sufficient_p_is_monotone(d in 0.5f64..50.0, beta in 0.05f64..1.0, n in 2usize..5000, rho in 0.01f64..0.99) {
            let base = sufficient_p(d, beta, n, rho).unwrap();
            prop_assert!(sufficient_p(d * 1.5, beta, n, rho).unwrap() >= base);
            prop_assert!(sufficient_p(d, beta, n * 2, rho).unwrap() >= base);
            prop_assert!(sufficient_p(d, beta * 0.5, n, rho).unwrap() >= base);
            prop_assert!(sufficient_p(d, beta, n, rho * 0.5).unwrap() >= base);
        }
    }

    #[test]
    fn frequencies_converge_within_three_sigma() {
        let weights = [
            vec![1.0, 1.0],
            vec![0.1, 0.0, 3.0, 0.5],
            vec![5.0, 4.0, 3.0, 2.0, 1.0, 0.5, 0.25],
            (1..=12).map(|i| (i * i) as f64).collect::<Vec<_>>(),
        ];
        let p = 100_000;
        for (case, w) in weights.iter().enumerate() {
            let d = Distribution::proportional(w).unwrap();
            let draws = sample_with_replacement(&d, p, 77 + case as u64).unwrap();
            let mut counts = vec![0usize; w.len()];
            for i in draws {
                counts[i] += 1;
            }
            let probs = d.probabilities();
            let spread = probs.iter().map(|q| q * (1.0 - q)).fold(0.0, f64::max);
            let gate = 3.0 * (spread / p as f64).sqrt();
            for (c, q) in counts.iter().zip(probs) {
                let freq = *c as f64 / p as f64;
                assert!((freq - q).abs() <= gate, "case {case}: {freq} vs {q}");
                if *q == 0.0 {
                    assert_eq!(*c, 0);
                }
            }
        }
    }
}

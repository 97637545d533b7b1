//! Kernel ridge regression with Nyström sketches sampled by λ-ridge leverage
//! scores.
//!
//! The crate is organised bottom-up:
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`kernels`] | kernel evaluation, Gram matrices, lazy column access |
//! | [`sketch`] | Nyström factor `B` with `BBᵀ = CW†Cᵀ`, weighted sketching matrices |
//! | [`leverage`] | exact and fast approximate ridge leverage scores, `d_eff`, `d_mof` |
//! | [`sampling`] | column-sampling distributions, `β` factor, sufficient sample size |
//! | [`regression`] | KRR solves and the bias/variance risk decomposition |
//! | [`bounds`] | deviation matrices, Bernstein tail bound, bias inflation checks |
//! | [`datagen`] | synthetic periodic-kernel regression data and CSV I/O |
//! | [`cli`] | batch experiment harness behind the `nystrom-ridge` binary |
//!
//! All arithmetic is `f64`. Randomised routines take an explicit `u64` seed and
//! are reproducible bit for bit; see [`rng`] for the seed-splitting rule.
//!
//! ```
//! use nystrom_ridge::datagen::grid_points;
//! use nystrom_ridge::kernels::{kernel_matrix, KernelSpec};
//! use nystrom_ridge::leverage::{approx_ridge_leverage, exact_ridge_leverage};
//! use nystrom_ridge::sampling::Distribution;
//!
//! let points = grid_points(64).unwrap();
//! let spec = KernelSpec::Bernoulli { order: 2 };
//! let k = kernel_matrix(&points, spec).unwrap();
//! let exact = exact_ridge_leverage(&k, 1e-4).unwrap();
//!
//! let dist = Distribution::uniform(64).unwrap();
//! let approx = approx_ridge_leverage(&(&points, spec), 1e-4, 32, &dist, 7).unwrap();
//! for (a, e) in approx.scores.iter().zip(exact.scores.iter()) {
//!     assert!(*a <= *e + 1e-8);
//! }
//! ```

pub mod bounds;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod kernels;
pub mod leverage;
pub mod linalg;
pub mod regression;
pub mod rng;
pub mod sampling;
pub mod sketch;

pub use error::{Error, Result};

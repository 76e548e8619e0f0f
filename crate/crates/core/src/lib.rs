//! # gcsd
//!
//! The generalized Cauchy-Schwarz divergence (GCSD): a single closed-form
//! dissimilarity over `m ≥ 2` distributions, estimated from samples with
//! Gaussian kernel density sums.
//!
//! ```text
//! D(P_1..P_m) = -log ∫ Π_t p_t(x) dx  +  (1/m) Σ_t log ∫ p_t(x)^m dx
//! ```
//!
//! For `m = 2` this is the classical Cauchy-Schwarz divergence. It is
//! non-negative, symmetric in its arguments, and invariant to rescaling any
//! of the densities.
//!
//! ## Modules
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`kernel`] | Gaussian kernel, Gram matrices, bandwidth rules, [`SampleSet`] |
//! | [`estimators`] | [`gcsd`](estimators::gcsd), pairwise CSD/MMD/KLD baselines, quadrature oracles |
//! | [`cluster`] | GCSD over a soft assignment matrix, clustering loss, optimizer, ACC/NMI |
//! | [`synth`] | The ten-distribution synthetic benchmark and its multivariate extension |
//! | [`bench`] | Power, dimension, and runtime harnesses |
//! | [`cli`] | Command implementations and the columnar file formats |
//!
//! ## Quick start
//!
//! ```rust
//! use gcsd::estimators::{gcsd, MultiSample};
//! use gcsd::kernel::{KernelConfig, SampleSet};
//!
//! let a = SampleSet::from_rows(&[vec![0.0], vec![0.5], vec![1.0]]).unwrap();
//! let b = SampleSet::from_rows(&[vec![4.0], vec![4.5], vec![5.0]]).unwrap();
//! let c = SampleSet::from_rows(&[vec![8.0], vec![8.5], vec![9.0]]).unwrap();
//! let ms = MultiSample::new(vec![a, b, c]).unwrap();
//! let cfg = KernelConfig::new(1.0, 1).unwrap();
//! assert!(gcsd(&ms, &cfg).unwrap() > 1.0);
//! ```

pub mod bench;
pub mod cli;
pub mod cluster;
pub mod error;
pub mod estimators;
pub mod kernel;
pub mod numeric;
pub mod synth;

pub use error::{Error, Result};
pub use estimators::{gcsd, MultiSample};
pub use kernel::{GramMatrix, KernelConfig, SampleSet};

//! Bayesian inference for kernel mean embeddings.
//!
//! Probability measures are represented by their mean embeddings
//! `mu_P = E[k(., X)]` in the RKHS of a squared-exponential kernel. This
//! crate places a Gaussian process prior over the embedding whose covariance
//! is the self-convolution of the kernel (so draws stay inside the RKHS),
//! links it to data through the empirical embedding with Gaussian noise, and
//! exposes:
//!
//! * closed-form posteriors over the embedding and witness functions
//!   ([`embedding`]),
//! * a marginal pseudolikelihood of the observations given the kernel
//!   hyperparameters, in both a naive and a fast Kronecker-structured form
//!   ([`pseudolik`]),
//! * hyperparameter learning by derivative-free optimization or
//!   random-walk Metropolis sampling ([`learn`]),
//! * MMD two-sample and HSIC independence tests with permutation
//!   calibration, plus posterior witness bands ([`testing`]),
//! * seeded generators for the synthetic benchmark datasets ([`synthdata`]).
//!
//! Observations are rows of an [`nalgebra::DMatrix<f64>`]; all operations
//! are deterministic given their seeds.
//!
//! ```
//! use bke::kernels::{SeKernelParams, median_heuristic, MedianMode};
//! use bke::testing::{permutation_test, TestSpec};
//! use nalgebra::DMatrix;
//!
//! let x = DMatrix::from_row_slice(4, 1, &[0.0, 0.1, -0.2, 0.3]);
//! let y = DMatrix::from_row_slice(4, 1, &[5.0, 5.1, 4.8, 5.3]);
//! let theta = median_heuristic(&x, MedianMode::NoHalf).unwrap();
//! let params = SeKernelParams::lebesgue(theta, 1.0).unwrap();
//! let spec = TestSpec::TwoSample { x: &x, y: &y, params };
//! let result = permutation_test(&spec, 100, 0.05, 7).unwrap();
//! assert!(result.reject);
//! ```

pub mod embedding;
pub mod error;
pub mod kernels;
pub mod learn;
mod linalg;
pub mod pseudolik;
pub mod synthdata;
pub mod testing;

pub use error::{Error, Result};

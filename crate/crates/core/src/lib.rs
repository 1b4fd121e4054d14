//! Electromagnetic-compliant Gaussian-process channel estimation.
//!
//! The crate provides a closed-form spatio-temporal EM kernel, GP regression
//! over antenna samples with it, maximum-likelihood learning of its
//! directional hyperparameters, channel simulators, baseline estimators, and
//! a Monte-Carlo harness (also exposed through the `eitgpr` binary).

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod error;
pub mod gpr;
pub mod harness;
pub mod kernel;
pub mod learning;
pub mod special;

pub use error::{Error, Result};
pub use gpr::{
    assemble_kernel_matrix, cross_kernel_matrix, eit_gpr_estimate, gpr_posterior, kernel_entropy, CMatrix, CVector,
    KernelMatrix, MixedKernel, Posterior, SampleSet, SpacetimeSample,
};
pub use kernel::{em_kernel, em_kernel_scalar, ComplexVec3, KernelParams, Matrix3C, Vec3};
pub use learning::{estimate_azimuth, learn_kernel, log_likelihood, LearnOptions, LearnReport};

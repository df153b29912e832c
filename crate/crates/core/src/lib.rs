//! Training-data reconstruction from released Bayesian posteriors and trained
//! model parameters.
//!
//! An attacker fits a weighted pseudo-dataset `P_{w,Z} = sum_m w_m delta_{z_m}`
//! so that the posterior it induces matches released posterior draws (Fisher
//! or sliced Fisher score matching), or so that released parameters are a
//! stationary point of the training loss. The reachable statistics are exactly
//! those seen by the model-induced MMD kernel, see [`divergence::model_kernel`].
//!
//! Modules:
//! - [`measures`]: weighted empirical measures and their sufficient statistics
//! - [`models`]: likelihood/loss contracts and the bundled analytic models
//! - [`divergence`]: FD, SFD and gradient-norm objectives, MMD kernels
//! - [`samplers`]: posterior draws (exact, random-walk Metropolis, CSV)
//! - [`attack`]: objective gradients, Adam and the reconstruction loop
//! - [`cli`]: configuration, output files and the verification suite

pub mod attack;
pub mod cli;
pub mod divergence;
pub mod error;
pub mod measures;
pub mod models;
pub mod numeric;
pub mod samplers;
mod table;
pub mod verify;

pub use error::{Error, Result};
pub use measures::{DataPoint, Layout, ReconStats, WeightedEmpiricalMeasure};

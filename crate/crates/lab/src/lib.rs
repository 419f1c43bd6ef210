//! Numerical laboratory for contrastive-learning loss landscapes and the
//! training dynamics induced by neural-network parameterizations.
//!
//! The crate covers five areas:
//! - [`dataset`]: clustered synthetic data with orthogonal centers and a
//!   manifold-orthogonal perturbation model;
//! - [`losses`]: the NT-Xent loss, its generalized `Psi`/`eta` form, and the
//!   latent VICReg/BYOL objectives;
//! - [`variations`]: first/second variations and stationarity certificates for
//!   discrete latent configurations;
//! - [`network`]: a one-hidden-layer embedding with a fixed averaging head,
//!   its exact neural kernel, the infinite-width arccos kernel, and a generic
//!   MLP path;
//! - [`dynamics`] and [`experiments`]: vanilla vs. kernel-mediated gradient
//!   descent, trajectory diagnostics, and the sweep/comparison experiments.

pub mod dataset;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod losses;
pub mod network;
pub mod variations;
pub mod vecmath;

pub use error::{LabError, Result};

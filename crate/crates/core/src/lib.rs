//! Empirical fixation densities for saliency benchmarking.
//!
//! The crate estimates per-image fixation densities as a mixture of an
//! (optionally adaptive-bandwidth) Gaussian KDE, a center-bias prior, a uniform
//! floor and a precomputed saliency map. Kernel and mixture parameters are
//! fitted by maximizing leave-one-subject-out log-likelihood, which also yields
//! the interobserver-consistency ceiling for an image.
//!
//! Module map:
//!
//! - [`data`] and [`grid`]: dataset ingestion and the `FDG1` density-grid format.
//! - [`kde`]: fixed and Abramson adaptive Gaussian KDE with boundary renormalization.
//! - [`mixture`]: the four-component mixture, center bias and saliency components.
//! - [`crossval`]: LOSO / LOFO / pooled fold plans and held-out evaluation.
//! - [`optimize`]: exact-gradient objective and multi-restart constrained optimization.
//! - [`metrics`]: information gain, AUC, improvement quantiles, bootstrap CIs.
//! - [`export`]: locally crossvalidated and pooled density maps.
//! - [`render`]: saturating heatmap plus log-spaced contours.
//! - [`synth`]: synthetic datasets with known ground-truth densities.

pub mod crossval;
pub mod data;
pub mod error;
pub mod export;
pub mod grid;
pub mod kde;
mod likelihood;
pub mod metrics;
pub mod mixture;
pub mod optimize;
pub mod params;
pub mod render;
pub mod synth;
mod util;

pub use data::{DatasetBundle, Fixation, FixationTable, Geometry, ImageRecord, Point};
pub use error::{Error, Result};
pub use grid::{DensityGrid, GridSpace};
pub use kde::{AdaptiveKernelParams, BandwidthVector, FixedKernelParams, KernelParams};
pub use mixture::{Component, ComponentMask, MixtureParams};
pub use util::write_atomic;

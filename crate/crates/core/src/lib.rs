//! Change detection on co-registered multispectral image pairs.
//!
//! The crate trains two patch classifiers from scratch (an early-fusion
//! network that stacks both dates along the channel axis, and a Siamese
//! network whose two convolutional branches share one set of weights),
//! turns their per-patch change probabilities into full-image maps by
//! Gaussian-weighted voting, and compares them against classical
//! difference-image detectors.
//!
//! Modules, bottom-up:
//!
//! - [`dataset`]: band rasters, PGM I/O, region import, resampling to the
//!   10 m grid, channel selection, normalization and a synthetic generator.
//! - [`patching`]: patch centers, patch extraction, dihedral augmentation,
//!   class weights and the shuffled training stream.
//! - [`nn`]: convolution / dense / ReLU / softmax kernels, weighted
//!   cross-entropy, optimizers and a finite-difference gradient checker.
//! - [`models`]: the two architectures, training and the model file format.
//! - [`inference`]: strided voting into probability maps and thresholding.
//! - [`baselines`]: image difference, log-ratio, GLRT and threshold selection.
//! - [`metrics`]: confusion counts and per-class accuracy reports.

pub mod baselines;
pub mod dataset;
mod error;
pub mod inference;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod patching;

pub use error::{Error, Result};

/// Side length of the square patches both networks classify.
pub const PATCH_SIZE: usize = 15;

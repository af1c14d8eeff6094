//! Synthetic x-ray scattering image generation and a shallow classification
//! benchmark harness.
//!
//! The crate is organized as a pipeline:
//!
//! * [`geometry`] — detector configuration, per-pixel reciprocal-space maps
//!   (q, phi) and shadow/gap mask rasterization.
//! * [`simkit`] — scattering-pattern kernels (rings, halos, diffuse terms,
//!   sphere form factors, cubic lattices, point-cloud scattering), scene
//!   composition by summation, detector-effect corruption, and rule-based
//!   attribute tagging.
//! * [`dataset`] — recipe sampling, run-structured dataset generation and
//!   the XSIM image / JSON-Lines manifest formats.
//! * [`features`] — patch extraction, k-means codebooks, spatial pyramid
//!   pooling and multi-scale multi-crop image features.
//! * [`autoencoder`] — a small convolutional autoencoder over 32x32 patches
//!   with a softmax bottleneck used as a soft cluster assignment.
//! * [`learneval`] — one-vs-all linear SVMs, average precision / PR curves,
//!   leave-one-run-out cross-validation and report assembly.
//!
//! All randomness flows from explicit 64-bit seeds through the counter-based
//! substreams in [`rng`]; re-running any stage with the same inputs produces
//! byte-identical artifacts.

pub mod autoencoder;
pub mod dataset;
pub mod error;
pub mod features;
pub(crate) mod gemm;
pub mod geometry;
pub mod learneval;
pub mod rng;
pub mod simkit;

pub use error::{Error, Result};

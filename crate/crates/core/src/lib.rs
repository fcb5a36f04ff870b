//! Abnormal-event detection and recounting over semantic region features.
//!
//! The crate learns environment-specific novelty detectors (nearest neighbour
//! over product-quantized codes, one-class SVM and Gaussian KDE over PCA
//! projections), routes regions to a spatial grid of detectors, explains
//! detections by scoring how unusual each predicted visual concept is, and
//! implements the detection and recounting evaluation protocols.
//!
//! Everything here is pure computation over in-memory data and builds with
//! `no_std` + `alloc`. File formats, model persistence and the command line
//! live in the `recount` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod grid;
pub mod math;
pub mod matrix;
pub mod novelty;
pub mod pack;
pub mod recounting;
pub mod reduction;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;

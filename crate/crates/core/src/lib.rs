//! Calibration-free multi-camera human localization with Mean-of-Means.
//!
//! The crate bundles the classical PnP + triangulation baseline, the mean
//! estimator sampling that feeds the network, the encoder/decoder network
//! itself, a synthetic multi-camera scene generator and the evaluation
//! metrics used to compare the two.

pub mod baseline;
pub mod classical;
pub mod evalkit;
pub mod geometry;
pub mod linalg;
pub mod mom_net;
pub mod rng;
pub mod sampling;
pub mod scene;

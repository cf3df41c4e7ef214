//! Characteristic interventional sum-product networks.
//!
//! A probabilistic circuit whose leaves are characteristic functions of
//! univariate discrete or continuous distributions. A small network predicts
//! the circuit parameters from the (mutilated) causal graph, training
//! minimises the characteristic function distance to the empirical CF of
//! interventional data, and densities are recovered by recursive inversion.

pub mod autodiff;
pub mod circuit;
pub mod error;
pub mod evalsuite;
pub mod inversion;
pub mod io;
pub mod paramnet;
pub mod scm;
pub mod spectral;
pub mod trainer;

pub use error::{Error, Result};

/// Version of the checkpoint and run-config documents.
pub const SCHEMA_VERSION: u32 = 1;

//! Multi-user widely-spaced-array (MU-WSA) hybrid beamforming.
//!
//! The base station splits its `N_t` antennas into `K` compact subarrays that
//! are pulled apart by a spacing `d_s`. Each subarray sees a user in its far
//! field, while the array as a whole sees the spherical wavefront across
//! subarrays (the cross near-and-far-field regime). This crate covers:
//!
//! - [`geometry`]: array and user geometry, apertures, Rayleigh distance.
//! - [`channel`]: steering vectors, the per-subarray channel model and
//!   random scenario generation.
//! - [`archsearch`]: LoS capacity, the monotonicity diagnostics and the
//!   exhaustive `(K, d_s)` search.
//! - [`beamforming`]: block diagonalization, water-filling, the alternating
//!   optimization (sub-connected) and steering-vector reconstruction
//!   (fully-connected) analog stages, plus the benchmarks.
//! - [`evaluation`]: spectral efficiency, beam patterns and the Monte-Carlo
//!   harness.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archsearch;
pub mod beamforming;
pub mod channel;
pub mod config;
pub mod dump;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod linalg;

pub use config::SystemConfig;
pub use error::{Error, Result};
pub use linalg::{CMat, CVec};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

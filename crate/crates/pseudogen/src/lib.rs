//! Transfer-operator and pseudo-generator toolkit for Langevin and
//! Smoluchowski dynamics.
//!
//! The crate simulates phase-space Langevin dynamics and its overdamped
//! (Smoluchowski) limit, discretizes the associated spatial transfer
//! operators on Ulam grids, reconstructs them from the second
//! pseudo-generator, projects the dynamics onto scalar reaction
//! coordinates, and ships a CLI (`pseudogen`) that reproduces the
//! metastability, lag-time, and extrapolation experiments end to end.
//!
//! All Monte Carlo work is deterministic: every trajectory, cell, and
//! chain owns a counter-addressed RNG stream, so results are identical at
//! any thread count (the `parallel` feature toggles rayon; a sequential
//! fallback is always available).

pub mod error;
pub mod parallel;
pub mod rng;

pub mod linalg;
pub mod quadrature;
pub mod stats;

pub mod potentials;
pub mod sde;

pub use error::{Error, Result};

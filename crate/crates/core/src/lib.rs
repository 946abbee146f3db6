//! Space-homogeneous Boltzmann solver for a polyatomic gas with continuous
//! internal energy.
//!
//! Collisions come in two channels: *frozen* collisions that conserve
//! momentum and kinetic energy and leave each particle's internal energy
//! untouched, and *pure polyatomic* collisions that conserve momentum and
//! total (kinetic + internal) energy. The evolution equation mixes the two
//! with a convex factor `omega`.
//!
//! Besides the DSMC solver ([`dsmc`]) the crate carries the machinery for the
//! a priori moment bounds of the model: Povzner averaging constants
//! ([`povzner`]), the explicit constant ledger and time envelopes
//! ([`bounds`]), and Monte Carlo weak-form quadrature ([`quadrature`]) used to
//! test the operator-level inequalities.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod dsmc;
pub mod error;
pub mod experiments;
pub mod externals;
pub mod gauss;
pub mod kernels;
pub mod kinematics;
pub mod povzner;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};

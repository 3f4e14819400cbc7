//! Generalized urn population processes and their mean-limit dynamics.
//!
//! An urn model is a Markov chain `z(n)` on the nonnegative integer cone whose
//! jumps are bounded and whose transition probabilities converge, at rate
//! `a/|z|`, to frequency-dependent limits `p_w(x)`. This crate provides:
//!
//! * [`urn`]: the chain itself, the τ-clock, interpolated paths and
//!   exact-kernel diagnostics;
//! * [`mean_field`]: the drift `g` and growth `f` of the mean-limit ODE, a
//!   simplex-preserving RK4 flow, windowed growth averages and the
//!   pseudotrajectory error of a sampled path;
//! * [`models`]: replicator and selection-mutation builders;
//! * [`analysis`]: equilibria, permanence and growth conditions, periodic
//!   orbit detection and orbit averages;
//! * [`ensemble`]: seeded Monte Carlo replicates with order-independent
//!   aggregation.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod mean_field;
pub mod models;
pub mod par;
pub mod urn;

pub use error::{Result, UrnError};

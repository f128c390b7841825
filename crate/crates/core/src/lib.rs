//! Deterministic simulation and analysis of communication-efficient
//! distributed momentum SGD.
//!
//! Two distributed algorithms are simulated on a single machine:
//!
//! * parallel restarted momentum SGD, where every worker runs local Polyak or
//!   Nesterov momentum steps and all workers reset their solution and momentum
//!   buffer to the node averages every `I` iterations;
//! * decentralized momentum SGD, where every iteration ends with a
//!   neighborhood averaging step through a symmetric doubly stochastic mixing
//!   matrix.
//!
//! The objectives are synthetic and come with certified smoothness,
//! gradient-noise and heterogeneity constants, so the step-size gates,
//! convergence bounds and communication counts in [`theory`] can be evaluated
//! and compared against simulated runs.
//!
//! Every run is bit-reproducible: randomness comes from counter-based
//! per-worker streams ([`numerics::RngStream`]) and every cross-worker
//! reduction is accumulated in ascending worker order.

pub mod engine;
pub mod error;
pub mod momentum;
pub mod numerics;
pub mod problems;
pub mod theory;
pub mod topology;

pub use error::{Error, Result};

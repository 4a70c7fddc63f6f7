//! Classical variational simulation of Max-Cut QAOA circuits.
//!
//! The many-qubit state is represented by a complex-parameter Restricted
//! Boltzmann Machine. Diagonal gates (Z rotations, ZZ rotations) act exactly
//! as parameter replacements; mixing gates (X rotations) are applied
//! approximately by stochastic-reconfiguration fidelity optimization over
//! Markov-chain samples. Dense statevector and analytic depth-1 oracles keep
//! the whole pipeline honest at small qubit counts.
//!
//! Module map:
//! - [`rbm`] — the RBM wavefunction, log-derivatives, exact gate maps,
//!   checkpoint IO.
//! - [`graph`] — weighted graphs, random regular generation, cut values,
//!   edge-list files.
//! - [`sampler`] — Metropolis single-spin-flip MCMC over any log-amplitude
//!   oracle.
//! - [`estimators`] — sampled fidelity, gradient, and S-matrix (quantum
//!   geometric tensor) estimators, plus exact-enumeration variants.
//! - [`sr`] — stochastic reconfiguration updates, target-state optimization,
//!   ground-state energy minimization.
//! - [`exact`] — dense statevector QAOA, dense fidelity, the analytic p=1
//!   cost formula, brute-force optima.
//! - [`driver`] — the full circuit schedule: exact cost layers, per-qubit
//!   approximate mixers, model compression, cost estimation, angle
//!   optimization and landscape sweeps.

extern crate blas_src;

pub mod cplx;
pub mod driver;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod graph;
pub mod rbm;
pub mod sampler;
pub mod seed;
pub mod sr;

pub use error::{Error, Result};

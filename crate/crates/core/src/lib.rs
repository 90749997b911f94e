//! Simulation of the posterior (filtered) dynamics of a free quantum particle
//! whose position is monitored continuously by a weak, imperfect measurement.
//!
//! The filtered state stays Gaussian, so the dynamics reduce to a closed system
//! of stochastic ODEs: Hamilton–Langevin equations for the posterior means
//! (q̂, p̂) driven by the measurement innovation, and a deterministic complex
//! Riccati equation for the packet width ω. This crate propagates that closed
//! form ([`filter`], [`riccati`]), integrates the full nonlinear stochastic
//! wave equation on a 1-D lattice as an independent oracle ([`grid`]), and
//! runs Monte Carlo ensembles over noise realizations ([`ensemble`]).
//!
//! The headline physics is the watchdog (quantum Zeno) effect: under
//! continuous observation the position dispersion does not spread like a free
//! packet but relaxes to the finite limit `(ħ/2λm)^{1/2}`, where λ is the
//! measurement accuracy coefficient.

// Validation guards are written `!(x > 0.0)` so that NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod filter;
pub mod grid;
pub mod noise;
pub mod params;
pub mod posterior;
pub mod riccati;

pub use error::{Result, SimError};
pub use num_complex::Complex64;
pub use params::PhysParams;
pub use posterior::{ComplexWidth, GaussianPosterior, WaveCoefficient};

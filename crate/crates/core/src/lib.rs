//! Simulation and likelihood inference for neutron electric-dipole-moment
//! (nEDM) measurements.
//!
//! The crate is organised bottom-up:
//!
//! * [`quantities`]: unit conventions and constants (dipole × field × time → phase).
//! * [`spin_dynamics`]: exact spin-1/2 rotations, Larmor frequencies, Ramsey bookkeeping.
//! * [`weak_measurement`]: the spin-flip probability of a neutron whose dipole
//!   is spread over a Gaussian of eigenvalues, with an independent quadrature route.
//! * [`ensemble`]: Monte Carlo contrast between the quantum prediction and an
//!   ensemble of definite (stochastic) dipole values.
//! * [`comagnetometer`]: alternating-polarity Ramsey campaign normalised by a
//!   mercury clock.
//! * [`inference`]: binomial likelihood fits, profile-likelihood upper bounds
//!   and the campaign estimator.
//!
//! All randomness flows through [`streams`], which derives an independent
//! substream for every (seed, index) pair so results never depend on how the
//! work is scheduled.

pub mod comagnetometer;
pub mod ensemble;
mod error;
pub mod inference;
pub mod quantities;
pub mod spin_dynamics;
pub mod streams;
pub mod weak_measurement;

pub use error::{Error, Result};

//! Numerical laboratory for decohered stabilizer states.
//!
//! The crate covers three families of computations:
//!
//! * exact Pauli-algebra manipulations of commuting-projector models and the
//!   dephasing channels that map their ground states to Gibbs states
//!   ([`pauli`], [`gibbs`], [`models`]);
//! * Monte Carlo and exact enumeration for the random-bond Ising model and
//!   the random-plaquette gauge model on their Nishimori lines ([`statmech`]);
//! * fermionic Gaussian states: covariance matrices, imaginary-time
//!   evolution of Slater/BCS states, modular commutators, entanglement
//!   spectra and the Choi–Jamiołkowski double state ([`gaussian`],
//!   [`doublestate`]).
//!
//! Everything here is free of file or terminal IO; the `sep-lab` binary
//! handles manifests, CSV output and configuration.

pub mod doublestate;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod gibbs;
pub mod linalg;
pub mod models;
pub mod pauli;
pub mod rng;
pub mod stats;
pub mod statmech;

pub use error::{Error, Result};

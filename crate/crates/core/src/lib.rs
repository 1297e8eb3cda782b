//! Simulation of a microwave-to-optical optomechanical transducer and a
//! from-scratch actor-critic agent that tunes its pump powers.
//!
//! Layers, bottom up:
//! - [`quantum`]: truncated Fock-space operators and density matrices.
//! - [`model`]: device parameters, Hamiltonians, cooperativities, efficiency.
//! - [`lindblad`]: master-equation evolution and steady states.
//! - [`scattering`]: input-output scattering matrix and spectral efficiency.
//! - [`env`]: the episodic control environment around the device.
//! - [`agent`]: networks, actor-critic updates, training and adaptation.

// Negated comparisons are how NaN inputs get rejected; numeric kernels
// index several slices with one counter.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod agent;
pub mod env;
pub mod error;
pub mod lindblad;
pub mod linalg;
pub mod model;
pub mod quantum;
pub mod scattering;

pub use error::{Error, Result};

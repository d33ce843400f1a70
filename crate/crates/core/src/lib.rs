//! Simulation and optimization workbench for cooperative information
//! communication and location sensing in LEO satellite constellations.
//!
//! The crate is organized around the processing chain of a dual-function
//! satellite serving group:
//!
//! - [`geometry`]: Walker Delta constellation snapshots, serving-group
//!   selection, target angles and the angle-to-position Jacobian.
//! - [`channel`]: satellite-terrestrial Rician channels, UPA steering
//!   vectors and the multistatic sensing matrices.
//! - [`scene`]: frozen per-experiment state combining geometry and channels.
//! - [`signal_model`]: dual-function transmit model, per-satellite power,
//!   UE rates and synthesis of the aggregated sensing observation.
//! - [`localization`]: maximum-likelihood direct position determination via
//!   particle swarm search, with a grid-search reference.
//! - [`crb`]: closed-form Fisher information and Cramer-Rao bound evaluation.
//! - [`beamform`]: joint communication-beamforming / sensing-waveform design
//!   via semidefinite lifting with an exterior rank-one penalty.
//! - [`harness`]: configuration, seeded Monte Carlo experiments, parameter
//!   sweeps and result persistence.

pub mod beamform;
pub mod channel;
pub mod crb;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod localization;
pub mod rng;
pub mod scene;
pub mod signal_model;

pub use error::{Error, Result};

//! Simulation and capacity analysis of WDM fiber links limited by
//! cross-phase-modulation (XPM) phase noise.
//!
//! The crate is organised along the modelling chain:
//!
//! - [`config`]: link parameters, simulation grids and their file format.
//! - [`propagator`]: split-step solvers for the coupled multi-channel
//!   equations and for the single-channel surrogate with a random potential;
//!   free Fresnel propagation.
//! - [`xpm_stats`]: XPM potential extraction and the Gaussian surrogate.
//! - [`pathint`]: discretized path-integral Green's function and the phase
//!   process U.
//! - [`channel`]: lumped and per-symbol phase-noise channels.
//! - [`capacity`] and [`mi`]: the high-SNR capacity bound and a Monte Carlo
//!   mutual-information estimator.
//!
//! All randomness is derived from a master seed through [`rng::stream_rng`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod channel;
pub mod config;
pub mod error;
pub mod mi;
pub mod pathint;
pub mod propagator;
pub mod report;
pub mod rng;
pub mod stats;
pub mod units;
pub mod xpm_stats;

pub use config::{LinkConfig, SimGrid};
pub use error::{Error, Result};
pub use propagator::SignalGrid;
pub use xpm_stats::PotentialField;

//! Sim-to-real transfer tooling for robotic cutting policies.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`timeseries`]: standardize real force recordings and align them in
//!    time (cross-correlation, then open-ended DTW).
//! 2. [`gp`]: fit a periodic Gaussian-process model of the residual
//!    disturbance force and draw posterior samples from it.
//! 3. [`mechanistic`] and [`sim`]: a planar cutting simulator driven by a
//!    mechanistic flute-force model, optionally augmented with GP draws.
//! 4. [`imitation`]: behavioural cloning and DAgger that pair expert
//!    actions from the clean simulator with GP-corrected observations.
//! 5. [`eval`]: strategy reports, Welch tests and trace exports.
//!
//! Runnable walkthroughs for each stage live in `examples/`.

pub mod cli;
pub mod error;

pub mod gp;
mod hash;
pub mod imitation;
pub mod eval;

pub mod mechanistic;
pub mod seed;
pub mod sim;
pub mod synth;

pub mod timeseries;

pub use error::{Error, Result};

/// Three-axis quantity (force in N, position in mm, ...).
pub type Vec3 = [f64; 3];

//! Multi-index Markov chain Monte Carlo for posterior expectations of a
//! stochastic heat equation observed with Gaussian noise.
//!
//! The crate is organised bottom-up:
//!
//! - [`multi_index`]: index sets, corner sets and difference signs.
//! - [`spde`]: the spectral exponential-Euler solver and its coupling.
//! - [`target`]: likelihoods and corner importance weights.
//! - [`pcn`]: the preconditioned Crank–Nicolson chain on the coupled target.
//! - [`estimators`]: increment estimators, allocation and rate fits.
//! - [`oracle`]: exact Gaussian references.
//! - [`experiments`]: the drivers behind the `mimcmc` binary.

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod multi_index;
pub mod oracle;
pub mod pcn;
pub mod rng;
pub mod spde;
pub mod stats;
pub mod target;

pub use error::{Error, Result};
pub use multi_index::{corners, CornerSet, MultiIndex, TensorIndexSet};
pub use spde::{Bases, ModelParams, ObservationConfig, QoiKind};

//! Dual-band (sub-6 GHz / mmWave) beam and blockage prediction toolkit.
//!
//! The crate is organized bottom-up:
//!
//! * [`channel`] builds wideband OFDM channel vectors from geometric paths.
//! * [`scene`] traces line-of-sight and first-order specular paths through a
//!   small synthetic world with an optional blockage screen.
//! * [`codebook`] holds the steering codebook, the achievable-rate function and
//!   the exhaustive-search beam oracle.
//! * [`dataset`] turns channel pairs into normalized learning records and
//!   handles on-disk formats.
//! * [`mlp`] is a from-scratch multilayer perceptron with SGD-momentum training
//!   and head-swap transfer learning.
//! * [`eval`] computes top-k accuracy, achieved rates and the mapping audits.
//! * [`experiment`] wires everything into the train/evaluate loops used by the
//!   CLI and the acceptance suite.

pub mod channel;
pub mod codebook;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod mlp;
pub mod scene;
mod util;

pub use error::{Error, Result};

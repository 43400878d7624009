//! Monte-Carlo link-level simulator for uplink cell-free massive MIMO OFDM
//! with Wiener phase noise at both the UEs and the APs.
//!
//! The crate is organised bottom-up: scenario configuration, phase-noise
//! processes and their statistics, channels, OFDM signal synthesis, channel
//! and CPE estimators (including a small neural network), receiver metrics,
//! and the experiment harness that ties everything together.

pub mod channel;
pub mod config;
pub mod dl;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod ofdm;
pub mod phase_noise;
pub mod rng;

pub use error::{Error, Result};
pub use num_complex::Complex64;

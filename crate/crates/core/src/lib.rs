//! System-level Monte Carlo simulator for hierarchical cell-free (HCF),
//! cell-free (CF), and cellular massive MIMO.
//!
//! The crate evaluates uplink and downlink per-user spectral efficiency under
//! matched-filter combining / conjugate beamforming with MMSE channel
//! estimation, correlated Rayleigh fading, and pilot contamination, and
//! implements max-min fairness power control for both directions:
//!
//! * uplink: bisection over the SINR target with an exact interference
//!   fixed-point feasibility check over the UE power coefficients;
//! * downlink: bisection with a second-order-cone feasibility subproblem over
//!   joint cBS/eAP power coefficients, solved by projected subgradient
//!   descent.
//!
//! The [`harness`] module orchestrates seeded placement epochs and aggregates
//! per-user spectral-efficiency samples into CDFs, percentile rates, sum
//! throughput, and power-saving statistics; [`cli`] exposes the whole
//! pipeline as a command-line tool.

pub mod channel;
pub mod cli;
pub mod downlink;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod pilot;
pub mod power;
pub mod scenario;
pub mod uplink;

pub use error::{Error, Result};

//! Simulation and analysis of linear-optics Bell-state measurements on
//! time-bin qubits carried by phase-randomized weak coherent pulses.
//!
//! The crate is layered bottom-up:
//!
//! - [`states`]: coherent-amplitude time-bin states and source imperfections.
//! - [`optics`]: channel loss, the 50/50 beam splitter, exact click-pattern
//!   distributions and a truncated Fock-space oracle.
//! - [`detector`]: SNSPD dead-time model, timestamp filtering and
//!   inter-arrival histograms.
//! - [`bsm`]: click-pattern classification and derived figures of merit.
//! - [`montecarlo`]: per-cycle stochastic simulation producing [`CountsTable`]s.
//! - [`decoy`]: LP decoy-state bounds on single-photon yields and error rates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsm;
pub mod decoy;
pub mod detector;
mod error;
pub mod montecarlo;
pub mod optics;
pub mod states;

pub use error::{Error, Result};
pub use montecarlo::{CountsTable, RunConfig};

//! Simulation and certification of networked LTI control loops whose
//! measurement channel is subject to time-constrained Denial-of-Service.

pub mod bound;
pub mod certify;
pub mod control;
pub mod dos;
pub mod error;
pub mod matkit;
pub mod network;
pub mod scenario;
pub mod sim;

pub use bound::Bound;
pub use error::{Error, Result};

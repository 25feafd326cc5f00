//! Inter-event time analysis for linear systems under region-based
//! self-triggered control.

pub mod error;
pub mod analysis;
pub mod gamma;
pub mod invariants;
pub mod numkit;
pub mod periodic;
pub mod regions;
pub mod stability;
pub mod system;

pub use error::{Error, Result};

//! Pulse synthesis and error-transparency analysis for a binomial bosonic qubit
//! encoded in a cavity dispersively coupled to a transmon.

pub mod codespace;
pub mod dynamics;
pub mod error;
pub mod errormodel;
pub mod experiment;
pub mod grape;
pub mod hilbert;
pub mod io;
pub mod lindblad;
pub mod metrics;
pub mod linalg;
pub mod pulse;

pub use error::{EstError, Result};

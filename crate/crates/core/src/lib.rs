//! Koopman-model identification and robust observer synthesis for a
//! population of motor drives.
//!
//! The crate covers the full pipeline at desk scale: a synthetic closed-loop
//! drive population, EDMD identification with drive-specific sinusoidal
//! lifting functions, frequency-domain uncertainty quantification over six
//! uncertainty forms, magnitude-bound weight fitting, mixed H2-Hinf observer
//! synthesis by semidefinite programming, and runtime evaluation of the
//! resulting input-output observers.

pub mod edmd;
pub mod error;
pub mod lifting;
pub mod lti;
pub mod sim;
pub mod spectrum;

pub use error::{Error, Result};

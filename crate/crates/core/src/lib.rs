//! Simulation of RIS-assisted automatic modulation classification.
//!
//! The pipeline synthesizes impaired digital-modulation frames
//! ([`sigsynth`], [`impairments`]), passes them through a cascaded binary-phase
//! two-RIS channel ([`ris`]), classifies them with a 1-D CNN ([`cnn`]) and
//! searches the RIS pixel configuration that maximizes per-user accuracy
//! ([`optimizer`]). [`harness`] holds persistence formats, reports and the
//! end-to-end drivers used by the command-line tool.

pub mod cnn;
pub mod error;
pub mod harness;
pub mod impairments;
pub mod metrics;
pub mod optimizer;
pub mod ris;
pub mod sigsynth;

pub use error::{Error, Result};

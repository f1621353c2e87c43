//! Scenario files, persistence formats, reports and the pipeline drivers
//! used by the command-line tool.

pub mod checkpoint;
pub mod dataset_io;
pub mod pipeline;
pub mod reports;
pub mod scenario;
pub mod spectrogram;

pub use pipeline::*;
pub use scenario::Scenario;

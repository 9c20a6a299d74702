//! Pipeline library behind the `voltplace` binary.

pub mod config;
pub mod pipeline;

pub use config::StudyConfig;
pub use pipeline::Pipeline;

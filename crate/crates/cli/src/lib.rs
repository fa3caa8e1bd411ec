//! Library surface of the experiment runner, exposed so integration tests
//! and external tools can drive presets programmatically.

pub mod config;
pub mod presets;
pub mod runner;

pub use config::ExperimentConfig;

//! Experiment driver for the HRMA geodesic-ray studies: configuration,
//! convergence tables, lifespan reports and Monge-Ampère audits.

pub mod config;
pub mod error;
pub mod plot;
pub mod study;

pub use config::{parse_config, parse_config_str, StudyConfig};
pub use error::{CliError, CliResult};

//! Experiment driver for the random conductance Gaussian free field:
//! configuration, the experiment registry, CSV/SVG output.

pub mod config;
pub mod error;
pub mod experiments;
pub mod kgrid;
pub mod output;
pub mod svg;

pub use config::ExperimentConfig;
pub use error::{LabError, Result};
pub use experiments::{experiment, experiments, run, Experiment, Summary};

//! Random-conductance Gaussian free fields on supercritical clusters:
//! environments, cluster geometry, Dirichlet problems, random walks and
//! continuum limits.

pub mod cluster;
pub mod continuum;
pub mod dirichlet;
pub mod domain;
pub mod environment;
pub mod error;
pub mod io;
pub mod lattice;
pub mod law;
pub mod rng;
pub mod sparse;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};

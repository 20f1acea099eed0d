//! Exact posterior replicates for univariate and multi-type spatial
//! generalized linear mixed models.
//!
//! Each replicate draws a subset of sites, hyperparameters from their prior,
//! conjugate pseudo-data and Gaussian blocks, then solves one structured
//! least-squares projection. Replicates are independent, so there is no chain
//! and no burn-in.

pub mod basis;
pub mod cli;
pub mod draws;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod projection;
pub mod sampler;
pub mod simgen;
pub mod subset;

pub use error::{Error, Result};
pub use model::{DesignSpec, FamilyKind, ObservationSet};
pub use sampler::{run_fit, FitConfig, FitResult};

//! Variance-optimal stopping of one-dimensional diffusions.

pub mod config;
pub mod diffusion;
pub mod embedded;
pub mod error;
pub mod expr;
pub mod game;
pub mod lcm;
pub mod montecarlo;
pub mod numeric;
pub mod report;
pub mod rule;
pub mod scale;
pub mod solver;

pub use diffusion::{CaseTag, Classification, DiffusionSpec};
pub use error::{Error, Result};
pub use rule::StoppingRule;
pub use solver::{solve, value_profile, VarianceSolution};

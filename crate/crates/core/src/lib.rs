//! Complexity of the spherical pure p-spin landscape: closed-form complexity
//! functions, two-point covariance structure, certified sign checks, random
//! matrix estimators, Kac–Rice moments and direct critical-point enumeration.

pub mod certification;
pub mod complexity_landscape;
pub mod covariance;
pub mod enumeration;
pub mod error;
pub mod kac_rice;
pub mod quad;
pub mod random_matrix;
pub mod special_functions;
pub mod stats;

pub use error::{Error, Result};

//! Limiting spectral data and largest-eigenvalue large-deviation rate
//! functions for Wigner matrices with a variance profile.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// block matrices are indexed the way they are written
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod dyson;
pub mod error;
pub mod mc;
pub mod oracles;
pub mod profile;
pub mod quad;
pub mod ratefn;
pub mod simplex;

pub use error::{Error, Result};
pub use profile::VarianceProfile;
pub use simplex::SimplexVector;

//! Evolution operators for singular non-autonomous parabolic problems
//! `u' - A(t) u = f(t)` with generator families that blow up at `t = 0`,
//! realized on dense matrix discretizations.

pub mod cauchy;
pub mod cli;
pub mod error;
pub mod evolution;
pub mod family;
pub mod linops;
pub mod quad;
pub mod semigroup;
pub mod wedge;

pub use error::{Error, Result};

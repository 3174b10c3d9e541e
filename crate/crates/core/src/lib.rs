//! Emission of timed Dicke states in a weak, linearized Schwarzschild background.
//!
//! The background is the surface expansion of a static field,
//! `ds² = (1 + aζ) c² dt² − (dx² + dy² + (1 − aζ) dz²)` with `ζ = z − z0` and
//! `a = 2g/c²`, kept only to first order in `a`.

// negated comparisons reject NaN together with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod emission;
pub mod ensemble;
pub mod error;
pub mod maxwell;
pub mod metric;
pub mod modes;
#[cfg(any(test, feature = "oracles"))]
pub mod oracle;
pub mod quadrature;
pub mod spectrum;

pub use error::{Error, Result};

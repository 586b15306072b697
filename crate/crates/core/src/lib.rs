//! Intrinsic torsion of almost contact metric structures, evaluated pointwise
//! in an orthonormal frame: the twelve unitary components, type detection by
//! two independent routes, differential identities as finite-difference
//! residuals, and the catalog of forbidden types.

pub mod acms;
pub mod builtins;
pub mod classify;
pub mod error;
pub mod exterior;
pub mod identities;
pub mod model;
pub mod report;
pub mod selftest;
pub mod tensor;
pub mod torsion;

pub use error::{Error, Result};

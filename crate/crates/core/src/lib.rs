//! Learning energy-preserving reduced-order models of multi-symplectic PDEs.
//!
//! The pipeline runs a full-order linearly implicit solver, builds a POD basis from
//! an extended snapshot matrix, fits skew-symmetric reduced difference operators to
//! the time-discrete scheme and integrates the learned model with the same scheme,
//! so the reduced model conserves a discrete energy for any learned operator.

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod fingerprint;
pub mod fom;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod model;
pub mod operators;
pub mod opinf;
pub mod pod;
pub mod rom;
pub mod snapshots;
pub mod spectral;

pub use error::{Error, Result};

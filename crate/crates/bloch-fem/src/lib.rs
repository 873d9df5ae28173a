//! Floquet-Bloch finite elements for time-harmonic scattering from two
//! stacked periodic layers whose periods differ.
//!
//! The lower layer is windowed and periodized with period NΛ, split into N
//! Λ-periodic components, and the scattering problem becomes N coupled
//! quasi-periodic cell problems solved together.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod config;
pub mod error;
pub mod experiment;
pub mod greens;
mod interp;
pub mod medium;
pub mod oracle;
pub mod report;
pub mod mesh;
pub mod sparse;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};

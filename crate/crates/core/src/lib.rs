//! Manifold Deflation: spectral embedding with tangent-field penalties, and
//! Vector Field Inversion for boundary debiasing.

pub mod datasets;
pub mod deflation;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod solver;
pub mod sparse;
pub mod tangent;

pub use error::{Error, Result};

//! Numerical laboratory for gaussian heat-flow monotonicity, multilinear
//! Kakeya tube overlaps and joints counting.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod gaussflow;
pub mod grid;
pub mod io;
pub mod joints;
pub mod matcore;
pub mod perturbflow;
pub mod sum;
pub mod tubes;

pub use error::{Error, Result};
pub use gaussflow::{FlowSystem, GaussianAtom, GaussianFamily};
pub use grid::GridSpec;
pub use matcore::{ExponentVector, SymMatrix};

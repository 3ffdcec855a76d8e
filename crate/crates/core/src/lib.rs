//! Decoding toolkit for quantum error-correcting codes: correlated
//! minimum-weight matching, ensembles of perturbed matchers with pooling,
//! and a matrix-product-state maximum-likelihood reference.

pub mod bench;
pub mod codes;
pub mod correlated;
pub mod error;
pub mod harmony;
pub mod matching;
pub mod model;
pub mod parallel;
pub mod tnml;

pub use error::{DemError, Error, Result};
pub use model::{Basis, ErrorHypergraph, Mechanism, ObsMask, Shot};

//! Label-efficient regression by barrier-guided importance sampling.
//!
//! The flow is: map raw features and whiten them against an unlabeled pool
//! ([`basis`]), pick a small weighted subset of the pool ([`sampler`]), query
//! labels for that subset only, and fit weighted least squares ([`erm`]).
//! [`pipeline::run`] strings these together.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod data;
pub mod erm;
pub mod error;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod sampler;

pub use basis::{build_basis, FeatureBasis, FeatureMap, MapKind};
pub use data::{load_csv, rmse, split, synth_regression, write_csv, Dataset, Split};
pub use erm::{fit_full, fit_weighted, RegressionModel};
pub use error::{Error, Result};
pub use linalg::{EigenExtremes, SymMatrix};
pub use sampler::{select_bss, select_uniform, BssConfig, SelectionResult, Strategy};

//! Exact outcome distributions for linear-optical experiments with partially
//! distinguishable bosons, together with the estimators, experiment-design
//! routines and error models used to characterize such experiments.
//!
//! Modules:
//! - [`symrep`]: partitions, tableaux and the representation theory of `S_n`.
//! - [`linopt`]: occupation lists, permanents, Gell-Mann parameterized unitaries.
//! - [`hidden_dof`]: direct, mixture and thermal models for a hidden degree of freedom.
//! - [`bunching`]: HOM quantities, immanants and generalized bunching.
//! - [`stats`]: delta method, bootstrap, Clopper-Pearson, sample sizing.
//! - [`design`]: Fisher information, A-optimal design and maximum-likelihood fitting.
//! - [`error_model`]: laser-power fluctuation dephasing and fidelity bounds.

pub mod bunching;
pub mod design;
pub mod error;
pub mod error_model;
pub mod hidden_dof;
pub mod linopt;
pub mod stats;
pub mod symrep;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dense real matrix.
pub type RMatrix = nalgebra::DMatrix<f64>;

//! Spectral hard-thresholded Galerkin estimation of Markov transition
//! operators and transition densities on the torus.
//!
//! The pipeline is:
//!
//! 1. observe (or simulate, see [`sim`]) a torus-valued chain `X_0, ..., X_n`;
//! 2. accumulate the empirical Galerkin matrix `R̂` of consecutive pairs and the
//!    empirical Gram matrix `Ĝ` of single states in an orthonormal basis ([`basis`]);
//! 3. hard-threshold the singular values of `R̂` at level `alpha`;
//! 4. undo the invariant-measure weighting with the (pseudo-)inverse of `Ĝ`.
//!
//! The resulting coefficient matrix expands the transition density in the
//! basis. [`oracle`] computes ground-truth coefficient matrices by quadrature
//! and [`harness`] runs replicated loss experiments against them.

pub mod basis;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod oracle;
pub mod par;
pub mod quadrature;
pub mod sim;

pub use basis::{BasisIndex, BasisSpec};
pub use error::{Error, ErrorKind, Result};
pub use estimator::{Estimate, EstimatorConfig, ThresholdReport};
pub use harness::{ExperimentConfig, LossTable};
pub use matrix::CoeffMatrix;
pub use oracle::{WrappedChainKernel, WrappedDensity};
pub use par::Execution;
pub use sim::{Init, OuParams, Trajectory};

//! Mahalanobis distance metric learning with convex orthogonality-promoting
//! Bregman regularizers.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: symmetric eigendecomposition, spectral functions, PSD factorization,
//!   the Wright omega function.
//! * [`regularizers`]: nonconvex (`Ω_φ(A)`) and convex (`Ω̂_φ(M)`) regularizers,
//!   gradients and eigenvalue-wise proximal operators.
//! * [`optimizer`]: stochastic proximal subgradient training of `M` and the
//!   projection-matrix baseline.
//! * [`data`], [`eval`]: datasets, pair sampling, retrieval AUC and the
//!   balance/compactness scores.
//! * [`theory`]: balancedness and generalization bounds as computable checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod metric;
pub mod model;
pub mod optimizer;
pub mod regularizers;
pub mod theory;

pub use error::{Error, Result};
pub use linalg::{Matrix, SymMatrix};
pub use metric::{DistanceMetric, MahalanobisMetric, ProjectionMatrix};
pub use regularizers::{Family, Form, RegularizerSpec};

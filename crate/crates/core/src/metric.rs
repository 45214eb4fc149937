//! The two learned objects: a PSD Mahalanobis matrix and a projection matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{psd_factorize_eig, sym_eig, EigenDecomposition, Matrix, SymMatrix};

/// Relative tolerance on `λ_min` below which a matrix is rejected as not PSD.
pub const PSD_REL_TOL: f64 = 1e-8;

/// Training metadata attached to a learned metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub epochs_run: usize,
    pub final_objective: f64,
}

/// A PSD matrix `M` with its cached eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisMetric {
    matrix: SymMatrix,
    eig: EigenDecomposition,
    pub provenance: Option<Provenance>,
}

impl MahalanobisMetric {
    pub fn identity(dim: usize) -> Self {
        let eig = EigenDecomposition {
            eigenvalues: vec![1.0; dim],
            eigenvectors: SymMatrix::identity(dim).to_matrix(),
        };
        MahalanobisMetric { matrix: SymMatrix::identity(dim), eig, provenance: None }
    }

    /// Wraps a symmetric matrix, checking it is PSD up to [`PSD_REL_TOL`].
    pub fn from_matrix(matrix: SymMatrix) -> Result<Self> {
        let eig = sym_eig(&matrix)?;
        check_psd(&eig)?;
        Ok(MahalanobisMetric { matrix, eig, provenance: None })
    }

    /// Builds `U diag(λ) Uᵀ` from an eigendecomposition with nonnegative eigenvalues.
    pub fn from_eigen(eig: EigenDecomposition) -> Result<Self> {
        check_psd(&eig)?;
        let matrix = eig.reconstruct();
        Ok(MahalanobisMetric { matrix, eig, provenance: None })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eig
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig.eigenvalues
    }

    /// `zᵀ M z`.
    pub fn quad_form(&self, z: &[f64]) -> f64 {
        self.matrix.quad_form(z)
    }

    pub fn rank(&self, rank_tol: f64) -> usize {
        self.eig.numerical_rank(rank_tol)
    }

    /// `L` with `M ≈ LᵀL`, from the cached decomposition.
    pub fn factor(&self, rank_tol: f64) -> Result<Matrix> {
        psd_factorize_eig(&self.eig, rank_tol)
    }
}

fn check_psd(eig: &EigenDecomposition) -> Result<()> {
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite eigenvalue".into()));
    }
    let min = eig.min_eigenvalue();
    if min < -PSD_REL_TOL * eig.max_eigenvalue().max(1.0) {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(())
}

/// An `R×D` projection matrix `A`; rows are projection vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    matrix: Matrix,
}

impl ProjectionMatrix {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(Error::InvalidInput("projection matrix has non-finite entries".into()));
        }
        Ok(ProjectionMatrix { matrix })
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// `‖A z‖²`.
    pub fn sq_norm(&self, z: &[f64]) -> f64 {
        (0..self.rows())
            .map(|r| {
                let v = crate::linalg::dot(self.matrix.row(r), z);
                v * v
            })
            .sum()
    }

    /// `AᵀA` as a Mahalanobis matrix.
    pub fn to_mahalanobis(&self) -> Result<MahalanobisMetric> {
        MahalanobisMetric::from_matrix(self.matrix.gram_cols())
    }
}

/// Anything that induces a squared distance between feature vectors.
pub trait DistanceMetric {
    fn dim(&self) -> usize;
    /// `(x−y)ᵀ M (x−y)` or its equivalent.
    fn sq_distance(&self, x: &[f64], y: &[f64]) -> f64;
    /// Number of projection vectors the metric needs.
    fn npv(&self, rank_tol: f64) -> usize;
    /// A linear map `L` with `‖Lx − Ly‖²` equal to the metric's distance.
    fn embedding(&self, rank_tol: f64) -> Result<Matrix>;
}

impl DistanceMetric for MahalanobisMetric {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn sq_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.matrix.quad_form(&z)
    }

    fn npv(&self, rank_tol: f64) -> usize {
        self.rank(rank_tol)
    }

    fn embedding(&self, rank_tol: f64) -> Result<Matrix> {
        self.factor(rank_tol)
    }
}

impl DistanceMetric for ProjectionMatrix {
    fn dim(&self) -> usize {
        self.matrix.cols()
    }

    fn sq_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.sq_norm(&z)
    }

    fn npv(&self, _rank_tol: f64) -> usize {
        self.rows()
    }

    fn embedding(&self, _rank_tol: f64) -> Result<Matrix> {
        Ok(self.matrix.clone())
    }
}

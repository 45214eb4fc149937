//! JSON persistence for learned models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{EigenDecomposition, Matrix};
use crate::metric::{DistanceMetric, MahalanobisMetric, ProjectionMatrix, Provenance};
use crate::regularizers::RegularizerSpec;

/// A Mahalanobis matrix stored in eigen form: `eigenvectors_row_major` is the
/// `D×D` matrix whose columns are the eigenvectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MahalanobisModel {
    pub dim: usize,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors_row_major: Vec<f64>,
    pub regularizer: RegularizerSpec,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs_run: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    pub rows: usize,
    pub dim: usize,
    pub matrix_row_major: Vec<f64>,
    pub regularizer: RegularizerSpec,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs_run: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelFile {
    Mahalanobis(MahalanobisModel),
    Projection(ProjectionModel),
}

/// A loaded model, ready to measure distances.
#[derive(Debug, Clone)]
pub enum LoadedMetric {
    Mahalanobis(MahalanobisMetric),
    Projection(ProjectionMatrix),
}

impl DistanceMetric for LoadedMetric {
    fn dim(&self) -> usize {
        match self {
            LoadedMetric::Mahalanobis(m) => DistanceMetric::dim(m),
            LoadedMetric::Projection(a) => DistanceMetric::dim(a),
        }
    }

    fn sq_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            LoadedMetric::Mahalanobis(m) => m.sq_distance(x, y),
            LoadedMetric::Projection(a) => a.sq_distance(x, y),
        }
    }

    fn npv(&self, rank_tol: f64) -> usize {
        match self {
            LoadedMetric::Mahalanobis(m) => m.npv(rank_tol),
            LoadedMetric::Projection(a) => a.npv(rank_tol),
        }
    }

    fn embedding(&self, rank_tol: f64) -> Result<Matrix> {
        match self {
            LoadedMetric::Mahalanobis(m) => m.embedding(rank_tol),
            LoadedMetric::Projection(a) => a.embedding(rank_tol),
        }
    }
}

impl ModelFile {
    pub fn from_mahalanobis(m: &MahalanobisMetric, regularizer: RegularizerSpec) -> Self {
        let prov = m.provenance.clone();
        ModelFile::Mahalanobis(MahalanobisModel {
            dim: m.dim(),
            eigenvalues: m.eigenvalues().to_vec(),
            eigenvectors_row_major: m.eigen().eigenvectors.as_slice().to_vec(),
            regularizer,
            config_hash: prov.as_ref().map(|p| p.config_hash.clone()).unwrap_or_default(),
            epochs_run: prov.as_ref().map(|p| p.epochs_run),
            final_objective: prov.as_ref().map(|p| p.final_objective),
        })
    }

    pub fn from_projection(a: &ProjectionMatrix, regularizer: RegularizerSpec, provenance: Option<&Provenance>) -> Self {
        ModelFile::Projection(ProjectionModel {
            rows: a.rows(),
            dim: a.dim(),
            matrix_row_major: a.matrix().as_slice().to_vec(),
            regularizer,
            config_hash: provenance.map(|p| p.config_hash.clone()).unwrap_or_default(),
            epochs_run: provenance.map(|p| p.epochs_run),
            final_objective: provenance.map(|p| p.final_objective),
        })
    }

    pub fn regularizer(&self) -> &RegularizerSpec {
        match self {
            ModelFile::Mahalanobis(m) => &m.regularizer,
            ModelFile::Projection(p) => &p.regularizer,
        }
    }

    pub fn to_metric(&self) -> Result<LoadedMetric> {
        match self {
            ModelFile::Mahalanobis(m) => {
                if m.eigenvalues.len() != m.dim {
                    return Err(Error::InvalidInput(format!(
                        "model lists {} eigenvalues for dimension {}",
                        m.eigenvalues.len(),
                        m.dim
                    )));
                }
                let eigenvectors = Matrix::from_row_major(m.dim, m.dim, m.eigenvectors_row_major.clone())?;
                let eig = EigenDecomposition { eigenvalues: m.eigenvalues.clone(), eigenvectors };
                let mut metric = MahalanobisMetric::from_eigen(eig)?;
                if let (Some(epochs_run), Some(final_objective)) = (m.epochs_run, m.final_objective) {
                    metric.provenance =
                        Some(Provenance { config_hash: m.config_hash.clone(), epochs_run, final_objective });
                }
                Ok(LoadedMetric::Mahalanobis(metric))
            }
            ModelFile::Projection(p) => {
                let a = Matrix::from_row_major(p.rows, p.dim, p.matrix_row_major.clone())?;
                Ok(LoadedMetric::Projection(ProjectionMatrix::new(a)?))
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use crate::regularizers::Family;

    #[test]
    fn mahalanobis_round_trip() {
        let m = SymMatrix::from_rows(&[vec![2.0, 0.3, 0.0], vec![0.3, 1.0, -0.2], vec![0.0, -0.2, 0.5]]).unwrap();
        let metric = MahalanobisMetric::from_matrix(m.clone()).unwrap();
        let file = ModelFile::from_mahalanobis(&metric, RegularizerSpec::convex(Family::Ldd, 0.1, 1e-5));
        let back = ModelFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);
        match back.to_metric().unwrap() {
            LoadedMetric::Mahalanobis(l) => assert!(l.matrix().max_abs_diff(&m) <= 1e-12),
            LoadedMetric::Projection(_) => panic!("wrong kind"),
        }
    }

    #[test]
    fn projection_round_trip() {
        let a = ProjectionMatrix::new(Matrix::from_rows(&[vec![0.1, -0.7], vec![1.0 / 3.0, 2.0]]).unwrap()).unwrap();
        let file = ModelFile::from_projection(&a, RegularizerSpec::nonconvex(Family::Vnd, 0.01), None);
        let back = ModelFile::from_json(&file.to_json()).unwrap();
        match back.to_metric().unwrap() {
            LoadedMetric::Projection(b) => assert_eq!(b, a),
            LoadedMetric::Mahalanobis(_) => panic!("wrong kind"),
        }
    }

    #[test]
    fn malformed_json() {
        assert!(matches!(ModelFile::from_json("{\"dim\": 2"), Err(Error::Parse { .. })));
    }
}

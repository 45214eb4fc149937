//! Dense symmetric-matrix numerics.
//!
//! Everything here works on small, row-major, `f64` matrices (a few hundred
//! rows at most). The eigensolver is cyclic Jacobi: slower than tridiagonal
//! QR for large matrices but accurate to the last few ulps and fully
//! deterministic, which the training loop relies on for reproducibility.

use crate::error::{Error, Result};

/// Sweep budget for the Jacobi eigensolver.
pub const MAX_JACOBI_SWEEPS: usize = 100;
/// Convergence threshold on the off-diagonal Frobenius norm, relative to `‖m‖_F`.
pub const JACOBI_REL_TOL: f64 = 1e-12;
/// Default relative threshold for counting an eigenvalue as nonzero.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// General dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::InvalidInput(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `A x` for a vector `x` of length `cols`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// Gram matrix of the rows, `A Aᵀ`.
    pub fn gram_rows(&self) -> SymMatrix {
        let n = self.rows;
        let mut out = SymMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let v = dot(self.row(i), self.row(j));
                out.data[i * n + j] = v;
                out.data[j * n + i] = v;
            }
        }
        out
    }

    /// Gram matrix of the columns, `Aᵀ A`.
    pub fn gram_cols(&self) -> SymMatrix {
        let d = self.cols;
        let mut out = SymMatrix::zeros(d);
        for r in 0..self.rows {
            out.add_outer(self.row(r), 1.0);
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Matrix) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Square symmetric matrix, stored densely in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = s;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * dim + i] = d;
        }
        m
    }

    /// Builds a symmetric matrix from row-major entries, replacing the input by
    /// `(X + Xᵀ)/2` so the stored entries are exactly symmetric.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("matrix dimension must be at least 1".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        let mut m = SymMatrix { dim, data };
        m.symmetrize();
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput("matrix must be square".into()));
        }
        Self::from_row_major(dim, rows.iter().flatten().copied().collect())
    }

    fn symmetrize(&mut self) {
        let n = self.dim;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets entries `(i, j)` and `(j, i)`.
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix { rows: self.dim, cols: self.dim, data: self.data.clone() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `tr(selfᵀ other)`.
    pub fn inner(&self, other: &SymMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// `self += w · z zᵀ`.
    pub fn add_outer(&mut self, z: &[f64], w: f64) {
        let n = self.dim;
        debug_assert_eq!(z.len(), n);
        for i in 0..n {
            let wi = w * z[i];
            if wi == 0.0 {
                continue;
            }
            let row = &mut self.data[i * n..(i + 1) * n];
            for (r, &zj) in row.iter_mut().zip(z) {
                *r += wi * zj;
            }
        }
    }

    /// `zᵀ M z`.
    pub fn quad_form(&self, z: &[f64]) -> f64 {
        let n = self.dim;
        debug_assert_eq!(z.len(), n);
        let mut acc = 0.0;
        for i in 0..n {
            if z[i] == 0.0 {
                continue;
            }
            acc += z[i] * dot(self.row(i), z);
        }
        acc
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &SymMatrix) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn add_diag(&mut self, s: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += s;
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared Euclidean distance.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Eigenpairs of a symmetric matrix; eigenvalues sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the unit eigenvector for `eigenvalues[i]`.
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U diag(values) Uᵀ` for replacement eigenvalues.
    pub fn reassemble(&self, values: &[f64]) -> SymMatrix {
        let n = self.dim();
        debug_assert_eq!(values.len(), n);
        let u = &self.eigenvectors;
        let mut out = SymMatrix::zeros(n);
        let mut col = vec![0.0; n];
        for (k, &lam) in values.iter().enumerate() {
            if lam == 0.0 {
                continue;
            }
            for (i, c) in col.iter_mut().enumerate() {
                *c = u.get(i, k);
            }
            out.add_outer(&col, lam);
        }
        out.symmetrize();
        out
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reassemble(&self.eigenvalues)
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| self.eigenvectors.get(i, k)).collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// Number of eigenvalues strictly above `rank_tol · max(λ₁, 1)`.
    pub fn numerical_rank(&self, rank_tol: f64) -> usize {
        let thr = rank_tol * self.max_eigenvalue().max(1.0);
        self.eigenvalues.iter().filter(|&&l| l > thr).count()
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eig(m: &SymMatrix) -> Result<EigenDecomposition> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let n = m.dim();
    let mut a = m.data.clone();
    let mut v = SymMatrix::identity(n).data;
    let tol = JACOBI_REL_TOL * m.frobenius_norm();

    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = false;
    for _ in 0..MAX_JACOBI_SWEEPS {
        if off_norm(&a) <= tol {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off_norm(&a) > tol {
        return Err(Error::NumericalFailure(format!(
            "Jacobi eigensolver did not converge within {MAX_JACOBI_SWEEPS} sweeps"
        )));
    }

    let diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps original index order among ties
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap_or(std::cmp::Ordering::Equal));

    let eigenvalues = order.iter().map(|&i| diag[i]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vecs.set(r, new_col, v[r * n + old_col]);
        }
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors: vecs })
}

/// `U f(Λ) Uᵀ` for a scalar function `f` applied to each eigenvalue.
pub fn spectral_apply<F>(m: &SymMatrix, f: F) -> Result<SymMatrix>
where
    F: Fn(f64) -> f64,
{
    let eig = sym_eig(m)?;
    spectral_apply_eig(&eig, f)
}

/// As [`spectral_apply`], reusing an existing decomposition.
pub fn spectral_apply_eig<F>(eig: &EigenDecomposition, f: F) -> Result<SymMatrix>
where
    F: Fn(f64) -> f64,
{
    let mut values = Vec::with_capacity(eig.dim());
    for &lam in &eig.eigenvalues {
        let v = f(lam);
        if !v.is_finite() {
            return Err(Error::DomainError(format!(
                "spectral function is undefined at eigenvalue {lam:e}"
            )));
        }
        values.push(v);
    }
    Ok(eig.reassemble(&values))
}

/// Real-branch Wright omega function: the `y > 0` solving `y + ln y = z`.
pub fn wright_omega(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::InvalidInput(format!("wright_omega argument {z} is not finite")));
    }
    // below this, exp(z) is the root to machine precision (y ≈ e^{z-y} with y tiny)
    if z < -700.0 {
        return Ok(z.exp());
    }
    let g = |y: f64| y + y.ln() - z;

    let (mut lo, mut hi) = if z >= 1.0 {
        (z - z.ln(), z)
    } else {
        let hi = z.exp().min(1.0);
        ((z - hi).exp(), hi)
    };
    let mut y = if z < 0.0 {
        z.exp()
    } else if z >= 1.0 {
        z
    } else {
        1.0
    };
    y = y.clamp(lo, hi);

    for _ in 0..100 {
        let gy = g(y);
        if gy == 0.0 {
            return Ok(y);
        }
        if gy > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let newton = y - gy * y / (y + 1.0);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - y).abs() <= 4.0 * f64::EPSILON * y {
            y = next;
            break;
        }
        y = next;
    }
    Ok(y)
}

/// `L` with `LᵀL` equal to `m` after zeroing eigenvalues at or below
/// `rank_tol · max(λ₁, 1)`. Row `i` is `√λᵢ uᵢᵀ`.
pub fn psd_factorize(m: &SymMatrix, rank_tol: f64) -> Result<Matrix> {
    let eig = sym_eig(m)?;
    psd_factorize_eig(&eig, rank_tol)
}

/// As [`psd_factorize`], reusing an existing decomposition.
pub fn psd_factorize_eig(eig: &EigenDecomposition, rank_tol: f64) -> Result<Matrix> {
    let thr = rank_tol * eig.max_eigenvalue().max(1.0);
    let min = eig.min_eigenvalue();
    if min < -thr {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let n = eig.dim();
    let kept: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > thr).collect();
    let mut l = Matrix::zeros(kept.len(), n);
    for (r, &k) in kept.iter().enumerate() {
        let s = eig.eigenvalues[k].sqrt();
        for c in 0..n {
            l.set(r, c, s * eig.eigenvectors.get(c, k));
        }
    }
    Ok(l)
}

/// `λ_max / λ_min` for a symmetric positive definite matrix.
pub fn condition_number(m: &SymMatrix) -> Result<f64> {
    let eig = sym_eig(m)?;
    let min = eig.min_eigenvalue();
    if min <= 0.0 {
        return Err(Error::Singular(format!("smallest eigenvalue {min:e} is not positive")));
    }
    Ok(eig.max_eigenvalue() / min)
}

//! Balancedness and generalization bounds as calculators, plus checks of the
//! trace and condition-number inequalities on concrete matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, dot, sq_dist, Matrix};
use crate::metric::{MahalanobisMetric, ProjectionMatrix};
use crate::regularizers::{convex_from_spectrum, omega_nonconvex, Family, RegularizerSpec};

/// Absolute slack (scaled by `max(1, |rhs|)`) allowed when checking an inequality.
pub const CHECK_SLACK: f64 = 1e-9;

const F_INVERSE_TOL: f64 = 1e-12;

/// `f(c) = c^{1/(c+1)} (1 + 1/c)`, increasing on `(0, 1]`, decreasing on `[1, ∞)`.
pub fn f_curve(c: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::DomainError(format!("f is defined for c > 0, got {c}")));
    }
    Ok(c.powf(1.0 / (c + 1.0)) * (1.0 + 1.0 / c))
}

/// The `c ≥ 1` with `f(c) = v`, for `v ∈ (1, 2]`.
pub fn f_inverse(v: f64) -> Result<f64> {
    if !(v > 1.0 && v <= 2.0) {
        return Err(Error::DomainError(format!("f inverse is defined on (1, 2], got {v}")));
    }
    if v == 2.0 {
        return Ok(1.0);
    }
    let f = |c: f64| f_curve(c).expect("c >= 1");
    let mut lo = 1.0;
    let mut hi = 2.0;
    while f(hi) > v {
        lo = hi;
        hi *= 2.0;
    }
    // f(lo) > v >= f(hi)
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm - v).abs() <= F_INVERSE_TOL {
            return Ok(mid);
        }
        if fm > v {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Ratio of the largest to the smallest squared Euclidean distance between class means.
pub fn class_means_ratio(means: &Matrix) -> Result<f64> {
    if means.rows() < 2 {
        return Err(Error::InvalidInput("need at least 2 class means".into()));
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for j in 0..means.rows() {
        for k in (j + 1)..means.rows() {
            let d = sq_dist(means.row(j), means.row(k));
            if d <= crate::eval::DEGENERATE_MEAN_TOL {
                return Err(Error::DegenerateMeans(format!("means {j} and {k} coincide")));
            }
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    Ok(hi / lo)
}

fn check_means_ratio(c_means: f64) -> Result<()> {
    if !(c_means >= 1.0) || !c_means.is_finite() {
        return Err(Error::InvalidInput(format!("mean-distance ratio must be >= 1, got {c_means}")));
    }
    Ok(())
}

/// Imbalance-factor bound `C · f⁻¹(2 − Ω_vnd)`, valid for `Ω_vnd < 1`.
pub fn vnd_imbalance_bound(omega_vnd: f64, c_means: f64) -> Result<f64> {
    check_means_ratio(c_means)?;
    if !(omega_vnd >= 0.0) {
        return Err(Error::DomainError(format!("regularizer value must be >= 0, got {omega_vnd}")));
    }
    if omega_vnd >= 1.0 {
        return Err(Error::BoundInapplicable(format!("von Neumann bound needs Ω < 1, got {omega_vnd}")));
    }
    Ok(c_means * f_inverse(2.0 - omega_vnd)?)
}

/// Imbalance-factor bound `4 C e^{Ω_ldd}`.
pub fn ldd_imbalance_bound(omega_ldd: f64, c_means: f64) -> Result<f64> {
    check_means_ratio(c_means)?;
    if !(omega_ldd >= 0.0) {
        return Err(Error::DomainError(format!("regularizer value must be >= 0, got {omega_ldd}")));
    }
    Ok(4.0 * c_means * omega_ldd.exp())
}

/// Inputs of the generalization bounds. `c` caps the regularizer over the
/// hypothesis class; it is unrelated to the mean-distance ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenBoundInputs {
    /// Bound on `|vᵀ(x−y)|`.
    pub b: f64,
    pub c: f64,
    pub tau: f64,
    pub delta: f64,
    /// Number of training pairs.
    pub m: usize,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Feature dimension, needed for the log-determinant bound.
    #[serde(default)]
    pub dim: Option<usize>,
}

impl GenBoundInputs {
    fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.b) && pos(self.c) && pos(self.tau)) {
            return Err(Error::InvalidInput("b, c and tau must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.m == 0 {
            return Err(Error::InvalidInput("pair count must be positive".into()));
        }
        Ok(())
    }
}

/// High-probability bound on the gap between expected and empirical loss for
/// the convex regularizer `family`.
pub fn gen_bound(family: Family, inp: &GenBoundInputs) -> Result<f64> {
    inp.validate()?;
    let b2 = inp.b * inp.b;
    let conf = (2.0 * (1.0 / inp.delta).ln()).sqrt();
    let sqrt_m = (inp.m as f64).sqrt();
    let num = match family {
        Family::Vnd => 4.0 * b2 * inp.c + inp.tau.max(b2 * inp.c) * conf,
        Family::Sfn => 2.0 * b2 * (2.0 * inp.c).min(inp.c.sqrt()) + inp.tau.max(inp.c) * conf,
        Family::Ldd => {
            let eps = inp
                .epsilon
                .ok_or_else(|| Error::InvalidInput("log-determinant bound needs epsilon".into()))?;
            let dim = inp.dim.ok_or_else(|| Error::InvalidInput("log-determinant bound needs the dimension".into()))?;
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::InvalidInput(format!("epsilon must lie in (0, 1), got {eps}")));
            }
            let l = (1.0 / eps).ln() - 1.0;
            if !(l > 0.0) {
                return Err(Error::DomainError(format!("need log(1/ε) > 1, got ε = {eps}")));
            }
            4.0 * b2 * inp.c / l + inp.tau.max((inp.c - dim as f64 * eps) / l) * conf
        }
    };
    Ok(num / sqrt_m)
}

fn holds(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + CHECK_SLACK * rhs.abs().max(1.0)
}

/// `tr(M) ≤ Ω̂_vnd(M)` and `tr(M) ≤ (Ω̂_ldd(M) − Dε)/(log(1/ε) − 1)`.
///
/// The second inequality can fail by up to `Dε/(log(1/ε) − 1)` when every
/// eigenvalue sits within about `√(2ε)` of 1: the exact gap is
/// `Σ_j [π_j − log(π_j + ε) − 1] / (log(1/ε) − 1)`, which is `−ε/(log(1/ε) − 1)`
/// per eigenvalue at `π_j = 1 − ε`. Dropping the `Dε` term gives an inequality
/// that always holds; it is reported as `ldd_relaxed_*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceLemmaCheck {
    pub trace: f64,
    pub vnd_rhs: f64,
    pub ldd_rhs: f64,
    pub vnd_holds: bool,
    pub ldd_holds: bool,
    /// Right-hand side minus trace.
    pub vnd_slack: f64,
    pub ldd_slack: f64,
    /// `Ω̂_ldd(M)/(log(1/ε) − 1)`.
    pub ldd_relaxed_rhs: f64,
    pub ldd_relaxed_holds: bool,
}

pub fn check_trace_lemmas(epsilon: f64, m: &MahalanobisMetric) -> Result<TraceLemmaCheck> {
    let vnd = RegularizerSpec::convex(Family::Vnd, 1.0, epsilon);
    let ldd = RegularizerSpec::convex(Family::Ldd, 1.0, epsilon);
    vnd.validate()?;
    let l = (1.0 / epsilon).ln() - 1.0;
    if !(l > 0.0) {
        return Err(Error::DomainError(format!("need log(1/ε) > 1, got ε = {epsilon}")));
    }
    let eig = m.eigenvalues();
    let trace: f64 = eig.iter().map(|v| v.max(0.0)).sum();
    let vnd_rhs = convex_from_spectrum(&vnd, eig);
    let omega_ldd = convex_from_spectrum(&ldd, eig);
    let ldd_rhs = (omega_ldd - m.dim() as f64 * epsilon) / l;
    let ldd_relaxed_rhs = omega_ldd / l;
    Ok(TraceLemmaCheck {
        trace,
        vnd_rhs,
        ldd_rhs,
        vnd_holds: holds(trace, vnd_rhs),
        ldd_holds: holds(trace, ldd_rhs),
        vnd_slack: vnd_rhs - trace,
        ldd_slack: ldd_rhs - trace,
        ldd_relaxed_rhs,
        ldd_relaxed_holds: holds(trace, ldd_relaxed_rhs),
    })
}

/// `cond(AAᵀ) ≤ f⁻¹(2 − Ω_vnd(A))` (only when `Ω_vnd < 1`) and `cond(AAᵀ) ≤ 4e^{Ω_ldd(A)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CondBoundCheck {
    pub cond: f64,
    pub omega_vnd: f64,
    pub omega_ldd: f64,
    pub vnd_checked: bool,
    pub vnd_bound: Option<f64>,
    pub ldd_bound: f64,
    pub vnd_holds: bool,
    pub ldd_holds: bool,
}

pub fn check_cond_bounds(a: &ProjectionMatrix) -> Result<CondBoundCheck> {
    let gram = a.matrix().gram_rows();
    let cond = condition_number(&gram)?;
    let omega_vnd = omega_nonconvex(Family::Vnd, a.matrix())?;
    let omega_ldd = omega_nonconvex(Family::Ldd, a.matrix())?;
    let vnd_bound = if omega_vnd < 1.0 { Some(f_inverse(2.0 - omega_vnd.max(0.0))?) } else { None };
    let ldd_bound = 4.0 * omega_ldd.exp();
    Ok(CondBoundCheck {
        cond,
        omega_vnd,
        omega_ldd,
        vnd_checked: vnd_bound.is_some(),
        vnd_bound,
        ldd_bound,
        vnd_holds: vnd_bound.is_none_or(|b| holds(cond, b)),
        ldd_holds: holds(cond, ldd_bound),
    })
}

/// Random PSD matrix `BBᵀ` of dimension `dim` with random rank and scale.
pub fn random_psd(dim: usize, rng: &mut impl Rng) -> MahalanobisMetric {
    let rank = rng.random_range(0..=dim);
    let scale = 10f64.powf(rng.random_range(-2.0..=1.0));
    let data = (0..dim * rank).map(|_| scale.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
    let b = Matrix::from_row_major(dim, rank, data).expect("shape matches");
    MahalanobisMetric::from_matrix(b.gram_rows()).expect("a Gram matrix is PSD")
}

/// `rows×dim` matrix with orthonormal rows (`rows ≤ dim`), from Gram-Schmidt on Gaussian rows.
pub fn random_orthonormal_rows(rows: usize, dim: usize, rng: &mut impl Rng) -> Matrix {
    assert!(rows <= dim, "cannot fit {rows} orthonormal rows in dimension {dim}");
    let mut q = Matrix::zeros(rows, dim);
    let mut r = 0;
    while r < rows {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for k in 0..r {
            let p = dot(&v, q.row(k));
            v.iter_mut().zip(q.row(k)).for_each(|(x, &u)| *x -= p * u);
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            q.row_mut(r).copy_from_slice(&v);
            r += 1;
        }
    }
    q
}

/// `U diag(s) Q` with random orthogonal `U`, orthonormal-row `Q` and singular values `s ∈ [lo, hi]`.
pub fn random_near_orthonormal(rows: usize, dim: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Matrix {
    let u = random_orthonormal_rows(rows, rows, rng);
    let mut q = random_orthonormal_rows(rows, dim, rng);
    for r in 0..rows {
        let s = rng.random_range(lo..=hi);
        q.row_mut(r).iter_mut().for_each(|x| *x *= s);
    }
    u.matmul(&q).expect("shapes match")
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfTestReport {
    pub trace_cases: usize,
    pub trace_violations: usize,
    pub cond_cases: usize,
    pub cond_vnd_checked: usize,
    pub cond_violations: usize,
    pub f_inverse_max_residual: f64,
    pub passed: bool,
}

/// Randomized sweep of the trace and condition inequalities and the `f⁻¹` residual.
pub fn self_test(seed: u64, trace_cases: usize, cond_cases: usize) -> Result<SelfTestReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace_violations = 0;
    for i in 0..trace_cases {
        let dim = rng.random_range(2..=20);
        let eps = if i % 2 == 0 { 1e-3 } else { 1e-5 };
        let m = random_psd(dim, &mut rng);
        let c = check_trace_lemmas(eps, &m)?;
        if !(c.vnd_holds && c.ldd_holds) {
            trace_violations += 1;
        }
    }
    let mut cond_violations = 0;
    let mut cond_vnd_checked = 0;
    for _ in 0..cond_cases {
        let dim = rng.random_range(2..=15);
        let rows = rng.random_range(1..=dim);
        let a = ProjectionMatrix::new(random_near_orthonormal(rows, dim, 0.7, 1.3, &mut rng))?;
        let c = check_cond_bounds(&a)?;
        cond_vnd_checked += usize::from(c.vnd_checked);
        if !(c.vnd_holds && c.ldd_holds) {
            cond_violations += 1;
        }
    }
    let mut max_res = 0.0f64;
    for k in 0..=1000 {
        let v = 1.0 + 1e-8 + (1.0 - 1e-8) * k as f64 / 1000.0;
        let c = f_inverse(v)?;
        max_res = max_res.max((f_curve(c)? - v).abs());
    }
    Ok(SelfTestReport {
        trace_cases,
        trace_violations,
        cond_cases,
        cond_vnd_checked,
        cond_violations,
        f_inverse_max_residual: max_res,
        passed: trace_violations == 0 && cond_violations == 0 && max_res <= 1e-10,
    })
}

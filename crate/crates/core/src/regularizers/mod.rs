//! Orthogonality-promoting Bregman regularizers.
//!
//! Three divergence families (squared Frobenius, von Neumann, log-determinant)
//! appear in two forms: the nonconvex form `Ω_φ(A) = Γ_φ(AAᵀ, I)` on a
//! projection matrix, and the convex relaxation `Ω̂_φ(M)` on a Mahalanobis
//! matrix. The convex forms are evaluated in full, including the additive
//! constants, so trace inequalities hold without adjustment.
//!
//! The proximal operator of `γ Ω̂_φ` under a PSD constraint decouples over the
//! eigenvalues of its argument; [`prox_scalar`] solves the scalar problems in
//! closed form and [`oracle`] holds an independent brute-force solver.

pub mod oracle;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_apply_eig, sym_eig, wright_omega, EigenDecomposition, Matrix, SymMatrix};
use crate::metric::{MahalanobisMetric, PSD_REL_TOL};

/// Below this, `ηγ` is treated as zero.
pub const DEGENERATE_ETA_GAMMA: f64 = 1e-15;
/// Discriminant magnitude under which the LDD quadratic is bypassed for bisection.
pub const LDD_MARGINAL_DISCRIMINANT: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Sfn,
    Vnd,
    Ldd,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Sfn, Family::Vnd, Family::Ldd];

    pub fn name(self) -> &'static str {
        match self {
            Family::Sfn => "sfn",
            Family::Vnd => "vnd",
            Family::Ldd => "ldd",
        }
    }

    fn needs_epsilon(self) -> bool {
        !matches!(self, Family::Sfn)
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sfn" | "csfn" => Ok(Family::Sfn),
            "vnd" | "cvnd" => Ok(Family::Vnd),
            "ldd" | "cldd" => Ok(Family::Ldd),
            other => Err(Error::InvalidInput(format!("unknown regularizer family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    NonconvexOnA,
    ConvexOnM,
}

/// Which regularizer to apply, with weight `gamma` and smoothing `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub family: Family,
    pub form: Form,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl RegularizerSpec {
    /// Convex regularizer on `M`. `epsilon` is dropped for SFN.
    pub fn convex(family: Family, gamma: f64, epsilon: f64) -> Self {
        RegularizerSpec {
            family,
            form: Form::ConvexOnM,
            gamma,
            epsilon: family.needs_epsilon().then_some(epsilon),
        }
    }

    pub fn nonconvex(family: Family, gamma: f64) -> Self {
        RegularizerSpec { family, form: Form::NonconvexOnA, gamma, epsilon: None }
    }

    /// Plain MDML: the prox reduces to projection onto the PSD cone.
    pub fn unregularized() -> Self {
        Self::convex(Family::Sfn, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        let required = self.form == Form::ConvexOnM && self.family.needs_epsilon();
        match (required, self.epsilon) {
            (true, Some(e)) if e > 0.0 && e < 1.0 => Ok(()),
            (true, Some(e)) => Err(Error::InvalidInput(format!("epsilon must lie in (0, 1), got {e}"))),
            (true, None) => Err(Error::InvalidInput(format!(
                "convex {} regularizer requires epsilon",
                self.family.name()
            ))),
            (false, Some(_)) => Err(Error::InvalidInput(
                "epsilon is only meaningful for convex VND/LDD regularizers".into(),
            )),
            (false, None) => Ok(()),
        }
    }

    /// Smoothing constant; zero where unused.
    pub fn eps(&self) -> f64 {
        self.epsilon.unwrap_or(0.0)
    }

    /// Label like `cvnd` / `ldd`.
    pub fn label(&self) -> String {
        match self.form {
            Form::ConvexOnM => format!("c{}", self.family.name()),
            Form::NonconvexOnA => self.family.name().to_string(),
        }
    }
}

/// One eigenvalue's proximal subproblem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarProxProblem {
    pub lambda_tilde: f64,
    pub eta: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl ScalarProxProblem {
    pub fn validate(&self, family: Family) -> Result<()> {
        if !self.lambda_tilde.is_finite() {
            return Err(Error::InvalidInput("lambda_tilde must be finite".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidInput(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if family.needs_epsilon() && !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidInput(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Per-eigenvalue penalty `h_φ` used by the prox (constants dropped).
pub fn scalar_penalty(family: Family, x: f64, epsilon: f64) -> f64 {
    match family {
        Family::Sfn => (x - 1.0) * (x - 1.0) + x,
        Family::Vnd => (x + epsilon) * (x + epsilon).ln(),
        Family::Ldd => -(x + epsilon).ln() + x * (1.0 / epsilon).ln(),
    }
}

/// `(1/2η)(x−λ̃)² + γ h_φ(x)`.
pub fn prox_objective(family: Family, p: &ScalarProxProblem, x: f64) -> f64 {
    let d = x - p.lambda_tilde;
    let quad = d * d / (2.0 * p.eta);
    if p.gamma == 0.0 {
        return quad;
    }
    quad + p.gamma * scalar_penalty(family, x, p.epsilon)
}

/// Minimizer over `x ≥ 0` of [`prox_objective`].
pub fn prox_scalar(family: Family, p: &ScalarProxProblem) -> Result<f64> {
    p.validate(family)?;
    let eg = p.eta * p.gamma;
    if eg < DEGENERATE_ETA_GAMMA {
        return Ok(p.lambda_tilde.max(0.0));
    }
    let x = match family {
        Family::Sfn => ((p.lambda_tilde + eg) / (1.0 + 2.0 * eg)).max(0.0),
        Family::Vnd => prox_vnd(p, eg)?,
        Family::Ldd => prox_ldd(p, eg),
    };
    Ok(x)
}

fn pick_lower(family: Family, p: &ScalarProxProblem, candidates: &[f64]) -> f64 {
    let mut best = 0.0;
    let mut best_f = prox_objective(family, p, 0.0);
    for &c in candidates {
        let f = prox_objective(family, p, c);
        if f < best_f {
            best = c;
            best_f = f;
        }
    }
    best
}

fn prox_vnd(p: &ScalarProxProblem, eg: f64) -> Result<f64> {
    // stationarity: ηγ ln(x+ε) + x + ηγ − λ̃ = 0, solved with y = (x+ε)/ηγ
    let z = (p.epsilon - eg + p.lambda_tilde) / eg - eg.ln();
    let root = eg * wright_omega(z)? - p.epsilon;
    Ok(pick_lower(Family::Vnd, p, &[root.max(0.0)]))
}

fn prox_ldd(p: &ScalarProxProblem, eg: f64) -> f64 {
    let eps = p.epsilon;
    let log_inv_eps = (1.0 / eps).ln();
    // x² + b x + c = 0 from η(x+ε)·f'(x) = 0
    let b = eps - p.lambda_tilde + eg * log_inv_eps;
    let c = eps * eg * log_inv_eps - eps * p.lambda_tilde - eg;
    let disc = b * b - 4.0 * c;
    if disc.abs() < LDD_MARGINAL_DISCRIMINANT {
        return pick_lower(Family::Ldd, p, &[ldd_bisect(p, log_inv_eps)]);
    }
    if disc < 0.0 {
        return 0.0;
    }
    let sq = disc.sqrt();
    // cancellation-free pair of roots
    let (r1, r2) = if b >= 0.0 {
        let q = -0.5 * (b + sq);
        (q, if q != 0.0 { c / q } else { 0.0 })
    } else {
        let q = 0.5 * (-b + sq);
        (q, if q != 0.0 { c / q } else { 0.0 })
    };
    pick_lower(Family::Ldd, p, &[r1.max(0.0), r2.max(0.0)])
}

fn ldd_bisect(p: &ScalarProxProblem, log_inv_eps: f64) -> f64 {
    let deriv = |x: f64| (x - p.lambda_tilde) / p.eta - p.gamma / (x + p.epsilon) + p.gamma * log_inv_eps;
    if deriv(0.0) >= 0.0 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = p.lambda_tilde.max(0.0) + 10.0;
    while deriv(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Proximal operator of `γ Ω̂_φ` with stepsize `eta`, constrained to the PSD cone.
pub fn prox_matrix(spec: &RegularizerSpec, m_tilde: &SymMatrix, eta: f64) -> Result<MahalanobisMetric> {
    spec.validate()?;
    if spec.form != Form::ConvexOnM {
        return Err(Error::InvalidInput("prox_matrix needs a convex regularizer".into()));
    }
    let eig = sym_eig(m_tilde)?;
    prox_eigen(spec, eig, eta)
}

/// As [`prox_matrix`], reusing a decomposition of `M̃`.
pub fn prox_eigen(spec: &RegularizerSpec, eig: EigenDecomposition, eta: f64) -> Result<MahalanobisMetric> {
    let mut values = Vec::with_capacity(eig.dim());
    for &lambda_tilde in &eig.eigenvalues {
        let p = ScalarProxProblem { lambda_tilde, eta, gamma: spec.gamma, epsilon: spec.eps() };
        values.push(prox_scalar(spec.family, &p)?);
    }
    let mut eig = eig;
    eig.eigenvalues = values;
    sort_descending(&mut eig);
    MahalanobisMetric::from_eigen(eig)
}

fn sort_descending(eig: &mut EigenDecomposition) {
    let n = eig.dim();
    if eig.eigenvalues.windows(2).all(|w| w[0] >= w[1]) {
        return;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for r in 0..n {
            vecs.set(r, new, eig.eigenvectors.get(r, old));
        }
    }
    eig.eigenvalues = values;
    eig.eigenvectors = vecs;
}

fn require_spd(eig: &EigenDecomposition, what: &str) -> Result<()> {
    let min = eig.min_eigenvalue();
    if !(min > 0.0) {
        return Err(Error::DomainError(format!("{what} must be positive definite (λ_min = {min:e})")));
    }
    Ok(())
}

/// `Γ_φ(X, Y)`.
pub fn bregman_divergence(family: Family, x: &SymMatrix, y: &SymMatrix) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::InvalidInput("divergence arguments differ in dimension".into()));
    }
    match family {
        Family::Sfn => Ok(x.sub(y).frobenius_norm().powi(2)),
        Family::Vnd => {
            let ex = sym_eig(x)?;
            let ey = sym_eig(y)?;
            require_spd(&ex, "X")?;
            require_spd(&ey, "Y")?;
            let log_y = spectral_apply_eig(&ey, f64::ln)?;
            let x_log_x: f64 = ex.eigenvalues.iter().map(|l| l * l.ln()).sum();
            Ok(x_log_x - x.inner(&log_y) - x.trace() + y.trace())
        }
        Family::Ldd => {
            let ex = sym_eig(x)?;
            let ey = sym_eig(y)?;
            require_spd(&ex, "X")?;
            require_spd(&ey, "Y")?;
            let y_inv = spectral_apply_eig(&ey, |l| 1.0 / l)?;
            let logdet_x: f64 = ex.eigenvalues.iter().map(|l| l.ln()).sum();
            let logdet_y: f64 = ey.eigenvalues.iter().map(|l| l.ln()).sum();
            Ok(x.inner(&y_inv) - (logdet_x - logdet_y) - x.dim() as f64)
        }
    }
}

/// Relative threshold under which an eigenvalue of `AAᵀ` counts as zero.
const SINGULAR_REL_TOL: f64 = 1e-14;

fn gram_spectrum(a: &Matrix) -> Result<EigenDecomposition> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("projection matrix has non-finite entries".into()));
    }
    sym_eig(&a.gram_rows())
}

fn require_full_row_rank(eig: &EigenDecomposition) -> Result<()> {
    let min = eig.min_eigenvalue();
    if min <= SINGULAR_REL_TOL * eig.max_eigenvalue().max(1.0) {
        return Err(Error::Singular(format!("AAᵀ is rank deficient (λ_min = {min:e})")));
    }
    Ok(())
}

/// `Ω_φ(A) = Γ_φ(AAᵀ, I)`.
pub fn omega_nonconvex(family: Family, a: &Matrix) -> Result<f64> {
    let g = a.gram_rows();
    match family {
        Family::Sfn => {
            let mut d = g;
            d.add_diag(-1.0);
            Ok(d.frobenius_norm().powi(2))
        }
        Family::Vnd | Family::Ldd => {
            let eig = gram_spectrum(a)?;
            require_full_row_rank(&eig)?;
            Ok(nonconvex_from_spectrum(family, &eig.eigenvalues))
        }
    }
}

/// `Ω_φ` as a sum over the eigenvalues of `AAᵀ`.
pub fn nonconvex_from_spectrum(family: Family, eigenvalues: &[f64]) -> f64 {
    eigenvalues
        .iter()
        .map(|&l| match family {
            Family::Sfn => (l - 1.0) * (l - 1.0),
            Family::Vnd => l * l.ln() - l + 1.0,
            Family::Ldd => l - l.ln() - 1.0,
        })
        .sum()
}

/// Gradient of `Ω_φ(A)` with respect to `A`.
pub fn grad_nonconvex(family: Family, a: &Matrix) -> Result<Matrix> {
    let r = a.rows();
    let g = a.gram_rows();
    // dΩ/dA = 2 (dΩ/dG) A for G = AAᵀ
    let dg = match family {
        Family::Sfn => {
            let mut d = g;
            d.add_diag(-1.0);
            d.scale(2.0);
            d
        }
        Family::Vnd => {
            let eig = sym_eig(&g)?;
            require_full_row_rank(&eig)?;
            spectral_apply_eig(&eig, f64::ln)?
        }
        Family::Ldd => {
            let eig = sym_eig(&g)?;
            require_full_row_rank(&eig)?;
            let mut d = spectral_apply_eig(&eig, |l| -1.0 / l)?;
            d.add_diag(1.0);
            d
        }
    };
    let mut out = dg.to_matrix().matmul(a)?;
    out.scale(2.0);
    debug_assert_eq!(out.rows(), r);
    Ok(out)
}

fn convex_spectrum(spec: &RegularizerSpec, m: &SymMatrix) -> Result<EigenDecomposition> {
    spec.validate()?;
    if spec.form != Form::ConvexOnM {
        return Err(Error::InvalidInput("expected a convex regularizer".into()));
    }
    let eig = sym_eig(m)?;
    let min = eig.min_eigenvalue();
    if min < -PSD_REL_TOL * eig.max_eigenvalue().max(1.0) {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    Ok(eig)
}

/// Full-form `Ω̂_φ` as a sum over the eigenvalues of `M` (clamped at zero).
pub fn convex_from_spectrum(spec: &RegularizerSpec, eigenvalues: &[f64]) -> f64 {
    let eps = spec.eps();
    eigenvalues
        .iter()
        .map(|&l| {
            let l = l.max(0.0);
            match spec.family {
                Family::Sfn => (l - 1.0) * (l - 1.0) + l,
                Family::Vnd => {
                    let s = l + eps;
                    s * s.ln() - s + 1.0 + l
                }
                Family::Ldd => {
                    let s = l + eps;
                    s - s.ln() - 1.0 - (1.0 + eps.ln()) * l
                }
            }
        })
        .sum()
}

/// `Ω̂_φ(M)`:
/// CSFN `‖M−I‖²_F + tr M`, CVND `Γ_vnd(M+εI, I) + tr M`,
/// CLDD `Γ_ldd(M+εI, I) − (1 + ln ε) tr M`.
pub fn omega_convex(spec: &RegularizerSpec, m: &SymMatrix) -> Result<f64> {
    if spec.family == Family::Sfn {
        spec.validate()?;
        if spec.form != Form::ConvexOnM {
            return Err(Error::InvalidInput("expected a convex regularizer".into()));
        }
        // PSD check still applies
        convex_spectrum(spec, m)?;
        let mut d = m.clone();
        d.add_diag(-1.0);
        return Ok(d.frobenius_norm().powi(2) + m.trace());
    }
    let eig = convex_spectrum(spec, m)?;
    Ok(convex_from_spectrum(spec, &eig.eigenvalues))
}

/// Gradient of [`omega_convex`].
pub fn grad_convex(spec: &RegularizerSpec, m: &SymMatrix) -> Result<SymMatrix> {
    let eig = convex_spectrum(spec, m)?;
    let eps = spec.eps();
    match spec.family {
        Family::Sfn => {
            let mut g = m.clone();
            g.scale(2.0);
            g.add_diag(-1.0);
            Ok(g)
        }
        Family::Vnd => {
            let mut g = spectral_apply_eig(&eig, |l| (l.max(0.0) + eps).ln())?;
            g.add_diag(1.0);
            Ok(g)
        }
        Family::Ldd => {
            let mut g = spectral_apply_eig(&eig, |l| -1.0 / (l.max(0.0) + eps))?;
            g.add_diag((1.0 / eps).ln());
            Ok(g)
        }
    }
}

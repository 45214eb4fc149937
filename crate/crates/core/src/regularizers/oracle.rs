//! Brute-force reference solver for the scalar prox problems, and the
//! randomized suite comparing it against the closed forms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{prox_objective, prox_scalar, Family, ScalarProxProblem};
use crate::error::Result;

const GRID_POINTS: usize = 100_000;
const GOLDEN_WIDTH: f64 = 1e-10;

/// Minimizer of the prox objective found by a dense grid on
/// `[0, max(10, 3|λ̃|)]` followed by golden-section refinement.
///
/// Relies only on the objective being unimodal on `x ≥ 0`.
pub fn prox_scalar_oracle(family: Family, p: &ScalarProxProblem) -> Result<f64> {
    p.validate(family)?;
    let f = |x: f64| prox_objective(family, p, x);
    let upper = (3.0 * p.lambda_tilde.abs()).max(10.0);
    let step = upper / (GRID_POINTS - 1) as f64;

    let mut best_i = 0;
    let mut best_f = f(0.0);
    for i in 1..GRID_POINTS {
        let v = f(i as f64 * step);
        if v < best_f {
            best_f = v;
            best_i = i;
        }
    }
    let mut a = best_i.saturating_sub(1) as f64 * step;
    let mut b = ((best_i + 1).min(GRID_POINTS - 1)) as f64 * step;

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_WIDTH {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    // the bracket endpoints are candidates too (boundary minimum at 0)
    let mid = 0.5 * (a + b);
    let best = [a, mid, b, best_i as f64 * step]
        .into_iter()
        .min_by(|x, y| f(*x).total_cmp(&f(*y)))
        .unwrap_or(mid);
    Ok(best)
}

/// Settings for the randomized closed-form vs oracle comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ProxSuiteConfig {
    pub families: Vec<Family>,
    pub problems_per_family: usize,
    pub seed: u64,
    /// Draw only `γ = 0` problems.
    pub zero_gamma_only: bool,
    pub objective_tol: f64,
    pub argument_tol: f64,
}

impl Default for ProxSuiteConfig {
    fn default() -> Self {
        ProxSuiteConfig {
            families: Family::ALL.to_vec(),
            problems_per_family: 1000,
            seed: 0,
            zero_gamma_only: false,
            objective_tol: 1e-8,
            argument_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyReport {
    pub family: Family,
    pub problems: usize,
    pub violations: usize,
    /// Largest `f(closed form) − f(oracle)`.
    pub max_objective_gap: f64,
    pub max_argument_gap: f64,
    pub min_output: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProxSuiteReport {
    pub families: Vec<FamilyReport>,
    pub passed: bool,
}

/// Draws problems with `λ̃ ∈ [−5, 5]`, `η ∈ [1e-4, 1]` (log-uniform),
/// `γ ∈ [0, 10]` and `ε ∈ {1e-3, 1e-5, 1e-8}`.
pub fn random_problem(rng: &mut impl Rng, zero_gamma: bool) -> ScalarProxProblem {
    const EPSILONS: [f64; 3] = [1e-3, 1e-5, 1e-8];
    let lambda_tilde = rng.random_range(-5.0..=5.0);
    let eta = 10f64.powf(rng.random_range(-4.0..=0.0));
    let gamma = if zero_gamma { 0.0 } else { rng.random_range(0.0..=10.0) };
    let epsilon = EPSILONS[rng.random_range(0..EPSILONS.len())];
    ScalarProxProblem { lambda_tilde, eta, gamma, epsilon }
}

/// Runs the comparison with the library's [`prox_scalar`].
pub fn run_prox_suite(cfg: &ProxSuiteConfig) -> Result<ProxSuiteReport> {
    run_prox_suite_with(cfg, prox_scalar)
}

/// Runs the comparison against an arbitrary candidate solver.
pub fn run_prox_suite_with<F>(cfg: &ProxSuiteConfig, candidate: F) -> Result<ProxSuiteReport>
where
    F: Fn(Family, &ScalarProxProblem) -> Result<f64>,
{
    let mut families = Vec::with_capacity(cfg.families.len());
    for (k, &family) in cfg.families.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(k as u64));
        let mut rep = FamilyReport {
            family,
            problems: cfg.problems_per_family,
            violations: 0,
            max_objective_gap: f64::NEG_INFINITY,
            max_argument_gap: 0.0,
            min_output: f64::INFINITY,
        };
        for _ in 0..cfg.problems_per_family {
            let p = random_problem(&mut rng, cfg.zero_gamma_only);
            let x = candidate(family, &p)?;
            let x_ref = prox_scalar_oracle(family, &p)?;
            let obj_gap = prox_objective(family, &p, x) - prox_objective(family, &p, x_ref);
            let arg_gap = (x - x_ref).abs();
            rep.max_objective_gap = rep.max_objective_gap.max(obj_gap);
            rep.max_argument_gap = rep.max_argument_gap.max(arg_gap);
            rep.min_output = rep.min_output.min(x);
            let ok = x >= 0.0 && obj_gap <= cfg.objective_tol && arg_gap <= cfg.argument_tol;
            if !ok || !x.is_finite() {
                rep.violations += 1;
            }
        }
        families.push(rep);
    }
    let passed = families.iter().all(|f| f.violations == 0);
    Ok(ProxSuiteReport { families, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_zero_gamma_is_clamp() {
        for l in [-3.0, 0.0, 0.37, 5.0] {
            let p = ScalarProxProblem { lambda_tilde: l, eta: 0.5, gamma: 0.0, epsilon: 1e-5 };
            let x = prox_scalar_oracle(Family::Sfn, &p).unwrap();
            assert!((x - f64::max(l, 0.0)).abs() < 1e-6, "{l}: {x}");
        }
    }

    #[test]
    fn oracle_vnd_anchor() {
        let p = ScalarProxProblem { lambda_tilde: 2.0, eta: 1.0, gamma: 1.0, epsilon: 1e-8 };
        let x = prox_scalar_oracle(Family::Vnd, &p).unwrap();
        assert!((x - 1.0).abs() < 1e-6);
    }

    #[test]
    fn oracle_matches_sfn_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let p = random_problem(&mut rng, false);
            let eg = p.eta * p.gamma;
            let closed = ((p.lambda_tilde + eg) / (1.0 + 2.0 * eg)).max(0.0);
            let x = prox_scalar_oracle(Family::Sfn, &p).unwrap();
            // objective agreement is the sharp check; arguments agree to the flatness of f
            let gap = prox_objective(Family::Sfn, &p, x) - prox_objective(Family::Sfn, &p, closed);
            assert!(gap.abs() <= 1e-8, "{p:?}: gap {gap}");
            assert!((x - closed).abs() <= 1e-6, "{p:?}: {x} vs {closed}");
        }
    }

    #[test]
    fn ldd_single_problem_matches_oracle() {
        let p = ScalarProxProblem { lambda_tilde: 1.0, eta: 0.1, gamma: 1.0, epsilon: 1e-5 };
        let x = prox_scalar(Family::Ldd, &p).unwrap();
        let x_ref = prox_scalar_oracle(Family::Ldd, &p).unwrap();
        assert!((x - x_ref).abs() <= 1e-6, "{x} vs {x_ref}");
    }
}

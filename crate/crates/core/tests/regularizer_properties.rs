use odml::linalg::{psd_factorize, sym_eig, Matrix, SymMatrix};
use odml::regularizers::oracle::{prox_scalar_oracle, random_problem};
use odml::regularizers::{
    bregman_divergence, grad_convex, omega_convex, omega_nonconvex, prox_objective, prox_scalar, Family,
    RegularizerSpec, ScalarProxProblem,
};
use odml::theory::{random_orthonormal_rows, random_psd};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_row_major(rows, cols, data).unwrap()
}

fn gram_cols_minus_identity(a: &Matrix) -> f64 {
    let mut g = a.gram_cols();
    g.add_diag(-1.0);
    g.frobenius_norm().powi(2)
}

fn gram_rows_minus_identity(a: &Matrix) -> f64 {
    let mut g = a.gram_rows();
    g.add_diag(-1.0);
    g.frobenius_norm().powi(2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frobenius_gram_identity(seed in any::<u64>(), r in 1usize..6, extra in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = r + extra;
        let a = random_matrix(r, d, &mut rng);
        let gap = gram_cols_minus_identity(&a) - gram_rows_minus_identity(&a) - (d - r) as f64;
        prop_assert!(gap.abs() <= 1e-8, "gap {}", gap);
    }

    #[test]
    fn prox_never_negative_and_matches_oracle(seed in any::<u64>(), fam in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, false);
        let family = Family::ALL[fam];
        let x = prox_scalar(family, &p).unwrap();
        prop_assert!(x >= 0.0);
        let x_ref = prox_scalar_oracle(family, &p).unwrap();
        let gap = prox_objective(family, &p, x) - prox_objective(family, &p, x_ref);
        prop_assert!(gap <= 1e-8, "{:?} {:?}: gap {}", family, p, gap);
        prop_assert!((x - x_ref).abs() <= 1e-5, "{:?} {:?}: {} vs {}", family, p, x, x_ref);
    }

    #[test]
    fn convex_regularizers_are_convex(seed in any::<u64>(), dim in 2usize..8, t in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m1 = random_psd(dim, &mut rng);
        let m2 = random_psd(dim, &mut rng);
        let mut mix = m1.matrix().clone();
        mix.scale(t);
        mix.axpy(1.0 - t, m2.matrix());
        for spec in [
            RegularizerSpec::convex(Family::Sfn, 1.0, 0.0),
            RegularizerSpec::convex(Family::Vnd, 1.0, 1e-5),
            RegularizerSpec::convex(Family::Ldd, 1.0, 1e-5),
        ] {
            let lhs = omega_convex(&spec, &mix).unwrap();
            let rhs = t * omega_convex(&spec, m1.matrix()).unwrap() + (1.0 - t) * omega_convex(&spec, m2.matrix()).unwrap();
            prop_assert!(lhs <= rhs + 1e-8 * rhs.abs().max(1.0), "{}: {} > {}", spec.label(), lhs, rhs);
        }
    }

    #[test]
    fn nonconvex_regularizers_nonnegative(seed in any::<u64>(), r in 1usize..5, extra in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(r, r + extra, &mut rng);
        for fam in Family::ALL {
            if let Ok(v) = omega_nonconvex(fam, &a) {
                prop_assert!(v >= -1e-10, "{:?}: {}", fam, v);
            }
        }
    }
}

#[test]
fn nonconvex_zero_at_orthonormal_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (r, d) in [(1, 1), (2, 5), (4, 4), (3, 10)] {
        let q = random_orthonormal_rows(r, d, &mut rng);
        for fam in Family::ALL {
            assert!(omega_nonconvex(fam, &q).unwrap().abs() < 1e-10);
        }
    }
}

/// `A = U diag(s) Q` with singular values in `[√0.5, 1.5]`, so `λ_min(AAᵀ) ≥ 0.5`.
fn well_conditioned(r: usize, d: usize, rng: &mut impl Rng) -> Matrix {
    odml::theory::random_near_orthonormal(r, d, 0.5f64.sqrt(), 1.5, rng)
}

#[test]
fn convex_forms_approximate_nonconvex_as_epsilon_shrinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let d = rng.random_range(3..9);
        let r = rng.random_range(1..d);
        let a = well_conditioned(r, d, &mut rng);
        let m = a.gram_cols();
        let id = SymMatrix::identity(d);
        let err = |eps: f64| {
            let mut shifted = m.clone();
            shifted.add_diag(eps);
            let dead = (d - r) as f64;
            let vnd = bregman_divergence(Family::Vnd, &shifted, &id).unwrap() - dead;
            let ldd = bregman_divergence(Family::Ldd, &shifted, &id).unwrap() + dead * eps.ln() + dead;
            (
                (omega_nonconvex(Family::Vnd, &a).unwrap() - vnd).abs(),
                (omega_nonconvex(Family::Ldd, &a).unwrap() - ldd).abs(),
            )
        };
        let (v3, l3) = err(1e-3);
        let (v6, l6) = err(1e-6);
        assert!(v6 < v3 && v6 < 1e-3, "vnd: {v6} vs {v3}");
        assert!(l6 < l3 && l6 < 1e-3, "ldd: {l6} vs {l3}");
    }
}

fn central_difference(spec: &RegularizerSpec, m: &SymMatrix, i: usize, j: usize, h: f64) -> f64 {
    // perturb the symmetric pair (i, j)/(j, i) together
    let bump = |s: f64| {
        let mut p = m.clone();
        p.set_sym(i, j, m.get(i, j) + s);
        omega_convex(spec, &p).unwrap()
    };
    let df = (bump(h) - bump(-h)) / (2.0 * h);
    if i == j {
        df
    } else {
        df / 2.0
    }
}

#[test]
fn convex_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let d = rng.random_range(2..7);
        // strictly positive definite so the finite-difference stencil stays in the domain
        let mut m = random_psd(d, &mut rng).matrix().clone();
        m.add_diag(0.5);
        for spec in [
            RegularizerSpec::convex(Family::Sfn, 1.0, 0.0),
            RegularizerSpec::convex(Family::Vnd, 1.0, 1e-3),
            RegularizerSpec::convex(Family::Ldd, 1.0, 1e-3),
        ] {
            let g = grad_convex(&spec, &m).unwrap();
            for i in 0..d {
                for j in i..d {
                    let fd = central_difference(&spec, &m, i, j, 1e-6);
                    let scale = g.get(i, j).abs().max(1.0);
                    assert!((fd - g.get(i, j)).abs() / scale < 1e-5, "{} ({i},{j}): {fd} vs {}", spec.label(), g.get(i, j));
                }
            }
        }
    }
}

#[test]
fn factor_reproduces_psd_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let d = rng.random_range(1..10);
        let m = random_psd(d, &mut rng);
        let l = psd_factorize(m.matrix(), 1e-12).unwrap();
        let back = l.gram_cols();
        let tol = 1e-9 * m.matrix().frobenius_norm().max(1.0);
        assert!(back.max_abs_diff(m.matrix()) <= tol);
        assert_eq!(l.rows(), sym_eig(m.matrix()).unwrap().numerical_rank(1e-12));
    }
}

#[test]
fn prox_gamma_zero_is_clamp() {
    for l in [-2.0, -1e-9, 0.0, 0.3, 4.0] {
        for fam in Family::ALL {
            let p = ScalarProxProblem { lambda_tilde: l, eta: 0.1, gamma: 0.0, epsilon: 1e-5 };
            assert_eq!(prox_scalar(fam, &p).unwrap(), f64::max(l, 0.0));
        }
    }
}

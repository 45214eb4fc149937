use odml::data::Dataset;
use odml::eval::*;
use odml::linalg::{Matrix, SymMatrix};
use odml::theory::random_psd;
use odml::{DistanceMetric, Error, MahalanobisMetric, ProjectionMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn line_dataset(xs: &[f64], labels: &[i64]) -> Dataset {
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    Dataset::new(Matrix::from_rows(&rows).unwrap(), labels.to_vec()).unwrap()
}

#[test]
fn four_point_hand_enumeration() {
    // points 0, 1 (class a) and 3, 4.5 (class b); M = I
    let d = line_dataset(&[0.0, 1.0, 3.0, 4.5], &[0, 0, 1, 1]);
    let m = MahalanobisMetric::identity(1);
    // ordered pairs: same-class distances 1, 1, 2.25, 2.25; cross-class 9, 20.25, 4, 12.25 (each twice)
    // every same-class distance is below every cross-class one
    assert_eq!(retrieval_auc(&m, &d, &QueryFilter::All, AucMode::Roc).unwrap(), 1.0);

    // interleave: 0, 2 (class a) and 1, 5 (class b)
    let d = line_dataset(&[0.0, 2.0, 1.0, 5.0], &[0, 1, 0, 1]);
    // positives (same class): |0−1|²=1, |2−5|²=9; negatives: 4, 25, 1, 16 (ordered pairs double all)
    // Mann-Whitney by hand: positive 1 ties negative 1 (0.5), beats 4, 16, 25 (3) → 3.5;
    // positive 9 beats 16, 25 (2) → 2. total 5.5 / (2·4) = 0.6875
    let auc = retrieval_auc(&m, &d, &QueryFilter::All, AucMode::Roc).unwrap();
    assert!((auc - 0.6875).abs() < 1e-12, "{auc}");
}

#[test]
fn empty_selection_is_an_error() {
    let d = line_dataset(&[0.0, 1.0, 3.0], &[0, 0, 1]);
    let filter = QueryFilter::Labels([7].into_iter().collect());
    assert!(matches!(
        retrieval_auc(&MahalanobisMetric::identity(1), &d, &filter, AucMode::Roc),
        Err(Error::EmptySelection)
    ));
}

#[test]
fn group_pairs_partition_all_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let labels: Vec<i64> = (0..30).map(|i| if i < 20 { 0 } else { 1 + (i % 3) as i64 }).collect();
    let d = Dataset::new(Matrix::from_rows(&rows).unwrap(), labels).unwrap();
    let groups = ClassGroups::from_counts(&d, 10);
    let m = MahalanobisMetric::identity(2);
    let key = |p: &ScoredPair| (p.query, p.candidate);
    let all: Vec<_> = retrieval_pairs(&m, &d, &QueryFilter::All).unwrap().iter().map(key).collect();
    let mut parts: Vec<_> = retrieval_pairs(&m, &d, &groups.frequent_filter()).unwrap().iter().map(key).collect();
    let n_freq = parts.len();
    parts.extend(retrieval_pairs(&m, &d, &groups.infrequent_filter()).unwrap().iter().map(key));
    assert_eq!(parts.len(), all.len());
    let mut sorted = parts.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), parts.len(), "groups overlap");
    assert_eq!(n_freq, 20 * 29);
}

#[test]
fn projection_and_mahalanobis_auc_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = Matrix::from_row_major(2, 3, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let p = ProjectionMatrix::new(a).unwrap();
    let m = p.to_mahalanobis().unwrap();
    let rows: Vec<Vec<f64>> = (0..24).map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let d = Dataset::new(Matrix::from_rows(&rows).unwrap(), (0..24).map(|i| i % 3).collect()).unwrap();
    let x = retrieval_auc(&p, &d, &QueryFilter::All, AucMode::Roc).unwrap();
    let y = retrieval_auc(&m, &d, &QueryFilter::All, AucMode::Roc).unwrap();
    assert!((x - y).abs() < 1e-12);
}

#[test]
fn imbalance_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let dim = rng.random_range(2..6);
        let k = rng.random_range(2..7);
        let mut m = random_psd(dim, &mut rng).matrix().clone();
        m.add_diag(0.1);
        let metric = MahalanobisMetric::from_matrix(m.clone()).unwrap();
        let means = Matrix::from_row_major(k, dim, (0..k * dim).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let mut ds = Vec::new();
        for j in 0..k {
            for l in 0..k {
                if j != l {
                    let z: Vec<f64> = means.row(j).iter().zip(means.row(l)).map(|(a, b)| a - b).collect();
                    ds.push(m.quad_form(&z));
                }
            }
        }
        let want = ds.iter().cloned().fold(0.0, f64::max) / ds.iter().cloned().fold(f64::INFINITY, f64::min);
        let got = imbalance_factor(&metric, &means).unwrap();
        assert!((got - want).abs() <= 1e-10 * want);
    }
}

#[test]
fn npv_of_constructed_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let q = odml::theory::random_orthonormal_rows(3, 3, &mut rng);
    let mut m = SymMatrix::zeros(3);
    for (k, lam) in [1.0, 1e-3, 1e-12].into_iter().enumerate() {
        m.add_outer(q.row(k), lam);
    }
    let metric = MahalanobisMetric::from_matrix(m).unwrap();
    assert_eq!(npv(&metric, 1e-8), 2);
    assert_eq!(npv(&MahalanobisMetric::identity(5), 1e-8), 5);
}

#[test]
fn report_serializes_with_expected_fields() {
    let d = line_dataset(&[0.0, 0.1, 3.0, 3.2, 6.0, 6.3], &[0, 0, 1, 1, 2, 2]);
    let rep = evaluate(&MahalanobisMetric::identity(1), &d, &d, &EvalConfig { frequent_threshold: 1, ..Default::default() }).unwrap();
    let json: serde_json::Value = serde_json::to_value(&rep).unwrap();
    for key in ["auc_all", "auc_frequent", "auc_infrequent", "balance_score", "npv", "compactness_score", "imbalance_factor", "train_auc", "gap"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert_eq!(rep.npv, 1);
    assert_eq!(rep.gap, 0.0);
    assert!(rep.to_csv().starts_with(EVAL_CSV_HEADER));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auc_invariant_under_monotone_transform(seed in any::<u64>(), n in 2usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scores: Vec<(f64, bool)> = (0..n).map(|_| ((rng.random_range(0..20) as f64) * 0.1, rng.random_bool(0.4))).collect();
        scores[0].1 = true;
        scores[1].1 = false;
        let t: Vec<(f64, bool)> = scores.iter().map(|&(s, l)| ((3.0 * s).exp() + 2.0, l)).collect();
        for mode in [AucMode::Roc, AucMode::Pr] {
            let a = auc_from_scores(&scores, mode).unwrap();
            let b = auc_from_scores(&t, mode).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn roc_auc_equals_mann_whitney(seed in any::<u64>(), n in 2usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scores: Vec<(f64, bool)> = (0..n).map(|_| (rng.random_range(0..10) as f64, rng.random_bool(0.5))).collect();
        scores[0].1 = true;
        scores[1].1 = false;
        let (mut wins, mut pairs) = (0.0, 0.0);
        for p in scores.iter().filter(|s| s.1) {
            for q in scores.iter().filter(|s| !s.1) {
                pairs += 1.0;
                wins += if p.0 < q.0 { 1.0 } else if p.0 == q.0 { 0.5 } else { 0.0 };
            }
        }
        prop_assert!((auc_from_scores(&scores, AucMode::Roc).unwrap() - wins / pairs).abs() < 1e-12);
    }

    #[test]
    fn imbalance_invariant_under_scaling(seed in any::<u64>(), s in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = random_psd(3, &mut rng).matrix().clone();
        m.add_diag(0.2);
        let means = Matrix::from_row_major(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let a = imbalance_factor(&MahalanobisMetric::from_matrix(m.clone()).unwrap(), &means).unwrap();
        m.scale(s);
        let b = imbalance_factor(&MahalanobisMetric::from_matrix(m).unwrap(), &means).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a);
        prop_assert!(a >= 1.0);
    }

    #[test]
    fn balance_of_equal_aucs_is_zero(a in 1e-6f64..1.0) {
        prop_assert_eq!(balance_score(a, a).unwrap(), 0.0);
    }
}

#[allow(dead_code)]
fn assert_metric<T: DistanceMetric>(_: &T) {}

//! Retrieval evaluation and the summary scores built on it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::linalg::{sq_dist, Matrix, DEFAULT_RANK_TOL};
use crate::metric::DistanceMetric;

/// Class-mean distances at or below this are treated as coincident.
pub const DEGENERATE_MEAN_TOL: f64 = 1e-12;

/// Classes with more than this many examples count as frequent by default.
pub const DEFAULT_FREQUENT_THRESHOLD: usize = 1000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AucMode {
    /// Area under the ROC curve.
    #[default]
    Roc,
    /// Area under the precision-recall curve.
    Pr,
}

/// Which test examples act as queries.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryFilter {
    All,
    Labels(BTreeSet<Label>),
}

impl QueryFilter {
    pub fn accepts(&self, label: Label) -> bool {
        match self {
            QueryFilter::All => true,
            QueryFilter::Labels(s) => s.contains(&label),
        }
    }
}

/// Split of class labels into frequent and infrequent by a count threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGroups {
    pub frequent: BTreeSet<Label>,
    pub infrequent: BTreeSet<Label>,
}

impl ClassGroups {
    /// A class is frequent when it has more than `threshold` examples in `d`.
    pub fn from_counts(d: &Dataset, threshold: usize) -> Self {
        let mut g = ClassGroups { frequent: BTreeSet::new(), infrequent: BTreeSet::new() };
        for (label, n) in d.class_counts() {
            if n > threshold {
                g.frequent.insert(label);
            } else {
                g.infrequent.insert(label);
            }
        }
        g
    }

    pub fn frequent_filter(&self) -> QueryFilter {
        QueryFilter::Labels(self.frequent.clone())
    }

    pub fn infrequent_filter(&self) -> QueryFilter {
        QueryFilter::Labels(self.infrequent.clone())
    }
}

/// One query-candidate pair scored by the metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub query: usize,
    pub candidate: usize,
    pub sq_distance: f64,
    pub same_class: bool,
}

fn embedded_points(metric: &impl DistanceMetric, d: &Dataset) -> Result<Matrix> {
    if metric.dim() != d.dim() {
        return Err(Error::InvalidInput(format!("metric dimension {} but data dimension {}", metric.dim(), d.dim())));
    }
    let l = metric.embedding(DEFAULT_RANK_TOL)?;
    let mut out = Matrix::zeros(d.len(), l.rows());
    for i in 0..d.len() {
        let v = l.mul_vec(d.row(i));
        out.row_mut(i).copy_from_slice(&v);
    }
    Ok(out)
}

/// Every (query, candidate) pair the AUC is computed over: queries pass the
/// filter, candidates are all other test examples.
pub fn retrieval_pairs(metric: &impl DistanceMetric, test: &Dataset, filter: &QueryFilter) -> Result<Vec<ScoredPair>> {
    if test.len() < 2 {
        return Err(Error::InvalidDataset("retrieval needs at least 2 test examples".into()));
    }
    let emb = embedded_points(metric, test)?;
    let mut pairs = Vec::new();
    for q in (0..test.len()).filter(|&q| filter.accepts(test.label(q))) {
        for c in (0..test.len()).filter(|&c| c != q) {
            pairs.push(ScoredPair {
                query: q,
                candidate: c,
                sq_distance: sq_dist(emb.row(q), emb.row(c)),
                same_class: test.label(q) == test.label(c),
            });
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(pairs)
}

/// Area under the curve traced by thresholding distances; tied distances fall
/// on the same side of every threshold.
pub fn auc_from_scores(scores: &[(f64, bool)], mode: AucMode) -> Result<f64> {
    let pos = scores.iter().filter(|s| s.1).count() as f64;
    let neg = scores.len() as f64 - pos;
    if pos == 0.0 || (mode == AucMode::Roc && neg == 0.0) {
        return Err(Error::DomainError("AUC needs both same-class and cross-class pairs".into()));
    }
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (mut tp, mut fp) = (0.0, 0.0);
    let mut area = 0.0;
    let mut prev_x = 0.0;
    let mut prev_y = match mode {
        AucMode::Roc => 0.0,
        AucMode::Pr => f64::NAN,
    };
    let mut i = 0;
    while i < sorted.len() {
        let d = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == d {
            if sorted[i].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let (x, y) = match mode {
            AucMode::Roc => (fp / neg, tp / pos),
            AucMode::Pr => (tp / pos, tp / (tp + fp)),
        };
        if prev_y.is_nan() {
            // the PR curve starts at recall 0 with the first observed precision
            prev_y = y;
        }
        area += (x - prev_x) * (y + prev_y) / 2.0;
        prev_x = x;
        prev_y = y;
    }
    Ok(area.clamp(0.0, 1.0))
}

/// Retrieval AUC with each filtered test example querying the rest.
pub fn retrieval_auc(metric: &impl DistanceMetric, test: &Dataset, filter: &QueryFilter, mode: AucMode) -> Result<f64> {
    let pairs = retrieval_pairs(metric, test, filter)?;
    let scores: Vec<(f64, bool)> = pairs.iter().map(|p| (p.sq_distance, p.same_class)).collect();
    auc_from_scores(&scores, mode)
}

/// `|auc_if / auc_f − 1|`.
pub fn balance_score(auc_if: f64, auc_f: f64) -> Result<f64> {
    if !(auc_f > 0.0) {
        return Err(Error::DomainError(format!("frequent-class AUC must be positive, got {auc_f}")));
    }
    Ok((auc_if / auc_f - 1.0).abs())
}

/// `auc_all / npv`.
pub fn compactness_score(auc_all: f64, npv: usize) -> Result<f64> {
    if npv == 0 {
        return Err(Error::DomainError("compactness needs at least one projection vector".into()));
    }
    Ok(auc_all / npv as f64)
}

/// Largest over smallest metric distance between distinct class means (rows of `means`).
pub fn imbalance_factor(metric: &impl DistanceMetric, means: &Matrix) -> Result<f64> {
    let k = means.rows();
    if k < 2 {
        return Err(Error::InvalidInput("imbalance factor needs at least 2 class means".into()));
    }
    if means.cols() != metric.dim() {
        return Err(Error::InvalidInput("class means and metric differ in dimension".into()));
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for j in 0..k {
        for l in (j + 1)..k {
            let d = metric.sq_distance(means.row(j), means.row(l));
            if d <= DEGENERATE_MEAN_TOL {
                return Err(Error::DegenerateMeans(format!("classes {j} and {l} are {d:e} apart")));
            }
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    Ok(hi / lo)
}

/// Number of projection vectors the metric uses.
pub fn npv(metric: &impl DistanceMetric, rank_tol: f64) -> usize {
    metric.npv(rank_tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub rank_tol: f64,
    /// Classes with more training examples than this are frequent.
    pub frequent_threshold: usize,
    pub auc_mode: AucMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { rank_tol: DEFAULT_RANK_TOL, frequent_threshold: DEFAULT_FREQUENT_THRESHOLD, auc_mode: AucMode::Roc }
    }
}

/// Scores for one learned metric. Group-level fields are `None` when the
/// group is empty or the score is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc_all: f64,
    pub auc_frequent: Option<f64>,
    pub auc_infrequent: Option<f64>,
    pub balance_score: Option<f64>,
    pub npv: usize,
    pub compactness_score: Option<f64>,
    pub imbalance_factor: Option<f64>,
    pub train_auc: f64,
    pub gap: f64,
}

pub const EVAL_CSV_HEADER: &str =
    "auc_all,auc_frequent,auc_infrequent,balance_score,npv,compactness_score,imbalance_factor,train_auc,gap";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

impl EvalReport {
    /// Comma-separated values in [`EVAL_CSV_HEADER`] order.
    pub fn csv_row(&self) -> String {
        format!(
            "{:?},{},{},{},{},{},{},{:?},{:?}",
            self.auc_all,
            opt(self.auc_frequent),
            opt(self.auc_infrequent),
            opt(self.balance_score),
            self.npv,
            opt(self.compactness_score),
            opt(self.imbalance_factor),
            self.train_auc,
            self.gap
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{EVAL_CSV_HEADER}\n{}\n", self.csv_row())
    }
}

fn group_auc(metric: &impl DistanceMetric, test: &Dataset, labels: &BTreeSet<Label>, mode: AucMode) -> Result<Option<f64>> {
    if labels.is_empty() {
        return Ok(None);
    }
    match retrieval_auc(metric, test, &QueryFilter::Labels(labels.clone()), mode) {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptySelection | Error::DomainError(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Full report; class groups and class means come from `train`.
pub fn evaluate(metric: &impl DistanceMetric, train: &Dataset, test: &Dataset, cfg: &EvalConfig) -> Result<EvalReport> {
    let groups = ClassGroups::from_counts(train, cfg.frequent_threshold);
    let auc_all = retrieval_auc(metric, test, &QueryFilter::All, cfg.auc_mode)?;
    let auc_frequent = group_auc(metric, test, &groups.frequent, cfg.auc_mode)?;
    let auc_infrequent = group_auc(metric, test, &groups.infrequent, cfg.auc_mode)?;
    let balance = match (auc_infrequent, auc_frequent) {
        (Some(i), Some(f)) => balance_score(i, f).ok(),
        _ => None,
    };
    let npv = metric.npv(cfg.rank_tol);
    let (_, means) = train.class_means();
    let imbalance = match imbalance_factor(metric, &means) {
        Ok(v) => Some(v),
        Err(Error::DegenerateMeans(_)) => None,
        Err(e) => return Err(e),
    };
    let train_auc = retrieval_auc(metric, train, &QueryFilter::All, cfg.auc_mode)?;
    Ok(EvalReport {
        auc_all,
        auc_frequent,
        auc_infrequent,
        balance_score: balance,
        npv,
        compactness_score: compactness_score(auc_all, npv).ok(),
        imbalance_factor: imbalance,
        train_auc,
        gap: train_auc - auc_all,
    })
}

//! Labelled datasets, preprocessing and pair sampling.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, Matrix, SymMatrix};

pub type Label = i64;

/// `N×D` features with one integer class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<Label>,
    class_index: BTreeMap<Label, Vec<usize>>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<Label>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if labels.len() < 2 {
            return Err(Error::InvalidDataset("a dataset needs at least 2 examples".into()));
        }
        if features.cols() == 0 {
            return Err(Error::InvalidDataset("a dataset needs at least one feature".into()));
        }
        if !features.is_finite() {
            return Err(Error::InvalidDataset("non-finite feature value".into()));
        }
        let mut class_index: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            class_index.entry(l).or_default().push(i);
        }
        Ok(Dataset { features, labels, class_index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn class_index(&self) -> &BTreeMap<Label, Vec<usize>> {
        &self.class_index
    }

    pub fn num_classes(&self) -> usize {
        self.class_index.len()
    }

    pub fn class_counts(&self) -> BTreeMap<Label, usize> {
        self.class_index.iter().map(|(&k, v)| (k, v.len())).collect()
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(Matrix::from_row_major(indices.len(), d, data)?, labels)
    }

    /// Per-class feature means, in ascending label order.
    pub fn class_means(&self) -> (Vec<Label>, Matrix) {
        let d = self.dim();
        let mut means = Matrix::zeros(self.num_classes(), d);
        let mut labels = Vec::with_capacity(self.num_classes());
        for (k, (&label, idx)) in self.class_index.iter().enumerate() {
            labels.push(label);
            let row = means.row_mut(k);
            for &i in idx {
                for (m, &x) in row.iter_mut().zip(self.features.row(i)) {
                    *m += x;
                }
            }
            let n = idx.len() as f64;
            row.iter_mut().for_each(|m| *m /= n);
        }
        (labels, means)
    }

    fn require_classes(&self, k: usize) -> Result<()> {
        if self.num_classes() < k {
            return Err(Error::InvalidDataset(format!(
                "need at least {k} classes, found {}",
                self.num_classes()
            )));
        }
        Ok(())
    }
}

/// Reads `label,f1,...,fD` rows. With `has_header` the first line is skipped.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| Error::Io(e.to_string()))?;

    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut width: Option<usize> = None;
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() < 2 {
            return Err(Error::Parse { line, message: "expected a label and at least one feature".into() });
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} columns, found {}", rec.len()),
                })
            }
            _ => {}
        }
        let label: Label = rec[0]
            .parse()
            .map_err(|_| Error::Parse { line, message: format!("invalid class id '{}'", &rec[0]) })?;
        labels.push(label);
        for field in rec.iter().skip(1) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse { line, message: format!("invalid feature value '{field}'") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, message: format!("non-finite feature value '{field}'") });
            }
            data.push(v);
        }
    }
    let d = width.map_or(0, |w| w - 1);
    let n = labels.len();
    let ds = Dataset::new(Matrix::from_row_major(n, d, data)?, labels)?;
    ds.require_classes(2)?;
    Ok(ds)
}

/// Writes the dataset in the format read by [`load_csv`], without a header.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    for i in 0..d.len() {
        write!(out, "{}", d.label(i))?;
        for v in d.row(i) {
            // shortest representation that round-trips exactly
            write!(out, ",{v:?}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Maps every feature column onto `[0, 1]`; constant columns become 0.
pub fn minmax_normalize(d: &Dataset) -> Dataset {
    let (n, dim) = (d.len(), d.dim());
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for i in 0..n {
        for (j, &v) in d.row(i).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let mut features = d.features.clone();
    for i in 0..n {
        for (j, v) in features.row_mut(i).iter_mut().enumerate() {
            let range = hi[j] - lo[j];
            *v = if range > 0.0 { (*v - lo[j]) / range } else { 0.0 };
        }
    }
    Dataset { features, labels: d.labels.clone(), class_index: d.class_index.clone() }
}

/// Principal components of a feature matrix.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `k×D`, rows are unit principal directions.
    pub components: Matrix,
    /// Variance along each component (descending).
    pub variances: Vec<f64>,
    /// Sum of all covariance eigenvalues.
    pub total_variance: f64,
}

impl Pca {
    pub fn fit(features: &Matrix, target_dim: usize) -> Result<Pca> {
        let (n, d) = (features.rows(), features.cols());
        if target_dim == 0 || target_dim > n.min(d) {
            return Err(Error::InvalidInput(format!(
                "target dimension {target_dim} must lie in 1..={}",
                n.min(d)
            )));
        }
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, &x) in mean.iter_mut().zip(features.row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = SymMatrix::zeros(d);
        let mut z = vec![0.0; d];
        for i in 0..n {
            for ((zj, &x), &m) in z.iter_mut().zip(features.row(i)).zip(&mean) {
                *zj = x - m;
            }
            cov.add_outer(&z, 1.0);
        }
        cov.scale(1.0 / (n.max(2) - 1) as f64);
        let eig = sym_eig(&cov)?;
        let mut components = Matrix::zeros(target_dim, d);
        for k in 0..target_dim {
            for j in 0..d {
                components.set(k, j, eig.eigenvectors.get(j, k));
            }
        }
        Ok(Pca {
            mean,
            components,
            variances: eig.eigenvalues[..target_dim].to_vec(),
            total_variance: eig.eigenvalues.iter().map(|v| v.max(0.0)).sum(),
        })
    }

    pub fn transform(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.mean.len() {
            return Err(Error::InvalidInput("feature dimension does not match the PCA fit".into()));
        }
        let k = self.components.rows();
        let mut out = Matrix::zeros(features.rows(), k);
        let mut z = vec![0.0; self.mean.len()];
        for i in 0..features.rows() {
            for ((zj, &x), &m) in z.iter_mut().zip(features.row(i)).zip(&self.mean) {
                *zj = x - m;
            }
            let proj = self.components.mul_vec(&z);
            out.row_mut(i).copy_from_slice(&proj);
        }
        Ok(out)
    }

    /// Fraction of total variance kept by the retained components.
    pub fn retained_variance_ratio(&self) -> f64 {
        if self.total_variance <= 0.0 {
            return 1.0;
        }
        self.variances.iter().map(|v| v.max(0.0)).sum::<f64>() / self.total_variance
    }
}

/// Projects the (mean-centred) features onto the top `target_dim` principal directions.
pub fn pca_reduce(d: &Dataset, target_dim: usize) -> Result<Dataset> {
    let pca = Pca::fit(&d.features, target_dim)?;
    Ok(Dataset { features: pca.transform(&d.features)?, labels: d.labels.clone(), class_index: d.class_index.clone() })
}

/// Similar and dissimilar example pairs for one stochastic step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairBatch {
    pub similar: Vec<(Vec<f64>, Vec<f64>)>,
    pub dissimilar: Vec<(Vec<f64>, Vec<f64>)>,
}

impl PairBatch {
    pub fn from_indices(d: &Dataset, pairs: &PairIndices) -> PairBatch {
        let mat = |v: &[(usize, usize)]| v.iter().map(|&(i, j)| (d.row(i).to_vec(), d.row(j).to_vec())).collect();
        PairBatch { similar: mat(&pairs.similar), dissimilar: mat(&pairs.dissimilar) }
    }

    pub fn len(&self) -> usize {
        self.similar.len() + self.dissimilar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn diffs(pairs: &[(Vec<f64>, Vec<f64>)]) -> Vec<Vec<f64>> {
        pairs.iter().map(|(x, y)| x.iter().zip(y).map(|(a, b)| a - b).collect()).collect()
    }

    /// `x − y` for every pair, similar then dissimilar.
    pub fn differences(&self) -> PairDiffs {
        PairDiffs { similar: Self::diffs(&self.similar), dissimilar: Self::diffs(&self.dissimilar) }
    }
}

/// Pair differences `z = x − y`, the only thing the losses need.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairDiffs {
    pub similar: Vec<Vec<f64>>,
    pub dissimilar: Vec<Vec<f64>>,
}

impl PairDiffs {
    pub fn from_indices(d: &Dataset, pairs: &PairIndices) -> PairDiffs {
        let diff = |v: &[(usize, usize)]| {
            v.iter()
                .map(|&(i, j)| d.row(i).iter().zip(d.row(j)).map(|(a, b)| a - b).collect())
                .collect()
        };
        PairDiffs { similar: diff(&pairs.similar), dissimilar: diff(&pairs.dissimilar) }
    }

    pub fn dim(&self) -> Option<usize> {
        self.similar.first().or(self.dissimilar.first()).map(Vec::len)
    }
}

/// Row-index pairs behind a [`PairBatch`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairIndices {
    pub similar: Vec<(usize, usize)>,
    pub dissimilar: Vec<(usize, usize)>,
}

/// Samples pair indices: half similar pairs (uniform over same-class pairs),
/// half dissimilar (uniform over cross-class pairs), with replacement.
#[derive(Debug, Clone)]
pub struct PairSampler {
    classes: Vec<Vec<usize>>,
    same_class: Option<WeightedIndex<f64>>,
    cross_class: WeightedIndex<f64>,
    sizes: Vec<f64>,
}

impl PairSampler {
    pub fn new(d: &Dataset) -> Result<Self> {
        d.require_classes(2)?;
        let classes: Vec<Vec<usize>> = d.class_index.values().cloned().collect();
        let n = d.len() as f64;
        let sizes: Vec<f64> = classes.iter().map(|c| c.len() as f64).collect();
        let same: Vec<f64> = sizes.iter().map(|&s| s * (s - 1.0) / 2.0).collect();
        let same_class = if same.iter().any(|&w| w > 0.0) { WeightedIndex::new(&same).ok() } else { None };
        let cross: Vec<f64> = sizes.iter().map(|&s| s * (n - s)).collect();
        let cross_class = WeightedIndex::new(&cross)
            .map_err(|e| Error::InvalidDataset(format!("cannot sample dissimilar pairs: {e}")))?;
        Ok(PairSampler { classes, same_class, cross_class, sizes })
    }

    pub fn sample_similar(&self, rng: &mut impl Rng) -> Result<(usize, usize)> {
        let dist = self
            .same_class
            .as_ref()
            .ok_or_else(|| Error::InvalidDataset("no class has two members to form a similar pair".into()))?;
        let c = &self.classes[dist.sample(rng)];
        let a = rng.random_range(0..c.len());
        let mut b = rng.random_range(0..c.len() - 1);
        if b >= a {
            b += 1;
        }
        Ok((c[a], c[b]))
    }

    pub fn sample_dissimilar(&self, rng: &mut impl Rng) -> (usize, usize) {
        let k = self.cross_class.sample(rng);
        let first = self.classes[k][rng.random_range(0..self.classes[k].len())];
        // partner class proportional to its size, excluding k
        let total: f64 = self.sizes.iter().enumerate().filter(|&(l, _)| l != k).map(|(_, s)| s).sum();
        let mut r = rng.random_range(0.0..total);
        let mut l_pick = if k == 0 { 1 } else { 0 };
        for (l, &s) in self.sizes.iter().enumerate() {
            if l == k {
                continue;
            }
            l_pick = l;
            if r < s {
                break;
            }
            r -= s;
        }
        let c = &self.classes[l_pick];
        (first, c[rng.random_range(0..c.len())])
    }

    pub fn sample(&self, batch_size: usize, rng: &mut impl Rng) -> Result<PairIndices> {
        if batch_size < 2 || !batch_size.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("batch size must be even and >= 2, got {batch_size}")));
        }
        let half = batch_size / 2;
        let mut out = PairIndices::default();
        for _ in 0..half {
            out.similar.push(self.sample_similar(rng)?);
        }
        for _ in 0..half {
            out.dissimilar.push(self.sample_dissimilar(rng));
        }
        Ok(out)
    }
}

/// `batch_size/2` similar and `batch_size/2` dissimilar pairs.
pub fn sample_batch(d: &Dataset, batch_size: usize, rng: &mut impl Rng) -> Result<PairBatch> {
    let idx = PairSampler::new(d)?.sample(batch_size, rng)?;
    Ok(PairBatch::from_indices(d, &idx))
}

/// Every unordered same-class pair and every cross-class pair.
pub fn all_pairs(d: &Dataset) -> Result<PairIndices> {
    d.require_classes(2)?;
    let mut out = PairIndices::default();
    for i in 0..d.len() {
        for j in (i + 1)..d.len() {
            if d.labels[i] == d.labels[j] {
                out.similar.push((i, j));
            } else {
                out.dissimilar.push((i, j));
            }
        }
    }
    if out.similar.is_empty() {
        return Err(Error::InvalidDataset("no class has two members to form a similar pair".into()));
    }
    Ok(out)
}

/// Duplicates rows of smaller classes (uniformly, with replacement) until every
/// class matches the largest one. Added rows are appended in label order.
pub fn oversample(d: &Dataset, rng: &mut impl Rng) -> Dataset {
    let target = d.class_index.values().map(Vec::len).max().unwrap_or(0);
    let mut order: Vec<usize> = (0..d.len()).collect();
    for idx in d.class_index.values() {
        for _ in idx.len()..target {
            order.push(idx[rng.random_range(0..idx.len())]);
        }
    }
    d.subset(&order).expect("subset of a valid dataset is valid")
}

/// Stratified train/test split; every class with at least two members lands in both parts.
pub fn stratified_split(d: &Dataset, test_fraction: f64, rng: &mut impl Rng) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for idx in d.class_index.values() {
        let mut idx = idx.clone();
        idx.shuffle(rng);
        let n = idx.len();
        let mut n_test = (test_fraction * n as f64).round() as usize;
        if n >= 2 {
            n_test = n_test.clamp(1, n - 1);
        } else {
            n_test = 0;
        }
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((d.subset(&train)?, d.subset(&test)?))
}

/// Class centres for the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeansSpec {
    Explicit(Vec<Vec<f64>>),
    /// Uniformly random directions scaled to the given radius.
    RandomSphere { radius: f64 },
}

/// Isotropic Gaussian class-conditional generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub class_sizes: Vec<usize>,
    pub means: MeansSpec,
    pub within_class_std: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidInput("synthetic data needs at least 2 classes".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidInput("synthetic dimension must be positive".into()));
        }
        if self.class_sizes.len() != self.num_classes || self.class_sizes.contains(&0) {
            return Err(Error::InvalidInput("class_sizes must list one positive size per class".into()));
        }
        if !(self.within_class_std >= 0.0 && self.within_class_std.is_finite()) {
            return Err(Error::InvalidInput("within_class_std must be finite and >= 0".into()));
        }
        if let MeansSpec::Explicit(m) = &self.means {
            if m.len() != self.num_classes || m.iter().any(|r| r.len() != self.dim) {
                return Err(Error::InvalidInput("explicit means must be num_classes x dim".into()));
            }
        }
        Ok(())
    }

    /// Class means, `K×D`. Random means come from their own seeded stream so
    /// they can be recovered without regenerating the samples.
    pub fn resolve_means(&self) -> Result<Matrix> {
        self.validate()?;
        match &self.means {
            MeansSpec::Explicit(m) => Matrix::from_rows(m),
            MeansSpec::RandomSphere { radius } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(0);
                let mut out = Matrix::zeros(self.num_classes, self.dim);
                for k in 0..self.num_classes {
                    let mut v: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                    v.iter_mut().for_each(|x| *x *= radius / norm);
                    out.row_mut(k).copy_from_slice(&v);
                }
                Ok(out)
            }
        }
    }
}

/// Draws `class_sizes[k]` points around each class mean. Class `k` gets label `k`.
pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    let means = spec.resolve_means()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let n: usize = spec.class_sizes.iter().sum();
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (k, &size) in spec.class_sizes.iter().enumerate() {
        for _ in 0..size {
            for j in 0..spec.dim {
                let noise: f64 = rng.sample(StandardNormal);
                data.push(means.get(k, j) + spec.within_class_std * noise);
            }
            labels.push(k as Label);
        }
    }
    Dataset::new(Matrix::from_row_major(n, spec.dim, data)?, labels)
}

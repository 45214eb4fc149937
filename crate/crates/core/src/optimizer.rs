//! Training loops: proximal stochastic subgradient descent on `M` and
//! plain stochastic subgradient descent on the projection matrix `A`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{all_pairs, Dataset, PairBatch, PairDiffs, PairIndices, PairSampler};
use crate::error::{Error, Result};
use crate::linalg::{sym_eig, Matrix, SymMatrix, DEFAULT_RANK_TOL};
pub use crate::metric::{MahalanobisMetric, ProjectionMatrix, Provenance};
use crate::regularizers::{convex_from_spectrum, grad_nonconvex, omega_nonconvex, prox_matrix, Form, RegularizerSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub stepsize: f64,
    /// Even; half similar, half dissimilar pairs.
    pub batch_size: usize,
    pub margin: f64,
    pub max_epochs: usize,
    pub steps_per_epoch: usize,
    /// Stop once the relative objective change over an epoch drops below this.
    pub rel_tol: f64,
    pub seed: u64,
    pub regularizer: RegularizerSpec,
    /// Rows of `A` (projection model only).
    pub npv: usize,
    /// Independent runs for the projection model.
    pub restarts: usize,
    /// Use every pair in every step instead of sampled batches.
    pub full_batch: bool,
    /// Step `η/√t` instead of a constant `η`.
    pub decay: bool,
    /// Size of the fixed pair set used to measure the objective.
    pub probe_pairs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stepsize: 1e-3,
            batch_size: 100,
            margin: 1.0,
            max_epochs: 50,
            steps_per_epoch: 100,
            rel_tol: 1e-6,
            seed: 0,
            regularizer: RegularizerSpec::unregularized(),
            npv: 10,
            restarts: 5,
            full_batch: false,
            decay: false,
            probe_pairs: 2000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.stepsize > 0.0 && self.stepsize.is_finite()) {
            return Err(Error::InvalidInput(format!("stepsize must be positive, got {}", self.stepsize)));
        }
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("batch size must be even and >= 2, got {}", self.batch_size)));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidInput(format!("margin must be positive, got {}", self.margin)));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::InvalidInput("rel_tol must be >= 0".into()));
        }
        if self.steps_per_epoch == 0 || self.npv == 0 || self.restarts == 0 {
            return Err(Error::InvalidInput("steps_per_epoch, npv and restarts must be positive".into()));
        }
        if self.probe_pairs < 2 {
            return Err(Error::InvalidInput("probe_pairs must be >= 2".into()));
        }
        self.regularizer.validate()
    }

    /// Hex SHA-256 of the JSON-serialized configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub objective: f64,
    pub regularizer_value: f64,
    pub rank: usize,
}

/// A trained model with its log. For the projection model, `log` belongs to the selected restart.
#[derive(Debug, Clone)]
pub struct TrainResult<T> {
    pub model: T,
    pub log: Vec<EpochRecord>,
    pub provenance: Provenance,
    /// Final objective of each restart; `None` if the run failed.
    pub restart_objectives: Vec<Option<f64>>,
}

/// Training log as CSV with header `epoch,objective,regularizer_value,rank`.
pub fn log_to_csv(log: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,objective,regularizer_value,rank\n");
    for r in log {
        s.push_str(&format!("{},{:?},{:?},{}\n", r.epoch, r.objective, r.regularizer_value, r.rank));
    }
    s
}

fn check_batch(batch: &PairDiffs, dim: usize) -> Result<()> {
    if batch.similar.is_empty() || batch.dissimilar.is_empty() {
        return Err(Error::InvalidBatch("batch needs both similar and dissimilar pairs".into()));
    }
    if batch.similar.iter().chain(&batch.dissimilar).any(|z| z.len() != dim) {
        return Err(Error::InvalidInput(format!("batch feature dimension differs from {dim}")));
    }
    Ok(())
}

fn hinge_loss(batch: &PairDiffs, margin: f64, q: impl Fn(&[f64]) -> f64) -> f64 {
    let sim: f64 = batch.similar.iter().map(|z| q(z)).sum::<f64>() / batch.similar.len() as f64;
    let dis: f64 =
        batch.dissimilar.iter().map(|z| (margin - q(z)).max(0.0)).sum::<f64>() / batch.dissimilar.len() as f64;
    sim + dis
}

/// `(1/|S|)Σ_S zᵀMz + (1/|D|)Σ_D max(0, τ − zᵀMz)` over pair differences.
pub fn mdml_loss_diffs(m: &SymMatrix, batch: &PairDiffs, margin: f64) -> Result<f64> {
    check_batch(batch, m.dim())?;
    Ok(hinge_loss(batch, margin, |z| m.quad_form(z)))
}

pub fn mdml_loss(m: &MahalanobisMetric, batch: &PairBatch, margin: f64) -> Result<f64> {
    mdml_loss_diffs(m.matrix(), &batch.differences(), margin)
}

/// `(1/|S|)Σ_S zzᵀ − (1/|D|)Σ_{active} zzᵀ`; pairs exactly at the hinge contribute nothing.
pub fn mdml_subgradient_diffs(m: &SymMatrix, batch: &PairDiffs, margin: f64) -> Result<SymMatrix> {
    check_batch(batch, m.dim())?;
    let mut g = SymMatrix::zeros(m.dim());
    let ws = 1.0 / batch.similar.len() as f64;
    for z in &batch.similar {
        g.add_outer(z, ws);
    }
    let wd = -1.0 / batch.dissimilar.len() as f64;
    for z in &batch.dissimilar {
        if margin - m.quad_form(z) > 0.0 {
            g.add_outer(z, wd);
        }
    }
    Ok(g)
}

pub fn mdml_subgradient(m: &MahalanobisMetric, batch: &PairBatch, margin: f64) -> Result<SymMatrix> {
    mdml_subgradient_diffs(m.matrix(), &batch.differences(), margin)
}

/// As [`mdml_loss_diffs`] with `zᵀMz` replaced by `‖Az‖²`.
pub fn pdml_loss_diffs(a: &Matrix, batch: &PairDiffs, margin: f64) -> Result<f64> {
    check_batch(batch, a.cols())?;
    Ok(hinge_loss(batch, margin, |z| a.mul_vec(z).iter().map(|v| v * v).sum()))
}

pub fn pdml_loss(a: &ProjectionMatrix, batch: &PairBatch, margin: f64) -> Result<f64> {
    pdml_loss_diffs(a.matrix(), &batch.differences(), margin)
}

/// Subgradient of [`pdml_loss_diffs`] with respect to `A`: `2 A G` where `G` is the
/// [`mdml_subgradient_diffs`] at `AᵀA`.
pub fn pdml_subgradient_diffs(a: &Matrix, batch: &PairDiffs, margin: f64) -> Result<Matrix> {
    check_batch(batch, a.cols())?;
    let d = a.cols();
    let mut g = SymMatrix::zeros(d);
    let ws = 1.0 / batch.similar.len() as f64;
    for z in &batch.similar {
        g.add_outer(z, ws);
    }
    let wd = -1.0 / batch.dissimilar.len() as f64;
    for z in &batch.dissimilar {
        let q: f64 = a.mul_vec(z).iter().map(|v| v * v).sum();
        if margin - q > 0.0 {
            g.add_outer(z, wd);
        }
    }
    let mut out = a.matmul(&g.to_matrix())?;
    out.scale(2.0);
    Ok(out)
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const PROBE_STREAM: u64 = 0;
const MDML_BATCH_STREAM: u64 = 1;
const PDML_STREAM_BASE: u64 = 2;

/// Pairs the objective is measured on: all pairs in full-batch mode, a fixed
/// seeded sample of `probe_pairs` otherwise.
fn probe_set(data: &Dataset, cfg: &TrainConfig) -> Result<PairDiffs> {
    let idx = if cfg.full_batch {
        all_pairs(data)?
    } else {
        let half = cfg.probe_pairs / 2;
        PairSampler::new(data)?.sample(2 * half, &mut seeded(cfg.seed, PROBE_STREAM))?
    };
    Ok(PairDiffs::from_indices(data, &idx))
}

struct BatchSource<'a> {
    data: &'a Dataset,
    sampler: Option<PairSampler>,
    full: Option<PairDiffs>,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl<'a> BatchSource<'a> {
    fn new(data: &'a Dataset, cfg: &TrainConfig, probe: &PairDiffs, stream: u64) -> Result<Self> {
        let (sampler, full) =
            if cfg.full_batch { (None, Some(probe.clone())) } else { (Some(PairSampler::new(data)?), None) };
        Ok(BatchSource { data, sampler, full, batch_size: cfg.batch_size, rng: seeded(cfg.seed, stream) })
    }

    fn next(&mut self) -> Result<std::borrow::Cow<'_, PairDiffs>> {
        if let Some(full) = &self.full {
            return Ok(std::borrow::Cow::Borrowed(full));
        }
        let sampler = self.sampler.as_ref().expect("sampler present outside full-batch mode");
        let idx: PairIndices = sampler.sample(self.batch_size, &mut self.rng)?;
        Ok(std::borrow::Cow::Owned(PairDiffs::from_indices(self.data, &idx)))
    }
}

fn step_size(cfg: &TrainConfig, t: usize) -> f64 {
    if cfg.decay {
        cfg.stepsize / (t as f64).sqrt()
    } else {
        cfg.stepsize
    }
}

fn converged(prev: f64, cur: f64, rel_tol: f64) -> bool {
    let scale = prev.abs().max(f64::MIN_POSITIVE);
    (prev - cur).abs() / scale < rel_tol
}

fn mdml_record(m: &MahalanobisMetric, probe: &PairDiffs, cfg: &TrainConfig, epoch: usize) -> Result<EpochRecord> {
    let loss = mdml_loss_diffs(m.matrix(), probe, cfg.margin)?;
    let reg = convex_from_spectrum(&cfg.regularizer, m.eigenvalues());
    Ok(EpochRecord {
        epoch,
        objective: loss + cfg.regularizer.gamma * reg,
        regularizer_value: reg,
        rank: m.rank(DEFAULT_RANK_TOL),
    })
}

/// Learns a PSD `M` starting from `I`.
pub fn train_mdml(data: &Dataset, cfg: &TrainConfig) -> Result<TrainResult<MahalanobisMetric>> {
    train_mdml_from(data, cfg, MahalanobisMetric::identity(data.dim()))
}

/// Learns a PSD `M` by alternating `M̃ = M − η∂L(M)` and the prox of `γΩ̂`.
pub fn train_mdml_from(
    data: &Dataset,
    cfg: &TrainConfig,
    init: MahalanobisMetric,
) -> Result<TrainResult<MahalanobisMetric>> {
    cfg.validate()?;
    if cfg.regularizer.form != Form::ConvexOnM {
        return Err(Error::InvalidInput("the Mahalanobis trainer needs a convex regularizer on M".into()));
    }
    if init.dim() != data.dim() {
        return Err(Error::InvalidInput(format!(
            "initial metric has dimension {}, data has {}",
            init.dim(),
            data.dim()
        )));
    }
    let probe = probe_set(data, cfg)?;
    let mut batches = BatchSource::new(data, cfg, &probe, MDML_BATCH_STREAM)?;
    let mut m = init;
    let mut log = vec![mdml_record(&m, &probe, cfg, 0)?];
    let mut t = 0;
    for epoch in 1..=cfg.max_epochs {
        for _ in 0..cfg.steps_per_epoch {
            t += 1;
            let eta = step_size(cfg, t);
            let batch = batches.next()?;
            let g = mdml_subgradient_diffs(m.matrix(), &batch, cfg.margin)?;
            let mut m_tilde = m.matrix().clone();
            m_tilde.axpy(-eta, &g);
            m = prox_matrix(&cfg.regularizer, &m_tilde, eta)?;
        }
        let rec = mdml_record(&m, &probe, cfg, epoch)?;
        let prev = log.last().expect("log starts with the initial record").objective;
        log.push(rec);
        if converged(prev, rec.objective, cfg.rel_tol) {
            break;
        }
    }
    let last = *log.last().expect("nonempty log");
    let provenance = Provenance { config_hash: cfg.hash(), epochs_run: last.epoch, final_objective: last.objective };
    m.provenance = Some(provenance.clone());
    Ok(TrainResult { model: m, log, provenance, restart_objectives: vec![Some(last.objective)] })
}

fn pdml_regularizer(spec: &RegularizerSpec, a: &Matrix) -> Result<f64> {
    match omega_nonconvex(spec.family, a) {
        Ok(v) => Ok(v),
        // an unweighted regularizer may be undefined without affecting training
        Err(_) if spec.gamma == 0.0 => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

fn pdml_record(a: &Matrix, probe: &PairDiffs, cfg: &TrainConfig, epoch: usize) -> Result<EpochRecord> {
    let loss = pdml_loss_diffs(a, probe, cfg.margin)?;
    let reg = pdml_regularizer(&cfg.regularizer, a)?;
    let weighted = if cfg.regularizer.gamma == 0.0 { 0.0 } else { cfg.regularizer.gamma * reg };
    let rank = sym_eig(&a.gram_rows())?.numerical_rank(DEFAULT_RANK_TOL);
    let objective = loss + weighted;
    if !objective.is_finite() {
        return Err(Error::NumericalFailure(format!("objective became {objective} at epoch {epoch}")));
    }
    Ok(EpochRecord { epoch, objective, regularizer_value: reg, rank })
}

/// `A₀` with i.i.d. `N(0, 1/D)` entries.
fn random_projection(rows: usize, dim: usize, rng: &mut impl Rng) -> Matrix {
    let sd = 1.0 / (dim as f64).sqrt();
    let data = (0..rows * dim).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_row_major(rows, dim, data).expect("shape matches")
}

fn pdml_run(data: &Dataset, cfg: &TrainConfig, probe: &PairDiffs, restart: u64) -> Result<(Matrix, Vec<EpochRecord>)> {
    let init_stream = PDML_STREAM_BASE + 2 * restart;
    let mut a = random_projection(cfg.npv, data.dim(), &mut seeded(cfg.seed, init_stream));
    let mut batches = BatchSource::new(data, cfg, probe, init_stream + 1)?;
    let gamma = cfg.regularizer.gamma;
    let mut log = vec![pdml_record(&a, probe, cfg, 0)?];
    let mut t = 0;
    for epoch in 1..=cfg.max_epochs {
        for _ in 0..cfg.steps_per_epoch {
            t += 1;
            let eta = step_size(cfg, t);
            let batch = batches.next()?;
            let mut g = pdml_subgradient_diffs(&a, &batch, cfg.margin)?;
            if gamma > 0.0 {
                g.axpy(gamma, &grad_nonconvex(cfg.regularizer.family, &a)?);
            }
            a.axpy(-eta, &g);
            if !a.is_finite() {
                return Err(Error::NumericalFailure(format!("projection matrix diverged at step {t}")));
            }
        }
        let rec = pdml_record(&a, probe, cfg, epoch)?;
        let prev = log.last().expect("nonempty log").objective;
        log.push(rec);
        if converged(prev, rec.objective, cfg.rel_tol) {
            break;
        }
    }
    Ok((a, log))
}

/// Learns `A` by subgradient descent on `loss + γΩ_φ(A)`, keeping the best of
/// `cfg.restarts` seeded runs. Failed runs are skipped; if all fail the last error is returned.
pub fn train_pdml(data: &Dataset, cfg: &TrainConfig) -> Result<TrainResult<ProjectionMatrix>> {
    cfg.validate()?;
    if cfg.regularizer.form != Form::NonconvexOnA {
        return Err(Error::InvalidInput("the projection trainer needs a nonconvex regularizer on A".into()));
    }
    let probe = probe_set(data, cfg)?;
    let mut best: Option<(Matrix, Vec<EpochRecord>)> = None;
    let mut objectives = Vec::with_capacity(cfg.restarts);
    let mut last_err = None;
    for r in 0..cfg.restarts {
        match pdml_run(data, cfg, &probe, r as u64) {
            Ok((a, log)) => {
                let obj = log.last().expect("nonempty log").objective;
                objectives.push(Some(obj));
                let better = best.as_ref().is_none_or(|(_, l)| obj < l.last().expect("nonempty log").objective);
                if better {
                    best = Some((a, log));
                }
            }
            Err(e) => {
                objectives.push(None);
                last_err = Some(e);
            }
        }
    }
    let (a, log) = match best {
        Some(b) => b,
        None => return Err(last_err.expect("at least one restart ran")),
    };
    let last = *log.last().expect("nonempty log");
    Ok(TrainResult {
        model: ProjectionMatrix::new(a)?,
        log,
        provenance: Provenance { config_hash: cfg.hash(), epochs_run: last.epoch, final_objective: last.objective },
        restart_objectives: objectives,
    })
}

use std::fs;
use std::path::{Path, PathBuf};

use odml::data::{load_csv, stratified_split, synth_generate, write_csv, Dataset};
use odml::eval::{evaluate, EvalConfig, EvalReport};
use odml::model::{LoadedMetric, ModelFile};
use odml::optimizer::{log_to_csv, train_mdml, train_pdml, EpochRecord, TrainConfig};
use odml::regularizers::oracle::{run_prox_suite, ProxSuiteConfig};
use odml::regularizers::Form;
use odml::theory::{gen_bound, self_test};
use odml::Family;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output_dir).map_err(odml::Error::from)?;
    Ok(cfg.output_dir.join(name))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(odml::Error::from)?;
    Ok(())
}

fn load(cfg: &RunConfig, path: &Path) -> Result<Dataset> {
    Ok(load_csv(path, cfg.has_header)?)
}

pub fn synth(cfg: &RunConfig) -> Result<Value> {
    let spec = cfg.synth.as_ref().ok_or_else(|| CliError::Usage("synth needs a `synth` section in the config".into()))?;
    let data = synth_generate(spec)?;
    let path = out_path(cfg, "synth.csv")?;
    write_csv(&data, &path)?;
    Ok(json!({ "path": path, "rows": data.len(), "dim": data.dim(), "classes": data.num_classes() }))
}

/// Trains whichever model the regularizer form calls for.
pub fn fit(data: &Dataset, train: &TrainConfig) -> Result<(ModelFile, Vec<EpochRecord>)> {
    match train.regularizer.form {
        Form::ConvexOnM => {
            let res = train_mdml(data, train)?;
            Ok((ModelFile::from_mahalanobis(&res.model, train.regularizer), res.log))
        }
        Form::NonconvexOnA => {
            let res = train_pdml(data, train)?;
            Ok((ModelFile::from_projection(&res.model, train.regularizer, Some(&res.provenance)), res.log))
        }
    }
}

pub fn train(cfg: &RunConfig) -> Result<Value> {
    let data = load(cfg, cfg.dataset()?)?;
    let (model, log) = fit(&data, &cfg.train)?;
    let model_path = out_path(cfg, "model.json")?;
    model.save(&model_path)?;
    let log_path = out_path(cfg, "train_log.csv")?;
    fs::write(&log_path, log_to_csv(&log)).map_err(odml::Error::from)?;
    let last = log.last().expect("log is never empty");
    Ok(json!({
        "model_path": model_path,
        "log_path": log_path,
        "epochs_run": last.epoch,
        "final_objective": last.objective,
        "config_hash": cfg.train.hash(),
    }))
}

pub fn eval(cfg: &RunConfig) -> Result<Value> {
    let model_path = cfg.model_path.as_deref().ok_or_else(|| CliError::Usage("eval needs model_path (or --model)".into()))?;
    let test_path = cfg.test_path.as_deref().ok_or_else(|| CliError::Usage("eval needs test_path (or --test)".into()))?;
    let metric = ModelFile::load(model_path)?.to_metric()?;
    let train = load(cfg, cfg.dataset()?)?;
    let test = load(cfg, test_path)?;
    let report = evaluate(&metric, &train, &test, &cfg.eval)?;
    write_json(&out_path(cfg, "eval.json")?, &report)?;
    fs::write(out_path(cfg, "eval.csv")?, report.to_csv()).map_err(odml::Error::from)?;
    Ok(serde_json::to_value(&report).expect("report serializes"))
}

fn train_test(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let data = load(cfg, cfg.dataset()?)?;
    match cfg.test_path.as_deref() {
        Some(p) => Ok((data, load(cfg, p)?)),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
            Ok(stratified_split(&data, cfg.test_fraction, &mut rng)?)
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GridPoint {
    pub gamma: f64,
    pub npv: Option<usize>,
}

pub fn grid(cfg: &RunConfig) -> Result<Vec<GridPoint>> {
    if cfg.sweep.gamma_grid.is_empty() {
        return Err(CliError::Usage("sweep.gamma_grid is empty".into()));
    }
    let projection = cfg.train.regularizer.form == Form::NonconvexOnA;
    if projection && cfg.sweep.npv_grid.is_empty() {
        return Err(CliError::Usage("sweep.npv_grid is empty".into()));
    }
    let npvs: Vec<Option<usize>> =
        if projection { cfg.sweep.npv_grid.iter().map(|&n| Some(n)).collect() } else { vec![None] };
    Ok(cfg
        .sweep
        .gamma_grid
        .iter()
        .flat_map(|&gamma| npvs.iter().map(move |&npv| GridPoint { gamma, npv }))
        .collect())
}

pub fn run_point(train: &Dataset, test: &Dataset, base: &TrainConfig, eval_cfg: &EvalConfig, p: GridPoint) -> Result<EvalReport> {
    let mut cfg = base.clone();
    cfg.regularizer.gamma = p.gamma;
    if let Some(n) = p.npv {
        cfg.npv = n;
    }
    let (model, _) = fit(train, &cfg)?;
    let metric: LoadedMetric = model.to_metric()?;
    Ok(evaluate(&metric, train, test, eval_cfg)?)
}

pub const SWEEP_CSV_HEADER: &str = "gamma,npv,auc_all,auc_infrequent,auc_frequent,balance_score,npv_learned,compactness_score,imbalance_factor,error";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn sweep_row(p: &GridPoint, r: &Result<EvalReport>) -> String {
    let npv = p.npv.map(|n| n.to_string()).unwrap_or_default();
    match r {
        Ok(rep) => format!(
            "{},{},{},{},{},{},{},{},{},",
            p.gamma,
            npv,
            rep.auc_all,
            opt(rep.auc_infrequent),
            opt(rep.auc_frequent),
            opt(rep.balance_score),
            rep.npv,
            opt(rep.compactness_score),
            opt(rep.imbalance_factor)
        ),
        Err(e) => format!("{},{},,,,,,,,\"{}\"", p.gamma, npv, e.to_string().replace('"', "'")),
    }
}

pub fn sweep(cfg: &RunConfig) -> Result<Value> {
    let points = grid(cfg)?;
    cfg.train.regularizer.validate()?;
    let (train, test) = train_test(cfg)?;
    let results: Vec<Result<EvalReport>> =
        points.par_iter().map(|&p| run_point(&train, &test, &cfg.train, &cfg.eval, p)).collect();
    let mut csv = String::from(SWEEP_CSV_HEADER);
    csv.push('\n');
    for (p, r) in points.iter().zip(&results) {
        csv.push_str(&sweep_row(p, r));
        csv.push('\n');
    }
    let path = out_path(cfg, "sweep.csv")?;
    fs::write(&path, csv).map_err(odml::Error::from)?;
    let errors = results.iter().filter(|r| r.is_err()).count();
    Ok(json!({ "path": path, "rows": points.len(), "errors": errors }))
}

pub fn prox_test(cfg: &RunConfig) -> Result<Value> {
    let suite = ProxSuiteConfig {
        problems_per_family: cfg.prox.problems_per_family,
        zero_gamma_only: cfg.prox.zero_gamma_only,
        seed: cfg.prox.seed,
        ..Default::default()
    };
    let report = run_prox_suite(&suite)?;
    let value = serde_json::to_value(&report).expect("report serializes");
    if !report.passed {
        println!("{value}");
        let bad: usize = report.families.iter().map(|f| f.violations).sum();
        return Err(CliError::CheckFailed(format!("{bad} prox problems outside tolerance")));
    }
    Ok(value)
}

pub fn theory(cfg: &RunConfig) -> Result<Value> {
    let t = &cfg.theory;
    let report = self_test(t.seed, t.trace_cases, t.cond_cases)?;
    let mut value = json!({ "self_test": report });
    if let Some(inp) = &t.gen_bound {
        let mut bounds = serde_json::Map::new();
        for family in Family::ALL {
            let v = match gen_bound(family, inp) {
                Ok(b) => json!(b),
                Err(e) => json!({ "error": e.to_string() }),
            };
            bounds.insert(family.name().to_string(), v);
        }
        value["gen_bound"] = Value::Object(bounds);
    }
    if !report.passed {
        println!("{value}");
        return Err(CliError::CheckFailed(format!(
            "{} trace and {} condition-number violations",
            report.trace_violations, report.cond_violations
        )));
    }
    Ok(value)
}

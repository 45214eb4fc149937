use std::path::{Path, PathBuf};

use odml::data::SynthSpec;
use odml::eval::EvalConfig;
use odml::optimizer::TrainConfig;
use odml::theory::GenBoundInputs;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must match the subcommand when given.
    pub command: Option<String>,
    pub dataset_path: Option<PathBuf>,
    /// Held-out set for `eval` and `sweep`. Without it, `sweep` splits the dataset.
    pub test_path: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    /// First CSV row is a header.
    pub has_header: bool,
    pub output_dir: PathBuf,
    pub test_fraction: f64,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub synth: Option<SynthSpec>,
    pub sweep: SweepConfig,
    pub prox: ProxConfig,
    pub theory: TheoryConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            dataset_path: None,
            test_path: None,
            model_path: None,
            has_header: false,
            output_dir: PathBuf::from("."),
            test_fraction: 0.3,
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            synth: None,
            sweep: SweepConfig::default(),
            prox: ProxConfig::default(),
            theory: TheoryConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub gamma_grid: Vec<f64>,
    /// Projection-vector counts; only used with a nonconvex regularizer.
    pub npv_grid: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { gamma_grid: vec![1e-3, 1e-2, 1e-1, 1.0], npv_grid: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxConfig {
    pub problems_per_family: usize,
    pub zero_gamma_only: bool,
    pub seed: u64,
}

impl Default for ProxConfig {
    fn default() -> Self {
        ProxConfig { problems_per_family: 1000, zero_gamma_only: false, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub seed: u64,
    pub trace_cases: usize,
    pub cond_cases: usize,
    /// Evaluate the generalization bounds for these inputs.
    pub gen_bound: Option<GenBoundInputs>,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig { seed: 0, trace_cases: 500, cond_cases: 1000, gen_bound: None }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    /// Applies `--seed` everywhere a seed is used.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.prox.seed = seed;
        self.theory.seed = seed;
        if let Some(s) = self.synth.as_mut() {
            s.seed = seed;
        }
    }

    pub fn dataset(&self) -> Result<&Path, CliError> {
        self.dataset_path.as_deref().ok_or_else(|| CliError::Usage("dataset_path is required (config or --data)".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RunConfig>("{\"gama\": 1}").is_err());
    }

    #[test]
    fn seed_override_reaches_every_section() {
        let mut c: RunConfig = serde_json::from_str(
            r#"{"synth": {"num_classes": 2, "dim": 2, "class_sizes": [3, 3],
                "means": {"random_sphere": {"radius": 1.0}}, "within_class_std": 0.1, "seed": 4}}"#,
        )
        .unwrap();
        c.set_seed(9);
        assert_eq!((c.train.seed, c.prox.seed, c.theory.seed, c.synth.unwrap().seed), (9, 9, 9, 9));
    }
}

//! Run configuration: a JSON document with documented keys, merged with
//! command-line flags (flags win).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tenrec::datasets::{DatasetSpec, SynthSpec};
use tenrec::eval::{Grid, Metric, Objective};
use tenrec::models::{Hyperparams, ModelKind};

use crate::CliError;

/// Where the interactions come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetConfig {
    /// Raw CSV put through the preprocessing pipeline.
    Csv(DatasetSpec),
    /// A previously written canonical interaction file plus sidecar.
    Canonical { csv: PathBuf, sidecar: PathBuf },
    /// Generated synthetic fixture.
    Synthetic(SynthSpec),
}

/// Candidate lists for grid search, JSON-side representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub nu: Vec<f64>,
    #[serde(default)]
    pub cg_steps: Vec<usize>,
    /// Neighbor caps swept when the model is the similarity baseline.
    #[serde(default)]
    pub neighbors: Vec<usize>,
    #[serde(default = "default_objective_metric")]
    pub objective_metric: Metric,
    #[serde(default = "default_objective_k")]
    pub objective_k: usize,
}

fn default_objective_metric() -> Metric {
    Metric::Mrr
}

fn default_objective_k() -> usize {
    5
}

impl GridConfig {
    pub fn to_grid(&self, base: Hyperparams, kind: ModelKind) -> Grid {
        let defaults = Grid::default_for(base.clone(), kind);
        Grid {
            alpha: non_empty_or(&self.alpha, defaults.alpha),
            lambda: non_empty_or(&self.lambda, defaults.lambda),
            nu: non_empty_or(&self.nu, defaults.nu),
            cg_steps: non_empty_or(&self.cg_steps, defaults.cg_steps),
            objective: Objective {
                metric: self.objective_metric,
                k: self.objective_k,
            },
            base,
        }
    }
}

fn non_empty_or<T: Clone>(values: &[T], fallback: Vec<T>) -> Vec<T> {
    if values.is_empty() {
        fallback
    } else {
        values.to_vec()
    }
}

/// The model to run: a factor model kind or the similarity baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Factor(ModelKind),
    ItemKnn,
}

/// Top-level run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    /// One of `cp`, `pitf`, `ttf`, `wmf`, `itemknn`.
    pub model: String,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_k_list")]
    pub k_list: Vec<usize>,
    #[serde(default)]
    pub retarget: bool,
    /// Neighbor cap for the item similarity baseline.
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Base WMF model for the post-hoc experiment.
    #[serde(default)]
    pub base_model: Option<PathBuf>,
    /// Full-training report used for the post-hoc percentage column.
    #[serde(default)]
    pub reference_report: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![101, 102, 103, 104, 105]
}

fn default_k_list() -> Vec<usize> {
    vec![5, 20]
}

fn default_neighbors() -> usize {
    200
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config '{}': {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn model_choice(&self) -> Result<ModelChoice, CliError> {
        match self.model.as_str() {
            "cp" => Ok(ModelChoice::Factor(ModelKind::Cp)),
            "pitf" => Ok(ModelChoice::Factor(ModelKind::Pitf)),
            "ttf" => Ok(ModelChoice::Factor(ModelKind::Ttf)),
            "wmf" => Ok(ModelChoice::Factor(ModelKind::Wmf)),
            "itemknn" => Ok(ModelChoice::ItemKnn),
            other => Err(CliError::usage(format!(
                "invalid config: field 'model' has unknown model kind '{other}' \
                 (expected one of cp, pitf, ttf, wmf, itemknn)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let choice = self.model_choice()?;
        self.hyperparams
            .validate()
            .map_err(|e| CliError::usage(format!("invalid config: field 'hyperparams': {e}")))?;
        if choice == ModelChoice::Factor(ModelKind::Pitf)
            && self.hyperparams.structure == tenrec::models::Structure::MultiD
        {
            return Err(CliError::usage(
                "invalid config: field 'hyperparams.structure': PITF supports only the \
                 stacked structure"
                    .into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(CliError::usage(
                "invalid config: field 'seeds' must not be empty".into(),
            ));
        }
        if self.k_list.is_empty() {
            return Err(CliError::usage(
                "invalid config: field 'k_list' must not be empty".into(),
            ));
        }
        Ok(())
    }

    /// Output directory resolution order: flag (handled by caller), config
    /// key, `TENREC_OUT_DIR`, current directory.
    pub fn resolve_output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(dir) = flag {
            return dir.to_path_buf();
        }
        if let Some(dir) = &self.output_dir {
            return dir.clone();
        }
        if let Ok(dir) = std::env::var("TENREC_OUT_DIR") {
            if !dir.is_empty() {
                return PathBuf::from(dir);
            }
        }
        PathBuf::from(".")
    }
}

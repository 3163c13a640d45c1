//! Flat TOML configuration shared by all subcommands.
//!
//! Every key is optional; missing keys fall back to library defaults and
//! command-line flags override file values. Unknown keys are rejected so a
//! typo cannot silently run the default experiment.

use std::path::{Path, PathBuf};

use perturbed_iht::basin2d::StepNorm;
use perturbed_iht::parametric::SubgradientRule;
use perturbed_iht::solvers::StepSize;
use perturbed_iht::{EnsembleKind, Method};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,

    pub ensemble: Option<EnsembleKind>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub mu: Option<f64>,
    pub method: Option<Method>,
    pub tau: Option<TauValue>,

    pub m_values: Option<Vec<usize>>,
    pub mu_values: Option<Vec<f64>>,
    pub runs: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub failure_threshold: Option<f64>,

    pub rounds: Option<usize>,
    pub iters_per_round: Option<usize>,
    pub sigma: Option<f64>,

    pub momentum: Option<f64>,
    pub learning_rate: Option<f64>,
    pub train_iterations: Option<usize>,
    pub dropout_rate: Option<f64>,
    pub subgradient: Option<SubgradientRule>,

    pub num_settings: Option<usize>,
    pub grid_points: Option<usize>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub step_scale: Option<f64>,
    pub step_norm: Option<StepNorm>,
    pub max_iters: Option<usize>,
    pub fixed_point_tol: Option<f64>,
    pub cluster_tol: Option<f64>,
    pub render: Option<Vec<usize>>,
}

/// `tau = "auto"` or `tau = 0.01` in the file.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum TauValue {
    Number(f64),
    Word(String),
}

impl TauValue {
    pub fn step(&self) -> Result<StepSize, CliError> {
        match self {
            TauValue::Number(x) => Ok(StepSize::Fixed(*x)),
            TauValue::Word(w) => w.parse().map_err(|e| CliError::Usage(format!("tau: {e}"))),
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

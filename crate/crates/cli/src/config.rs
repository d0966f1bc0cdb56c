use std::path::{Path, PathBuf};

use monogram_core::datamodel::Schema;
use monogram_core::eval::PipelineConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Declarative run description, read from TOML. Every field has a default
/// that reproduces the reference training schedule.
///
/// ```toml
/// dataset = "data/cases.csv"
/// folds = 5
/// fold_seed = 0
/// output = "runs/lung"
///
/// [pipeline]
/// threshold = "zero"
/// criteria = ["top-1", "MV@3", "MV@5", "MV@10"]
///
/// [pipeline.ae_image]
/// epochs = 150
/// lr = 1e-5
///
/// [pipeline.fusion]
/// epochs = 150
/// lr = 1e-5
/// alpha = 1.0
/// batch_size = 32
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    /// Expected embedding widths; inferred from the file when absent.
    pub schema: Option<Schema>,
    pub folds: usize,
    pub fold_seed: u64,
    pub output: Option<PathBuf>,
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            schema: None,
            folds: 5,
            fold_seed: 0,
            output: None,
            pipeline: PipelineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Range and reference checks, reported per field.
    pub fn validate(&self) -> CliResult<()> {
        let p = &self.pipeline;
        for (name, h) in [("pipeline.ae_image", &p.ae_image), ("pipeline.ae_sequence", &p.ae_sequence)] {
            if !(h.lr > 0.0 && h.lr.is_finite()) {
                return Err(CliError::Config(format!("{name}.lr must be > 0, got {}", h.lr)));
            }
            if h.batch_size == Some(0) {
                return Err(CliError::Config(format!("{name}.batch_size must be >= 1")));
            }
        }
        if !(p.fusion.lr > 0.0 && p.fusion.lr.is_finite()) {
            return Err(CliError::Config(format!("pipeline.fusion.lr must be > 0, got {}", p.fusion.lr)));
        }
        if !(p.fusion.alpha >= 0.0 && p.fusion.alpha.is_finite()) {
            return Err(CliError::Config(format!("pipeline.fusion.alpha must be >= 0, got {}", p.fusion.alpha)));
        }
        if p.fusion.batch_size == 0 {
            return Err(CliError::Config("pipeline.fusion.batch_size must be >= 1".into()));
        }
        if p.criteria.is_empty() {
            return Err(CliError::Config("pipeline.criteria must not be empty".into()));
        }
        if self.folds < 2 {
            return Err(CliError::Config(format!("folds must be >= 2, got {}", self.folds)));
        }
        if let Some(ds) = &self.dataset {
            if !ds.is_file() {
                return Err(CliError::Config(format!("dataset {} does not exist", ds.display())));
            }
        }
        p.validate().map_err(|e| CliError::Config(e.to_string()))
    }
}

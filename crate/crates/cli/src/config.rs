//! Run configuration: one self-contained document per run (JSON or TOML,
//! chosen by file extension), committed alongside outputs for
//! reproducibility.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lmirnn_core::data::{CsvSchema, SyntheticProfile};
use lmirnn_core::error::{Error, Result};
use lmirnn_core::model::Dims;
use lmirnn_core::trainer::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DimsConfig {
    pub n_u: usize,
    pub n_y: usize,
    pub n_z: usize,
    /// Defaults to n_z.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_x: Option<usize>,
}

impl DimsConfig {
    pub fn to_dims(&self) -> Dims {
        Dims::with_state(self.n_u, self.n_y, self.n_x.unwrap_or(self.n_z), self.n_z)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetConfig {
    /// Built-in benchmark, generated in memory (or exported by `generate`).
    Synthetic { profile: SyntheticProfile },
    /// Pre-split CSV recordings, one recording per file.
    Csv {
        schema: CsvSchema,
        train: Vec<PathBuf>,
        val: Vec<PathBuf>,
        test: Vec<PathBuf>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        ood: Vec<PathBuf>,
    },
    /// A pool of CSV recordings split at recording granularity.
    CsvPool {
        schema: CsvSchema,
        paths: Vec<PathBuf>,
        #[serde(default = "default_ratios")]
        ratios: (f64, f64, f64),
        #[serde(default)]
        split_seed: u64,
    },
}

fn default_ratios() -> (f64, f64, f64) {
    (0.6, 0.1, 0.3)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct EvalConfig {
    pub horizon: usize,
    pub t_init: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            horizon: lmirnn_core::evaluation::DEFAULT_EVAL_HORIZON,
            t_init: lmirnn_core::evaluation::DEFAULT_EVAL_WARMUP,
        }
    }
}

/// Lists expanded by the `grid` subcommand into sequential runs.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct GridConfig {
    pub n_z: Vec<usize>,
    pub gamma_sq: Vec<f64>,
}

impl GridConfig {
    pub fn is_empty(&self) -> bool {
        self.n_z.is_empty() && self.gamma_sq.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    /// constrained | lti_rnn | rnn | lstm
    pub kind: String,
    pub dims: DimsConfig,
    /// Required for the constrained kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_sq: Option<f64>,
    #[serde(default)]
    pub train: TrainConfig,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub output_dir: PathBuf,
    /// Master seed; overrides train.seed when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "GridConfig::is_empty")]
    pub grid: GridConfig,
}

fn default_format_version() -> u32 {
    1
}

impl RunConfig {
    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    pub fn model_kind(&self) -> Result<lmirnn_core::model::ModelKind> {
        lmirnn_core::model::ModelKind::parse(&self.kind)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != 1 {
            return Err(Error::Config(format!(
                "unsupported config format_version {}",
                self.format_version
            )));
        }
        let kind = self.model_kind()?;
        if kind.is_constrained() {
            match self.gamma_sq {
                Some(g) if g > 0.0 => {}
                _ => {
                    return Err(Error::Config(
                        "the constrained kind requires gamma_sq > 0".into(),
                    ))
                }
            }
        }
        self.dims.to_dims().validate()?;
        self.train.validate()?;
        if let DatasetConfig::Csv { train, val, test, ood, .. } = &self.dataset {
            for p in train.iter().chain(val).chain(test).chain(ood) {
                if !p.exists() {
                    return Err(Error::Config(format!("dataset file {} does not exist", p.display())));
                }
            }
        }
        if let DatasetConfig::CsvPool { paths, .. } = &self.dataset {
            for p in paths {
                if !p.exists() {
                    return Err(Error::Config(format!("dataset file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: RunConfig = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        _ => serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn save_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    let text = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::to_string_pretty(cfg)
            .map_err(|e| Error::Config(format!("serialize config: {e}")))?,
        _ => serde_json::to_string_pretty(cfg)? + "\n",
    };
    std::fs::write(path, text)?;
    Ok(())
}

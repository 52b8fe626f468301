//! Run configuration, read from TOML.
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//! snr_min = 4.0                 # optional, drops data after the first low-SNR column
//! criteria = ["BAIC", "BPIC", "PPIC"]
//! exact = false                 # Monte-Carlo BPIC/PPIC instead of the expansions
//! n_draws = 200000
//! n_subsample = [40, 80, 160]   # optional sample-prefix sizes
//! quantities = ["E0"]
//!
//! [data]
//! file = "corr.dat"             # relative to this file
//! # or: [data.synth] with generator = "poly" | "exp" and generator fields
//!
//! [[models]]
//! family = "exponential"
//! n_states = 1
//!
//! [sweep]
//! t_min_range = [1, 28]         # or t_min = [1, 5, 10]
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use modelavg::models::Family;
use modelavg::pipeline::QuantitySpec;
use modelavg::synth::{ExpSynthConfig, PolySynthConfig};
use modelavg::{ICKind, ModelSpec};
use serde::Deserialize;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub snr_min: Option<f64>,
    #[serde(default = "all_criteria")]
    pub criteria: Vec<ICKind>,
    #[serde(default)]
    pub exact: bool,
    #[serde(default = "default_draws")]
    pub n_draws: usize,
    #[serde(default)]
    pub n_subsample: Vec<usize>,
    #[serde(default)]
    pub quantities: Vec<QuantityEntry>,
    pub data: DataSource,
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub output: Output,
}

fn all_criteria() -> Vec<ICKind> {
    ICKind::ALL.to_vec()
}

fn default_draws() -> usize {
    200_000
}

/// A parameter name, or a table with `name` and `optional`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum QuantityEntry {
    Name(String),
    Spec(QuantitySpec),
}

impl QuantityEntry {
    pub fn spec(&self) -> QuantitySpec {
        match self {
            Self::Name(n) => QuantitySpec { name: n.clone(), optional: false },
            Self::Spec(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub file: Option<PathBuf>,
    /// Overrides the file's `#coords` header.
    pub coords: Option<Vec<f64>>,
    pub synth: Option<SynthSource>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "generator", rename_all = "lowercase")]
pub enum SynthSource {
    Poly(PolySynthConfig),
    Exp(ExpSynthConfig),
}

impl SynthSource {
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            Self::Poly(c) => Self::Poly(PolySynthConfig { seed, ..c.clone() }),
            Self::Exp(c) => Self::Exp(ExpSynthConfig { seed, ..c.clone() }),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct ModelEntry {
    #[serde(flatten)]
    pub family: Family,
    pub name: Option<String>,
    pub prior_mean: Option<Vec<f64>>,
    pub prior_width: Option<Vec<f64>>,
    /// Prior model probability. Only ratios matter, so the default of 1 is
    /// a flat prior.
    #[serde(default = "one")]
    pub model_prior: f64,
}

fn one() -> f64 {
    1.0
}

impl ModelEntry {
    pub fn build(&self) -> Result<ModelSpec, CliError> {
        Ok(self.family.build(
            self.name.clone(),
            self.prior_mean.clone(),
            self.prior_width.clone(),
            self.model_prior,
        )?)
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub t_min: Option<Vec<f64>>,
    /// Inclusive `[first, last]`, unit steps.
    pub t_min_range: Option<[f64; 2]>,
}

impl Sweep {
    /// `None` means a single candidate per model on all of the data.
    pub fn values(&self) -> Result<Option<Vec<f64>>, CliError> {
        match (&self.t_min, &self.t_min_range) {
            (Some(_), Some(_)) => Err(CliError::Config("give either sweep.t_min or sweep.t_min_range".into())),
            (Some(v), None) if v.is_empty() => Err(CliError::Config("sweep.t_min is empty".into())),
            (Some(v), None) => Ok(Some(v.clone())),
            (None, Some([lo, hi])) => {
                if !(lo <= hi) {
                    return Err(CliError::Config(format!("sweep.t_min_range [{lo}, {hi}] is empty")));
                }
                let n = (hi - lo).floor() as usize + 1;
                Ok(Some((0..n).map(|i| lo + i as f64).collect()))
            }
            (None, None) => Ok(None),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates `path`; a relative data file is resolved against
    /// the config's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(f) = &cfg.data.file {
            if f.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.data.file = Some(base.join(f));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.models.is_empty() {
            return Err(CliError::Config("no [[models]] given".into()));
        }
        if self.criteria.is_empty() {
            return Err(CliError::Config("criteria is empty".into()));
        }
        match (&self.data.file, &self.data.synth) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either data.file or data.synth".into())),
            (None, None) => return Err(CliError::Config("no data source: set data.file or data.synth".into())),
            _ => {}
        }
        if let Some(s) = self.snr_min {
            if !(s >= 0.0) {
                return Err(CliError::Config(format!("snr_min = {s} must be non-negative")));
            }
        }
        if self.n_subsample.iter().any(|&n| n < 4) {
            return Err(CliError::Config("n_subsample entries must be at least 4".into()));
        }
        self.sweep.values()?;
        let mut names = Vec::new();
        for m in &self.models {
            let name = m.build()?.name;
            if names.contains(&name) {
                return Err(CliError::Config(format!("model name {name:?} is used twice")));
            }
            names.push(name);
        }
        if self.exact {
            self.mc_config().validate()?;
        }
        Ok(())
    }

    pub fn mc_config(&self) -> modelavg::MCConfig {
        modelavg::MCConfig { n_draws: self.n_draws, seed: self.seed, ..Default::default() }
    }

    pub fn quantity_specs(&self) -> Vec<QuantitySpec> {
        self.quantities.iter().map(QuantityEntry::spec).collect()
    }
}

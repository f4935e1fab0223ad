//! The run configuration file: one JSON document per experiment.

use std::path::{Path, PathBuf};

use adol_core::adol::{SamplerConfig, SurrogateConfig};
use adol_core::data_io::{ProfileMode, SynthSpec};
use adol_core::dispatch::case1::DEFAULT_VOLL;
use adol_core::dispatch::network::load_network_dir;
use adol_core::dispatch::{Case1Model, Case1Params, Case2Model, Case2Params, TwoStageModel};
use adol_core::forecast::{FeatureSpec, ForecastConfig};
use adol_core::solver::SolverOptions;
use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// 1: single-period LP dispatch, 2: network unit commitment.
    pub case: u8,
    #[serde(default)]
    pub seed: u64,
    /// Case-1 parameters; the reference set when absent.
    #[serde(default)]
    pub case1: Option<Case1Params>,
    #[serde(default)]
    pub case2: Option<Case2Section>,
    #[serde(default = "default_voll")]
    pub voll: f64,
    #[serde(default)]
    pub solver: SolverOptions,
    pub data: DataSource,
    /// First timestamp of the test period.
    #[serde(default = "default_split")]
    pub split: NaiveDateTime,
    /// Typical-load mode; `mean` for case 1 and `hour_of_day` for case 2 when absent.
    #[serde(default)]
    pub typical: Option<ProfileMode>,
    /// Forecaster features; hourly lags for case 1 and daily blocks for case 2 when absent.
    #[serde(default)]
    pub features: Option<FeatureSpec>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub forecaster: ForecastConfig,
    /// Decision-loss probe width as a fraction of the mean typical load.
    #[serde(default = "default_dl_step")]
    pub dl_step_fraction: f64,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub scenarios: ScenarioSpec,
}

fn default_voll() -> f64 {
    DEFAULT_VOLL
}

fn default_split() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2016, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn default_dl_step() -> f64 {
    0.005
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SyntheticSource),
    Csv {
        path: PathBuf,
        /// Column-mapping file; `timestamp`/`load` headers when absent.
        #[serde(default)]
        columns: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSource {
    #[serde(flatten)]
    pub spec: SynthSpec,
    /// Data seed, independent of the run seed so that reruns share one series.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case2Section {
    /// Full inline parameters; the desk instance when absent.
    #[serde(default)]
    pub params: Option<Case2Params>,
    /// Directory with `nodes.csv`, `lines.csv` and `units.csv`, replacing the
    /// network and units of `params`.
    #[serde(default)]
    pub network_dir: Option<PathBuf>,
    /// File ids of the load buses (with `network_dir`).
    #[serde(default)]
    pub load_node_ids: Vec<i64>,
    #[serde(default)]
    pub load_participation: Option<Vec<f64>>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub reserve_fraction_up: Option<f64>,
    #[serde(default)]
    pub reserve_fraction_down: Option<f64>,
    /// Allow penalized shed in the day-ahead stage too.
    #[serde(default)]
    pub day_ahead_shed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { lo: -0.2, hi: 0.2, step: 0.001 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub count: usize,
    /// Draws lie in `[(1−beta)w̄, (1+beta)w̄]`.
    pub beta: f64,
    /// Losses to train per scenario.
    pub losses: Vec<String>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self { count: 5, beta: 0.1, losses: vec!["adol".into(), "dl".into(), "mse".into()] }
    }
}

/// A parsed configuration with its source location.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Relative paths in the file are resolved against this directory.
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let at = e.path().to_string();
            CliError::Config(format!("{}: field `{at}`: {}", path.display(), e.inner()))
        })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Self { config, base_dir };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("field `{field}`: {msg}")));
        if c.version != CONFIG_VERSION {
            return bad("version", format!("unsupported version {} (expected {CONFIG_VERSION})", c.version));
        }
        match c.case {
            1 if c.case2.is_some() => return bad("case2", "only valid with case 2".into()),
            2 if c.case1.is_some() => return bad("case1", "only valid with case 1".into()),
            1 | 2 => {}
            other => return bad("case", format!("{other} is not 1 or 2")),
        }
        if !(c.voll > 0.0) {
            return bad("voll", "must be positive".into());
        }
        if !(c.dl_step_fraction > 0.0) {
            return bad("dl_step_fraction", "must be positive".into());
        }
        c.sampler.validate().map_err(|e| CliError::Config(format!("field `sampler`: {e}")))?;
        if !(c.sweep.step > 0.0 && c.sweep.hi >= c.sweep.lo) {
            return bad("sweep", "needs lo ≤ hi and step > 0".into());
        }
        if c.scenarios.count == 0 || !(0.0..1.0).contains(&c.scenarios.beta) {
            return bad("scenarios", "needs count ≥ 1 and beta in [0, 1)".into());
        }
        for l in &c.scenarios.losses {
            if !["adol", "dl", "mse"].contains(&l.as_str()) {
                return bad("scenarios.losses", format!("unknown loss `{l}`"));
            }
        }
        if c.forecaster.batch_size == 0 || !(c.forecaster.learning_rate > 0.0) {
            return bad("forecaster", "batch_size and learning_rate must be positive".into());
        }
        if let DataSource::Csv { path, columns } = &c.data {
            for p in std::iter::once(path).chain(columns) {
                if !self.resolve(p).exists() {
                    return bad("data", format!("{} does not exist", self.resolve(p).display()));
                }
            }
        }
        if let Some(dir) = c.case2.as_ref().and_then(|s| s.network_dir.as_ref()) {
            if !self.resolve(dir).is_dir() {
                return bad("case2.network_dir", format!("{} is not a directory", self.resolve(dir).display()));
            }
        }
        self.model()?;
        Ok(())
    }

    pub fn case2_params(&self) -> Result<Case2Params, CliError> {
        let section = self.config.case2.clone().unwrap_or_default();
        let mut p = section.params.unwrap_or_else(Case2Params::desk);
        if let Some(dir) = &section.network_dir {
            let data = load_network_dir(&self.resolve(dir), &section.load_node_ids)
                .map_err(|e| CliError::Config(format!("field `case2.network_dir`: {e}")))?;
            p.network = data.network;
            p.units = data.units;
            p.quickstart = data.quickstart;
            if section.load_participation.is_none() && p.load_participation.len() != p.network.load_nodes.len() {
                let k = p.network.load_nodes.len().max(1);
                p.load_participation = vec![1.0 / k as f64; k];
            }
        }
        if let Some(v) = section.load_participation {
            p.load_participation = v;
        }
        if let Some(h) = section.horizon {
            p.horizon = h;
        }
        if let Some(v) = section.reserve_fraction_up {
            p.reserve_fraction_up = v;
        }
        if let Some(v) = section.reserve_fraction_down {
            p.reserve_fraction_down = v;
        }
        p.validate().map_err(|e| CliError::Config(format!("field `case2`: {e}")))?;
        Ok(p)
    }

    pub fn model(&self) -> Result<Box<dyn TwoStageModel>, CliError> {
        let c = &self.config;
        Ok(match c.case {
            1 => {
                let params = c.case1.clone().unwrap_or_else(Case1Params::reference);
                params.validate().map_err(|e| CliError::Config(format!("field `case1`: {e}")))?;
                let mut m = Case1Model::new(params);
                m.voll = c.voll;
                m.solver = c.solver.clone();
                Box::new(m)
            }
            _ => {
                let mut m = Case2Model::new(self.case2_params()?);
                m.voll = c.voll;
                m.day_ahead_shed = c.case2.as_ref().is_some_and(|s| s.day_ahead_shed);
                m.solver = c.solver.clone();
                Box::new(m)
            }
        })
    }

    pub fn features(&self) -> Result<FeatureSpec, CliError> {
        if let Some(f) = &self.config.features {
            return Ok(f.clone());
        }
        Ok(match self.config.case {
            1 => FeatureSpec::default(),
            _ => FeatureSpec { group_size: self.case2_params()?.horizon, ..FeatureSpec::daily() },
        })
    }

    pub fn profile_mode(&self) -> ProfileMode {
        self.config.typical.unwrap_or(if self.config.case == 1 { ProfileMode::Mean } else { ProfileMode::HourOfDay })
    }

    /// Short SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.config).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    /// Applies a seed override; every stage seed derives from the run seed.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.config.seed = s;
        }
        let s = self.config.seed;
        self.config.sampler.seed = s;
        self.config.surrogate.train.seed = s.wrapping_add(1);
        self.config.forecaster.seed = s.wrapping_add(2);
        self
    }
}

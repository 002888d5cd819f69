//! Run configuration: defaults, then a JSON/TOML file, then command-line flags.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use brwre::env::{EnvironmentModel, EnvironmentSpec};
use brwre::sim::{Mode, RunConfig, SamplerConfig, DEFAULT_CELL_CAP, DEFAULT_EXACT_THRESHOLD, DEFAULT_GENEALOGY_CAP};
use brwre::stats::StatSpec;
use brwre::MultiIndex;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// An environment named by preset or file path, or written inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvChoice {
    Name(String),
    Inline(EnvironmentSpec),
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(alias = "dim")]
    pub dimension: Option<usize>,
    pub horizon: Option<i64>,
    pub env: Option<EnvChoice>,
    pub env_seed: Option<u64>,
    pub particle_seed: Option<u64>,
    pub mode: Option<Mode>,
    pub replicas: Option<u64>,
    pub moments: Option<Vec<MultiIndex>>,
    pub y: Option<Vec<MultiIndex>>,
    pub cos: Option<Vec<f64>>,
    pub record_times: Option<Vec<u64>>,
    pub exact_threshold: Option<u128>,
    pub cell_cap: Option<usize>,
    pub genealogy_cap: Option<usize>,
    pub dp_radius: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        parse_by_extension(path, &text)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(self, over: ConfigFile) -> ConfigFile {
        ConfigFile {
            dimension: over.dimension.or(self.dimension),
            horizon: over.horizon.or(self.horizon),
            env: over.env.or(self.env),
            env_seed: over.env_seed.or(self.env_seed),
            particle_seed: over.particle_seed.or(self.particle_seed),
            mode: over.mode.or(self.mode),
            replicas: over.replicas.or(self.replicas),
            moments: over.moments.or(self.moments),
            y: over.y.or(self.y),
            cos: over.cos.or(self.cos),
            record_times: over.record_times.or(self.record_times),
            exact_threshold: over.exact_threshold.or(self.exact_threshold),
            cell_cap: over.cell_cap.or(self.cell_cap),
            genealogy_cap: over.genealogy_cap.or(self.genealogy_cap),
            dp_radius: over.dp_radius.or(self.dp_radius),
            out_dir: over.out_dir.or(self.out_dir),
        }
    }
}

fn parse_by_extension<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, CliError> {
    let ctx = |e: String| CliError::config(format!("{}: {e}", path.display()));
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(text).map_err(|e| ctx(e.to_string())),
        _ => serde_json::from_str(text).map_err(|e| ctx(e.to_string())),
    }
}

/// A fully resolved configuration; this is what manifests echo.
#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    pub dimension: usize,
    pub horizon: i64,
    pub env: String,
    pub env_spec: EnvironmentSpec,
    pub env_seed: u64,
    pub particle_seed: u64,
    pub mode: Mode,
    pub replicas: u64,
    pub moments: Vec<MultiIndex>,
    pub y: Vec<MultiIndex>,
    pub cos: Option<Vec<f64>>,
    pub record_times: Option<Vec<u64>>,
    pub exact_threshold: u128,
    pub cell_cap: usize,
    pub genealogy_cap: usize,
    pub dp_radius: Option<usize>,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    #[serde(skip)]
    pub model: Arc<EnvironmentModel>,
}

pub const DEFAULT_DIMENSION: usize = 3;
pub const DEFAULT_HORIZON: i64 = 10;
pub const DEFAULT_ENV: &str = "env-b";
pub const DEFAULT_REPLICAS: u64 = 100;

pub fn resolve_env(choice: &EnvChoice) -> Result<(String, EnvironmentSpec), CliError> {
    match choice {
        EnvChoice::Inline(spec) => Ok(("inline".into(), spec.clone())),
        EnvChoice::Name(name) => {
            if let Some(spec) = EnvironmentSpec::preset(name) {
                return Ok((name.clone(), spec));
            }
            let path = Path::new(name);
            if !path.exists() {
                return Err(CliError::config(format!(
                    "environment {name:?} is neither a preset ({}) nor a readable file",
                    EnvironmentSpec::PRESETS.join(", ")
                )));
            }
            let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{name}: {e}")))?;
            Ok((name.clone(), parse_by_extension(path, &text)?))
        }
    }
}

impl Resolved {
    pub fn from_file(file: ConfigFile) -> Result<Resolved, CliError> {
        let (env, env_spec) = resolve_env(&file.env.unwrap_or(EnvChoice::Name(DEFAULT_ENV.into())))?;
        let model = Arc::new(env_spec.build().map_err(CliError::from)?);
        let replicas = file.replicas.unwrap_or(DEFAULT_REPLICAS);
        if replicas == 0 {
            return Err(CliError::config("replicas must be at least 1"));
        }
        let dimension = file.dimension.unwrap_or(DEFAULT_DIMENSION);
        if dimension == 0 {
            return Err(CliError::config("dimension must be at least 1"));
        }
        let horizon = file.horizon.unwrap_or(DEFAULT_HORIZON);
        if horizon < 0 {
            return Err(CliError::config(format!("horizon {horizon} is negative")));
        }
        Ok(Resolved {
            dimension,
            horizon,
            env,
            env_spec,
            env_seed: file.env_seed.unwrap_or(0),
            particle_seed: file.particle_seed.unwrap_or(0),
            mode: file.mode.unwrap_or(Mode::Aggregate),
            replicas,
            moments: file.moments.unwrap_or_default(),
            y: file.y.unwrap_or_default(),
            cos: file.cos,
            record_times: file.record_times,
            exact_threshold: file.exact_threshold.unwrap_or(DEFAULT_EXACT_THRESHOLD),
            cell_cap: file.cell_cap.unwrap_or(DEFAULT_CELL_CAP),
            genealogy_cap: file.genealogy_cap.unwrap_or(DEFAULT_GENEALOGY_CAP),
            dp_radius: file.dp_radius,
            out_dir: file.out_dir,
            model,
        })
    }

    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::new(self.dimension, self.horizon, self.model.clone());
        c.env_seed = self.env_seed;
        c.particle_seed = self.particle_seed;
        c.mode = self.mode;
        c.stats = StatSpec { moments: self.moments.clone(), y: self.y.clone(), cos: self.cos.clone() };
        c.sampler = SamplerConfig { exact_threshold: self.exact_threshold };
        c.cell_cap = self.cell_cap;
        c.genealogy_cap = self.genealogy_cap;
        c.record_times = self.record_times.clone();
        c.validate()?;
        c.stats.prepare(self.dimension)?;
        Ok(c)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

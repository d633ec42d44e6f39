use std::path::{Path, PathBuf};

use anyhow::Context;
use mgarch_core::{ModelKind, OptimizerOptions};
use serde::Deserialize;

use crate::{Format, GlobalArgs, UsageError};

/// Contents of a `--config` TOML file. Every key is optional; command-line
/// flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    pub models: Option<Vec<ModelKind>>,
    pub sim_len: Option<usize>,
    pub starts: Option<usize>,
    pub format: Option<Format>,
    pub optimizer: Option<OptimizerOptions>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }
}

/// Effective run settings after merging the config file and flags.
#[derive(Debug)]
pub struct Settings {
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub delta: Option<f64>,
    pub models: Option<Vec<ModelKind>>,
    pub sim_len: Option<usize>,
    pub format: Option<Format>,
    pub optimizer: OptimizerOptions,
}

impl Settings {
    pub fn resolve(args: &GlobalArgs) -> anyhow::Result<Self> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let seed = args.seed.or(file.seed).unwrap_or(0);
        let mut optimizer = file.optimizer.unwrap_or_default();
        optimizer.seed = seed;
        if let Some(n) = args.starts.or(file.starts) {
            optimizer.n_starts = n;
        }
        optimizer.validate().map_err(|e| UsageError(e.to_string()))?;
        let delta = args.delta.or(file.delta);
        if let Some(d) = delta {
            if !(0.0..1.0).contains(&d) {
                return Err(UsageError(format!("--delta {d} is outside [0, 1)")).into());
            }
        }
        let sim_len = args.sim_len.or(file.sim_len);
        if sim_len.is_some_and(|n| n < 2) {
            return Err(UsageError("--sim-len must be at least 2".into()).into());
        }
        let models = if args.model.is_empty() { file.models } else { Some(args.model.clone()) };
        if models.as_ref().is_some_and(Vec::is_empty) {
            return Err(UsageError("model list is empty".into()).into());
        }
        Ok(Self {
            input: args.input.clone().or(file.input),
            out_dir: args.out_dir.clone().or(file.out_dir).unwrap_or_else(|| PathBuf::from(".")),
            seed,
            delta,
            models,
            sim_len,
            format: args.format.or(file.format),
            optimizer,
        })
    }

    pub fn input(&self) -> anyhow::Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| UsageError("--input is required".into()).into())
    }

    pub fn delta(&self, what: &str) -> anyhow::Result<f64> {
        self.delta
            .ok_or_else(|| UsageError(format!("{what} needs --delta")).into())
    }
}

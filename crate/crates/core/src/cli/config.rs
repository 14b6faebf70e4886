//! Strict JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::ProcedureSpec;
use crate::error::{Error, Result};
use crate::experiment::EvalOptions;
use crate::losses::LossConfig;
use crate::trainer::TrainConfig;

pub const SEED_ENV: &str = "LECNCE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_procedures: usize,
    pub spec: ProcedureSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_procedures: 40,
            spec: ProcedureSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

/// Everything a run needs. Fields absent from the file take module defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// The single run seed; flag and environment take precedence.
    pub seed: Option<u64>,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalOptions,
    pub paths: PathsConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedSource {
    Flag,
    Env,
    Config,
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub source: SeedSource,
}

/// Flag, then `LECNCE_SEED`, then the config file, then 0.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config: Option<u64>) -> Result<SeedRecord> {
    if let Some(seed) = flag {
        return Ok(SeedRecord {
            seed,
            source: SeedSource::Flag,
        });
    }
    if let Some(raw) = env.filter(|s| !s.trim().is_empty()) {
        let seed = raw
            .trim()
            .parse()
            .map_err(|e| Error::InvalidConfig(format!("{SEED_ENV}={raw:?}: {e}")))?;
        return Ok(SeedRecord {
            seed,
            source: SeedSource::Env,
        });
    }
    Ok(match config {
        Some(seed) => SeedRecord {
            seed,
            source: SeedSource::Config,
        },
        None => SeedRecord {
            seed: 0,
            source: SeedSource::Default,
        },
    })
}

fn classify(e: serde_json::Error) -> Error {
    let message = e.to_string();
    if let Some(rest) = message.strip_prefix("unknown field `") {
        if let Some(end) = rest.find('`') {
            return Error::UnknownKey(rest[..end].to_string());
        }
    }
    let message = match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message,
    };
    Error::ParseError {
        line: e.line(),
        column: e.column(),
        message,
    }
}

/// Parses without validating. A seed given only as `data.spec.seed` counts
/// as the config seed; two different config seeds are rejected.
pub fn parse_config(text: &str) -> Result<CliConfig> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(classify)?;
    let mut cfg: CliConfig = serde_json::from_str(text).map_err(classify)?;
    if raw.pointer("/data/spec/seed").is_some() {
        let spec_seed = cfg.data.spec.seed;
        match cfg.seed {
            None => cfg.seed = Some(spec_seed),
            Some(s) if s != spec_seed => {
                return Err(Error::InvalidConfig(format!(
                    "seed {s} conflicts with data.spec.seed {spec_seed}"
                )))
            }
            Some(_) => {}
        }
    }
    Ok(cfg)
}

/// Parses a standalone ProcedureSpec file. Returns whether it set a seed.
pub fn parse_spec(text: &str) -> Result<(ProcedureSpec, bool)> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(classify)?;
    let spec = serde_json::from_str(text).map_err(classify)?;
    Ok((spec, raw.get("seed").is_some()))
}

impl CliConfig {
    /// Copies shared settings into the sections that consume them.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.data.spec.seed = seed;
        self.train.seed = seed;
        self.eval.seed = seed;
        self.sync_loss();
    }

    fn sync_loss(&mut self) {
        self.train.loss = self.loss.clone();
        self.eval.beta = self.loss.beta;
        self.eval.dtw_algorithm = self.loss.dtw_algorithm;
    }

    pub fn validate(&mut self) -> Result<()> {
        self.sync_loss();
        self.loss.validate()?;
        self.train.validate()?;
        self.data.spec.validate()?;
        self.eval.validate()?;
        if self.data.n_procedures < 2 {
            return Err(Error::InvalidConfig(
                "data.n_procedures must be at least 2 to form both splits".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<CliConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_config(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

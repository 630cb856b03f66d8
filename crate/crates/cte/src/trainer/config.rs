//! Flat `key=value` run configuration covering every model and optimizer
//! field. `#` comments and blank lines are ignored; unknown keys are
//! errors. The same keys are accepted as CLI overrides.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, TokenMode};
use crate::numerics::Precision;

use super::OptimConfig;

/// Complete run configuration: architecture plus optimization.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub optim: OptimConfig,
}

impl Default for RunConfig {
    /// Desk-scale defaults: 4 layers, 128 dims, 3000 steps, batch 32.
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::desk(),
            optim: OptimConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("bad value {value:?} for key {key}")))
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optim.validate()
    }

    /// Apply one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model.layers" => self.model.layers = parse(key, value)?,
            "model.dim" => self.model.model_dim = parse(key, value)?,
            "model.ffn_dim" => self.model.ffn_dim = parse(key, value)?,
            "model.heads" => self.model.heads = parse(key, value)?,
            "model.top_k" => self.model.top_k = parse(key, value)?,
            "model.feature_dim" => self.model.feature_dim = parse(key, value)?,
            "model.dropout" => self.model.dropout = parse(key, value)?,
            "model.max_frames" => self.model.max_frames = parse(key, value)?,
            "model.token_mode" => {
                self.model.token_mode = match value {
                    "ones" => TokenMode::Ones,
                    "zeros" => TokenMode::Zeros,
                    _ => {
                        return Err(Error::Config(format!(
                            "bad value {value:?} for key {key} (ones|zeros)"
                        )))
                    }
                }
            }
            "optim.learning_rate" => self.optim.learning_rate = parse(key, value)?,
            "optim.beta1" => self.optim.beta1 = parse(key, value)?,
            "optim.beta2" => self.optim.beta2 = parse(key, value)?,
            "optim.adam_eps" => self.optim.adam_eps = parse(key, value)?,
            "optim.warmup_steps" => self.optim.warmup_steps = parse(key, value)?,
            "optim.total_steps" => self.optim.total_steps = parse(key, value)?,
            "optim.batch_size" => self.optim.batch_size = parse(key, value)?,
            "optim.seed" => self.optim.seed = parse(key, value)?,
            "optim.tau" => self.optim.tau = parse(key, value)?,
            "optim.grad_clip" => self.optim.grad_clip = parse(key, value)?,
            "optim.log_interval" => self.optim.log_interval = parse(key, value)?,
            "optim.checkpoint_interval" => {
                self.optim.checkpoint_interval = parse(key, value)?
            }
            "optim.precision" => {
                self.optim.precision = match value {
                    "f64" => Precision::F64,
                    "f32" => Precision::F32,
                    _ => {
                        return Err(Error::Config(format!(
                            "bad value {value:?} for key {key} (f64|f32)"
                        )))
                    }
                }
            }
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse_str(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("expected key=value, got {line:?}"),
                });
            };
            cfg.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model.layers = {}", self.model.layers)?;
        writeln!(f, "model.dim = {}", self.model.model_dim)?;
        writeln!(f, "model.ffn_dim = {}", self.model.ffn_dim)?;
        writeln!(f, "model.heads = {}", self.model.heads)?;
        writeln!(f, "model.top_k = {}", self.model.top_k)?;
        writeln!(f, "model.feature_dim = {}", self.model.feature_dim)?;
        writeln!(f, "model.dropout = {}", self.model.dropout)?;
        writeln!(f, "model.max_frames = {}", self.model.max_frames)?;
        writeln!(
            f,
            "model.token_mode = {}",
            match self.model.token_mode {
                TokenMode::Ones => "ones",
                TokenMode::Zeros => "zeros",
            }
        )?;
        writeln!(f, "optim.learning_rate = {}", self.optim.learning_rate)?;
        writeln!(f, "optim.beta1 = {}", self.optim.beta1)?;
        writeln!(f, "optim.beta2 = {}", self.optim.beta2)?;
        writeln!(f, "optim.adam_eps = {}", self.optim.adam_eps)?;
        writeln!(f, "optim.warmup_steps = {}", self.optim.warmup_steps)?;
        writeln!(f, "optim.total_steps = {}", self.optim.total_steps)?;
        writeln!(f, "optim.batch_size = {}", self.optim.batch_size)?;
        writeln!(f, "optim.seed = {}", self.optim.seed)?;
        writeln!(f, "optim.tau = {}", self.optim.tau)?;
        writeln!(f, "optim.grad_clip = {}", self.optim.grad_clip)?;
        writeln!(f, "optim.log_interval = {}", self.optim.log_interval)?;
        writeln!(
            f,
            "optim.checkpoint_interval = {}",
            self.optim.checkpoint_interval
        )?;
        writeln!(
            f,
            "optim.precision = {}",
            match self.optim.precision {
                Precision::F64 => "f64",
                Precision::F32 => "f32",
            }
        )
    }
}

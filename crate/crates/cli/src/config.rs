//! Run configuration: one TOML document covering training, surrogate,
//! geometry and evaluator selection. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::Context;
use circinv_core::evaluator::{SurrogateConfig, DEFAULT_MAX_IN_FLIGHT};
use circinv_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::fail::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// `builtin`, `exec:<shell command>` or `tcp:<host:port>`.
    pub evaluator: String,
    pub out: PathBuf,
    /// Pass-band threshold below the peak, in dB, for IOU and insertion loss.
    pub threshold_db: f64,
    pub external: ExternalConfig,
    pub train: TrainConfig,
    pub surrogate: SurrogateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExternalConfig {
    pub timeout_secs: f64,
    pub max_in_flight: usize,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        Self { timeout_secs: 30.0, max_in_flight: DEFAULT_MAX_IN_FLIGHT }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            evaluator: "builtin".into(),
            out: PathBuf::from("run"),
            threshold_db: 3.0,
            external: ExternalConfig::default(),
            train: TrainConfig::default(),
            surrogate: SurrogateConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))
            .map_err(Failure::Io)?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display())).map_err(Failure::Config)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let bad = |msg: String| Failure::Config(anyhow::anyhow!(msg));
        self.train.validate().map_err(|e| bad(format!("[train]: {e}")))?;
        self.surrogate.validate().map_err(|e| bad(format!("[surrogate]: {e}")))?;
        if !(self.threshold_db > 0.0 && self.threshold_db.is_finite()) {
            return Err(bad(format!("threshold_db must be positive, got {}", self.threshold_db)));
        }
        if !(self.external.timeout_secs > 0.0 && self.external.timeout_secs.is_finite()) {
            return Err(bad(format!("external.timeout_secs must be positive, got {}", self.external.timeout_secs)));
        }
        if self.external.max_in_flight == 0 {
            return Err(bad("external.max_in_flight must be at least 1".into()));
        }
        if self.evaluator != "builtin" {
            self.evaluator.parse::<circinv_core::evaluator::Endpoint>().map_err(|e| bad(format!("evaluator: {e}")))?;
        }
        Ok(())
    }

    pub fn defaults_toml() -> String {
        let mut text = String::from(
            "# circinv run configuration (all keys optional; shown with their defaults)\n\
             # evaluator: builtin | exec:<shell command> | tcp:<host:port>\n\
             # train.schedule: exponential | linear; train.geometry.mode: interdependent | direct\n\
             # train.geometry.n_budget (unset = N) widens the boundary to that many resonators\n\
             # train.architecture.variant: mlp {input_size, hidden} | attention {input_size, d_model, heads, layers, ffn}\n\n",
        );
        text.push_str(&toml::to_string_pretty(&Self::default()).expect("defaults serialize"));
        text
    }
}

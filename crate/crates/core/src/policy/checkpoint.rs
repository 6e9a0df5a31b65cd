use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, Policy};
use crate::error::Result;
use crate::geometry::GeometryConfig;
use crate::io::{check_format, ser_f17_vec, write_json, TargetFile};

pub const POLICY_FORMAT: &str = "policy/v1";

/// Sampling state: every draw is a pure function of the seed and the
/// iteration it belongs to, so this pair is the whole generator state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngState {
    pub seed: u64,
    /// Next iteration to be sampled.
    pub counter: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub architecture: Architecture,
    pub n: usize,
    #[serde(serialize_with = "ser_f17_vec")]
    pub theta: Vec<f64>,
    pub iteration: usize,
    pub rng: RngState,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetFile>,
}

impl Checkpoint {
    pub fn new(policy: &Policy, iteration: usize, rng: RngState, geometry: GeometryConfig) -> Self {
        Self {
            format: POLICY_FORMAT.to_string(),
            architecture: policy.architecture().clone(),
            n: policy.n(),
            theta: policy.theta().to_vec(),
            iteration,
            rng,
            geometry,
            target: None,
        }
    }

    pub fn policy(&self) -> Result<Policy> {
        check_format(&self.format, POLICY_FORMAT)?;
        Policy::from_theta(self.architecture.clone(), self.n, self.theta.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Loads and checks the format tag (before anything else, so a file of
    /// another version reports the version) and the parameter count.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let found = value.get("format").and_then(|f| f.as_str()).unwrap_or("<missing>");
        check_format(found, POLICY_FORMAT)?;
        let ck: Self = serde_json::from_value(value)?;
        ck.policy()?;
        Ok(ck)
    }
}

//! Transfer functions, the built-in coupled-resonator surrogate, an external
//! evaluator speaking newline-delimited JSON, and the quality metrics.

mod external;
mod metrics;
mod surrogate;

#[cfg(test)]
mod loopback_tests;

pub use external::{serve_lines, serve_tcp, Endpoint, ExternalEvaluator, Request, DEFAULT_MAX_IN_FLIGHT};
pub use metrics::{error_db, insertion_loss, passband, passband_iou, passband_range, MAG_FLOOR};
pub use surrogate::{surrogate_eval, surrogate_eval_at, SurrogateConfig};

use num_complex::Complex64;
use thiserror::Error;

use crate::error::{contract, Result};
use crate::geometry::CircuitDesign;

#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    /// Strictly increasing, positive (Hz).
    pub freqs: Vec<f64>,
    pub s21: Vec<Complex64>,
}

impl TransferFunction {
    pub fn new(freqs: Vec<f64>, s21: Vec<Complex64>) -> Result<Self> {
        let tf = Self { freqs, s21 };
        tf.validate()?;
        Ok(tf)
    }

    pub fn validate(&self) -> Result<()> {
        validate_grid(&self.freqs)?;
        if self.s21.len() != self.freqs.len() {
            return Err(contract(format!("{} S21 samples for {} frequencies", self.s21.len(), self.freqs.len())));
        }
        if self.s21.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(contract("S21 samples must be finite"));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.freqs.len()
    }

    /// `20 log10 |s21|` with the magnitude floor applied.
    pub fn mag_db(&self) -> Vec<f64> {
        self.s21.iter().map(|c| 20.0 * c.norm().max(MAG_FLOOR).log10()).collect()
    }
}

pub fn validate_grid(freqs: &[f64]) -> Result<()> {
    if freqs.len() < 2 {
        return Err(contract(format!("frequency grid needs at least 2 points, got {}", freqs.len())));
    }
    if !freqs.iter().all(|f| f.is_finite() && *f > 0.0) {
        return Err(contract("frequencies must be positive and finite"));
    }
    if freqs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(contract("frequencies must be strictly increasing"));
    }
    Ok(())
}

/// Grids must agree to a relative 1e-12 per point.
pub fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()))
}

/// `m` points evenly spaced over `[lo, hi]`.
pub fn linear_grid(m: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..m).map(|i| if i + 1 == m { hi } else { lo + (hi - lo) * i as f64 / (m - 1) as f64 }).collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("design {index}: invalid design: {msg}")]
    InvalidDesign { index: usize, msg: String },
    #[error("singular coupling matrix at {freq} Hz")]
    Singular { freq: f64 },
    #[error("design {index}: evaluator timed out")]
    Timeout { index: usize },
    #[error("design {index}: could not decode response: {msg}")]
    Decode { index: usize, msg: String },
    #[error("design {index}: response field `{field}`: {msg}")]
    Validation { index: usize, field: String, msg: String },
    #[error("design {index}: response has {found} samples, expected {expected}")]
    GridMismatch { index: usize, expected: usize, found: usize },
    #[error("design {index}: evaluator reported: {msg}")]
    Remote { index: usize, msg: String },
    #[error("evaluator transport: {0}")]
    Transport(String),
}

/// Anything that turns designs into transfer functions on a frequency grid.
pub trait Evaluator: Sync {
    /// One result per design, in input order.
    fn evaluate_batch(&self, designs: &[CircuitDesign], freqs: &[f64]) -> Vec<Result<TransferFunction, EvalError>>;
}

/// Built-in surrogate evaluator; designs are evaluated in parallel when the
/// `parallel` feature is on.
#[derive(Debug, Clone, Default)]
pub struct SurrogateEvaluator {
    pub config: SurrogateConfig,
    pub exec: crate::par::Exec,
}

impl SurrogateEvaluator {
    pub fn new(config: SurrogateConfig) -> Self {
        Self { config, exec: Default::default() }
    }
}

impl Evaluator for SurrogateEvaluator {
    fn evaluate_batch(&self, designs: &[CircuitDesign], freqs: &[f64]) -> Vec<Result<TransferFunction, EvalError>> {
        crate::par::map_indexed_with(self.exec, designs.len(), |i| {
            surrogate_eval_at(&designs[i], &self.config, freqs).map_err(|e| match e {
                EvalError::InvalidDesign { msg, .. } => EvalError::InvalidDesign { index: i, msg },
                other => other,
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_checks() {
        assert!(validate_grid(&[1.0, 2.0]).is_ok());
        assert!(validate_grid(&[1.0]).is_err());
        assert!(validate_grid(&[2.0, 1.0]).is_err());
        assert!(validate_grid(&[0.0, 1.0]).is_err());
        let g = linear_grid(64, 200e9, 400e9);
        assert_eq!(g.len(), 64);
        assert_eq!(g[0], 200e9);
        assert_eq!(g[63], 400e9);
        assert!(validate_grid(&g).is_ok());
    }
}

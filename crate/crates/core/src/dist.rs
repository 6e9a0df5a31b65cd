//! Beta and categorical distributions: sampling, log-density, closed-form
//! KL divergence and entropy, each with gradients w.r.t. its parameters.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::special::{digamma, ln_beta, trigamma};

/// Continuous values are clamped to `[EPS, 1 - EPS]` before evaluating a log-density.
pub const LOG_PDF_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() {
            Ok(Self { alpha, beta })
        } else {
            Err(contract(format!("beta parameters must be positive and finite, got ({alpha}, {beta})")))
        }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// Marsaglia-Tsang squeeze/rejection sampler for Gamma(shape, 1).
fn gamma_sample<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let u: f64 = rng.random();
        return gamma_sample(shape + 1.0, rng) * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.random();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Draws from Beta(alpha, beta) as the ratio of two gamma variates. The
/// result is kept strictly inside (0, 1).
pub fn beta_sample<R: Rng + ?Sized>(p: &BetaParams, rng: &mut R) -> f64 {
    let x = gamma_sample(p.alpha, rng);
    let y = gamma_sample(p.beta, rng);
    let s = x / (x + y);
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(LOG_PDF_EPS, 1.0 - LOG_PDF_EPS)
}

pub fn beta_log_pdf(p: &BetaParams, x: f64) -> f64 {
    let x = clamp_unit(x);
    (p.alpha - 1.0) * x.ln() + (p.beta - 1.0) * (1.0 - x).ln() - ln_beta(p.alpha, p.beta)
}

/// Log-density and its gradient w.r.t. `(alpha, beta)`.
pub fn beta_log_pdf_grad(p: &BetaParams, x: f64) -> (f64, [f64; 2]) {
    let x = clamp_unit(x);
    let (lx, l1x) = (x.ln(), (1.0 - x).ln());
    let psi_sum = digamma(p.alpha + p.beta);
    let value = (p.alpha - 1.0) * lx + (p.beta - 1.0) * l1x - ln_beta(p.alpha, p.beta);
    (value, [lx - digamma(p.alpha) + psi_sum, l1x - digamma(p.beta) + psi_sum])
}

/// KL(p || q).
pub fn beta_kl(p: &BetaParams, q: &BetaParams) -> f64 {
    beta_kl_grad(p, q).0
}

/// KL(p || q) and its gradient w.r.t. the parameters of `p`.
pub fn beta_kl_grad(p: &BetaParams, q: &BetaParams) -> (f64, [f64; 2]) {
    let (a, b) = (p.alpha, p.beta);
    let (a0, b0) = (q.alpha, q.beta);
    let value = ln_beta(a0, b0) - ln_beta(a, b)
        + (a - a0) * digamma(a)
        + (b - b0) * digamma(b)
        + (a0 - a + b0 - b) * digamma(a + b);
    let tri_sum = trigamma(a + b);
    let rest = (a0 + b0 - a - b) * tri_sum;
    (value, [(a - a0) * trigamma(a) + rest, (b - b0) * trigamma(b) + rest])
}

pub fn beta_entropy(p: &BetaParams) -> f64 {
    beta_entropy_grad(p).0
}

/// Differential entropy and its gradient w.r.t. `(alpha, beta)`.
pub fn beta_entropy_grad(p: &BetaParams) -> (f64, [f64; 2]) {
    let (a, b) = (p.alpha, p.beta);
    let value = ln_beta(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) + (a + b - 2.0) * digamma(a + b);
    let common = (a + b - 2.0) * trigamma(a + b);
    (value, [common - (a - 1.0) * trigamma(a), common - (b - 1.0) * trigamma(b)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalParams {
    pub logits: Vec<f64>,
}

impl CategoricalParams {
    pub fn new(logits: Vec<f64>) -> Result<Self> {
        if logits.len() < 2 || logits.iter().any(|l| !l.is_finite()) {
            return Err(contract(format!("categorical logits must be finite with K >= 2, got {logits:?}")));
        }
        Ok(Self { logits })
    }

    pub fn k(&self) -> usize {
        self.logits.len()
    }

    pub fn log_probs(&self) -> Vec<f64> {
        let m = self.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + self.logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        self.logits.iter().map(|l| l - lse).collect()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs().into_iter().map(f64::exp).collect()
    }
}

pub fn cat_sample<R: Rng + ?Sized>(p: &CategoricalParams, rng: &mut R) -> usize {
    let probs = p.probs();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, pk) in probs.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

pub fn cat_log_pmf(p: &CategoricalParams, k: usize) -> f64 {
    p.log_probs()[k]
}

/// Log-probability of class `k` and its gradient w.r.t. the logits.
pub fn cat_log_pmf_grad(p: &CategoricalParams, k: usize) -> (f64, Vec<f64>) {
    let lp = p.log_probs();
    let grad = lp.iter().enumerate().map(|(j, l)| f64::from(u8::from(j == k)) - l.exp()).collect();
    (lp[k], grad)
}

pub fn cat_kl(p: &CategoricalParams, q: &CategoricalParams) -> f64 {
    cat_kl_grad(p, q).0
}

/// KL(p || q) and its gradient w.r.t. the logits of `p`.
pub fn cat_kl_grad(p: &CategoricalParams, q: &CategoricalParams) -> (f64, Vec<f64>) {
    let lp = p.log_probs();
    let lq = q.log_probs();
    let value: f64 = lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum();
    let grad = lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b - value)).collect();
    (value, grad)
}

pub fn cat_entropy(p: &CategoricalParams) -> f64 {
    cat_entropy_grad(p).0
}

/// Shannon entropy (nats) and its gradient w.r.t. the logits.
pub fn cat_entropy_grad(p: &CategoricalParams) -> (f64, Vec<f64>) {
    let lp = p.log_probs();
    let value: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
    let grad = lp.iter().map(|l| -l.exp() * (l + value)).collect();
    (value, grad)
}

//! Autoregressive policy over compound actions.
//!
//! Dimensions are decoded from the last to the first: the head for dimension
//! `i` sees the constant input and the values already chosen for dimensions
//! `i + 1..D`. Continuous heads are Beta with `alpha, beta = softplus(raw) + 1`,
//! discrete heads are categorical over raw logits.

mod attention;
mod checkpoint;
mod layout;
mod mlp;
mod schema;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{
    beta_entropy_grad, beta_kl_grad, beta_log_pdf, beta_log_pdf_grad, beta_sample, cat_entropy_grad, cat_kl_grad,
    cat_log_pmf, cat_log_pmf_grad, cat_sample,
};
use crate::error::{contract, Result};
use crate::par::{map_indexed_with, Exec};

use attention::{Attention, AttnTape};
use layout::LayoutBuilder;
use mlp::{Mlp, MlpTape};
use schema::sigmoid;

pub use checkpoint::{Checkpoint, RngState, POLICY_FORMAT};
pub use schema::{HeadKind, HeadParams, Schema};

/// Network variant and sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    Mlp { input_size: usize, hidden: Vec<usize> },
    Attention { input_size: usize, d_model: usize, heads: usize, layers: usize, ffn: usize },
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::Mlp { input_size: 32, hidden: vec![128, 128] }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        match self {
            Architecture::Mlp { input_size, hidden } => {
                if *input_size == 0 || hidden.is_empty() || hidden.contains(&0) {
                    return Err(contract(format!(
                        "mlp needs input_size > 0 and nonzero hidden widths, got {input_size} / {hidden:?}"
                    )));
                }
            }
            Architecture::Attention { input_size, d_model, heads, layers, ffn } => {
                if *input_size == 0 || *d_model == 0 || *heads == 0 || *ffn == 0 || *layers == 0 {
                    return Err(contract("attention sizes must all be positive"));
                }
                if d_model % heads != 0 {
                    return Err(contract(format!("d_model {d_model} is not a multiple of heads {heads}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone)]
enum Net {
    Mlp(Mlp),
    Attention(Attention),
}

enum Tape {
    Mlp(MlpTape),
    Attention(AttnTape),
}

/// Scalars the loss is built from, for one action.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Terms {
    pub log_prob: f64,
    /// Sum over dimensions of KL(new || old); zero without a snapshot.
    pub kl: f64,
    pub entropy: f64,
}

/// Coefficients of `Terms` in the scalar whose gradient is accumulated.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TermWeights {
    pub log_prob: f64,
    pub kl: f64,
    pub entropy: f64,
}

/// Actions drawn under one parameter vector together with what the loss
/// needs from that moment: log-probabilities and the raw head outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub heads: Vec<Vec<f64>>,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Per-sample generator: `stream` selects an independent substream of `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone)]
pub struct Policy {
    arch: Architecture,
    schema: Schema,
    theta: Vec<f64>,
    net: Net,
}

impl std::fmt::Debug for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Policy")
            .field("arch", &self.arch)
            .field("n", &self.schema.n())
            .field("params", &self.theta.len())
            .finish()
    }
}

impl Policy {
    fn build(arch: &Architecture, n: usize) -> Result<(LayoutBuilder, Schema, Net)> {
        arch.validate()?;
        if n < 2 {
            return Err(contract(format!("need at least 2 resonators, got {n}")));
        }
        let schema = Schema::for_resonators(n);
        let mut layout = LayoutBuilder::default();
        let net = match arch {
            Architecture::Mlp { input_size, hidden } => Net::Mlp(Mlp::new(&mut layout, &schema, *input_size, hidden)),
            Architecture::Attention { input_size, d_model, heads, layers, ffn } => {
                Net::Attention(Attention::new(&mut layout, &schema, *input_size, *d_model, *heads, *layers, *ffn))
            }
        };
        Ok((layout, schema, net))
    }

    /// Freshly initialized policy for `n` resonators.
    pub fn new(arch: Architecture, n: usize, seed: u64) -> Result<Self> {
        let (layout, schema, net) = Self::build(&arch, n)?;
        let theta = layout.init(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self { arch, schema, theta, net })
    }

    pub fn from_theta(arch: Architecture, n: usize, theta: Vec<f64>) -> Result<Self> {
        let (layout, schema, net) = Self::build(&arch, n)?;
        if theta.len() != layout.len() {
            return Err(contract(format!("architecture needs {} parameters, got {}", layout.len(), theta.len())));
        }
        Ok(Self { arch, schema, theta, net })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.schema.n()
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn rollout(&self, choose: &mut dyn FnMut(usize, &[f64]) -> f64, tape: Option<&mut Tape>) -> Vec<f64> {
        match (&self.net, tape) {
            (Net::Mlp(m), Some(Tape::Mlp(t))) => m.rollout(&self.theta, choose, Some(t)),
            (Net::Mlp(m), _) => m.rollout(&self.theta, choose, None),
            (Net::Attention(a), Some(Tape::Attention(t))) => a.rollout(&self.theta, choose, Some(t)),
            (Net::Attention(a), _) => a.rollout(&self.theta, choose, None),
        }
    }

    fn new_tape(&self) -> Tape {
        match self.net {
            Net::Mlp(_) => Tape::Mlp(MlpTape::default()),
            Net::Attention(_) => Tape::Attention(AttnTape::default()),
        }
    }

    fn check_action(&self, action: &[f64]) -> Result<()> {
        self.schema.check_action(action).map_err(contract)
    }

    /// Raw head outputs of every dimension with the suffixes taken from `action`.
    pub fn heads(&self, action: &[f64]) -> Result<Vec<f64>> {
        self.check_action(action)?;
        Ok(self.rollout(&mut |i, _| action[i], None))
    }

    /// Distribution of dimension `i` given the values of dimensions `i + 1..D`.
    pub fn decode_step(&self, i: usize, suffix: &[f64]) -> Result<HeadParams> {
        let len = self.schema.len();
        if i >= len || suffix.len() != len - 1 - i {
            return Err(contract(format!(
                "dimension {i} needs a suffix of {} values, got {}",
                len.saturating_sub(i + 1),
                suffix.len()
            )));
        }
        let mut full = vec![0.0; len];
        full[i + 1..].copy_from_slice(suffix);
        let raw = self.heads(&full)?;
        Ok(self.schema.params(i, &raw[self.schema.head_range(i)]))
    }

    /// Draws one action; returns it with its log-probability and raw heads.
    pub fn sample_one<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, f64, Vec<f64>) {
        let mut action = vec![0.0; self.schema.len()];
        let mut log_prob = 0.0;
        let raw = self.rollout(
            &mut |i, raw| {
                let (v, lp) = match self.schema.params(i, raw) {
                    HeadParams::Beta(p) => {
                        let x = beta_sample(&p, rng);
                        (x, beta_log_pdf(&p, x))
                    }
                    HeadParams::Categorical(p) => {
                        let k = cat_sample(&p, rng);
                        (k as f64, cat_log_pmf(&p, k))
                    }
                };
                action[i] = v;
                log_prob += lp;
                v
            },
            None,
        );
        (action, log_prob, raw)
    }

    /// Sample `s` uses substream `(stream << 32) | s` of `seed`.
    pub fn sample_batch_with(&self, exec: Exec, count: usize, seed: u64, stream: u64) -> SampledBatch {
        let draws = map_indexed_with(exec, count, |s| {
            let mut rng = substream(seed, (stream << 32) | s as u64);
            self.sample_one(&mut rng)
        });
        let mut batch = SampledBatch {
            actions: Vec::with_capacity(count),
            log_probs: Vec::with_capacity(count),
            heads: Vec::with_capacity(count),
        };
        for (a, lp, h) in draws {
            batch.actions.push(a);
            batch.log_probs.push(lp);
            batch.heads.push(h);
        }
        batch
    }

    pub fn sample_batch(&self, count: usize, seed: u64, stream: u64) -> SampledBatch {
        self.sample_batch_with(Exec::default(), count, seed, stream)
    }

    pub fn log_prob(&self, action: &[f64]) -> Result<f64> {
        Ok(self.terms(action, None)?.log_prob)
    }

    pub fn log_prob_grad(&self, action: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.theta.len()];
        let t =
            self.terms_with_grad(action, None, |_| TermWeights { log_prob: 1.0, ..Default::default() }, &mut grad)?;
        Ok((t.log_prob, grad))
    }

    /// `(sum KL(new || old), sum H(new))` conditioned on the suffixes of `action`.
    pub fn kl_and_entropy(&self, action: &[f64], old_heads: &[f64]) -> Result<(f64, f64)> {
        let t = self.terms(action, Some(old_heads))?;
        Ok((t.kl, t.entropy))
    }

    pub fn terms(&self, action: &[f64], old_heads: Option<&[f64]>) -> Result<Terms> {
        let raw = self.heads(action)?;
        self.check_old(old_heads)?;
        Ok(self.head_terms(action, &raw, old_heads, None).0)
    }

    fn check_old(&self, old_heads: Option<&[f64]>) -> Result<()> {
        match old_heads {
            Some(o) if o.len() != self.schema.head_total() => {
                Err(contract(format!("head snapshot has {} entries, expected {}", o.len(), self.schema.head_total())))
            }
            _ => Ok(()),
        }
    }

    /// Per-dimension values; with `w`, also the gradient of the weighted sum
    /// w.r.t. the raw head outputs.
    fn head_terms(
        &self,
        action: &[f64],
        raw: &[f64],
        old: Option<&[f64]>,
        w: Option<&dyn Fn(&Terms) -> TermWeights>,
    ) -> (Terms, Vec<f64>) {
        let total = self.schema.head_total();
        let want = w.is_some();
        let mut terms = Terms::default();
        let (mut g_lp, mut g_kl, mut g_h) = if want {
            (vec![0.0; total], vec![0.0; total], vec![0.0; total])
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        for i in 0..self.schema.len() {
            let range = self.schema.head_range(i);
            let r = &raw[range.clone()];
            match self.schema.params(i, r) {
                HeadParams::Beta(p) => {
                    let chain = [sigmoid(r[0]), sigmoid(r[1])];
                    let (lp, dlp) = beta_log_pdf_grad(&p, action[i]);
                    let (h, dh) = beta_entropy_grad(&p);
                    terms.log_prob += lp;
                    terms.entropy += h;
                    if want {
                        for c in 0..2 {
                            g_lp[range.start + c] = dlp[c] * chain[c];
                            g_h[range.start + c] = dh[c] * chain[c];
                        }
                    }
                    if let Some(old) = old {
                        if let HeadParams::Beta(q) = self.schema.params(i, &old[range.clone()]) {
                            let (kl, dkl) = beta_kl_grad(&p, &q);
                            terms.kl += kl;
                            if want {
                                for c in 0..2 {
                                    g_kl[range.start + c] = dkl[c] * chain[c];
                                }
                            }
                        }
                    }
                }
                HeadParams::Categorical(p) => {
                    let (lp, dlp) = cat_log_pmf_grad(&p, action[i] as usize);
                    let (h, dh) = cat_entropy_grad(&p);
                    terms.log_prob += lp;
                    terms.entropy += h;
                    if want {
                        g_lp[range.clone()].copy_from_slice(&dlp);
                        g_h[range.clone()].copy_from_slice(&dh);
                    }
                    if let Some(old) = old {
                        if let HeadParams::Categorical(q) = self.schema.params(i, &old[range.clone()]) {
                            let (kl, dkl) = cat_kl_grad(&p, &q);
                            terms.kl += kl;
                            if want {
                                g_kl[range].copy_from_slice(&dkl);
                            }
                        }
                    }
                }
            }
        }
        let Some(w) = w else {
            return (terms, Vec::new());
        };
        let c = w(&terms);
        let d_raw = (0..total).map(|k| c.log_prob * g_lp[k] + c.kl * g_kl[k] + c.entropy * g_h[k]).collect();
        (terms, d_raw)
    }

    /// Evaluates the terms for `action` and accumulates into `grad` the
    /// gradient of `w.log_prob * log_prob + w.kl * kl + w.entropy * entropy`,
    /// where the weights may depend on the evaluated terms.
    pub fn terms_with_grad(
        &self,
        action: &[f64],
        old_heads: Option<&[f64]>,
        weights: impl Fn(&Terms) -> TermWeights,
        grad: &mut [f64],
    ) -> Result<Terms> {
        self.check_action(action)?;
        self.check_old(old_heads)?;
        if grad.len() != self.theta.len() {
            return Err(contract(format!("gradient buffer has {} entries, expected {}", grad.len(), self.theta.len())));
        }
        let mut tape = self.new_tape();
        let raw = self.rollout(&mut |i, _| action[i], Some(&mut tape));
        let (terms, d_raw) = self.head_terms(action, &raw, old_heads, Some(&weights));
        match (&self.net, &tape) {
            (Net::Mlp(m), Tape::Mlp(t)) => m.backward(&self.theta, t, &d_raw, grad),
            (Net::Attention(a), Tape::Attention(t)) => a.backward(&self.theta, t, &d_raw, grad),
            _ => unreachable!("tape matches network"),
        }
        Ok(terms)
    }
}

#[cfg(test)]
mod tests;

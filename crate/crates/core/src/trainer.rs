//! Single-step policy optimization: sample a batch of compound actions, map
//! and evaluate them, turn errors into rewards, and take unclipped
//! ratio-weighted gradient steps regularized by KL to the sampling-time
//! policy and an entropy bonus whose weight decays over iterations.

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::evaluator::{error_db, Evaluator, TransferFunction};
use crate::geometry::{action_len, CircuitDesign, CompoundAction, GeometryConfig};
use crate::par::{map_indexed_with, Exec};
use crate::policy::{
    substream, Architecture, Checkpoint, HeadKind, Policy, RngState, SampledBatch, Schema, TermWeights,
};

/// Samples per partial gradient; partials are summed in index order so the
/// result does not depend on how chunks were scheduled.
pub const GRAD_CHUNK: usize = 16;

/// Stream offset for the mini-batch shuffle generator, disjoint from the
/// per-sample sampling streams.
const SHUFFLE_STREAM: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropySchedule {
    #[default]
    Exponential,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch: usize,
    pub mini_batch: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub alpha_r: f64,
    pub beta_kl: f64,
    pub beta_e0: f64,
    pub beta_min: f64,
    pub beta_decay: f64,
    /// Accepted for completeness; nothing consumes it.
    pub anomalous_rate: f64,
    pub schedule: EntropySchedule,
    pub seed: u64,
    pub n: usize,
    pub checkpoint_every: usize,
    pub architecture: Architecture,
    pub geometry: GeometryConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1500,
            batch: 1024,
            mini_batch: 512,
            epochs: 1,
            learning_rate: 1e-5,
            alpha_r: 0.2,
            beta_kl: 3.0,
            beta_e0: 1.0,
            beta_min: 0.02,
            beta_decay: 0.993,
            anomalous_rate: 0.2,
            schedule: EntropySchedule::Exponential,
            seed: 0,
            n: 3,
            checkpoint_every: 100,
            architecture: Architecture::default(),
            geometry: GeometryConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(contract(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.iterations == 0 || self.epochs == 0 || self.mini_batch == 0 {
            return bad("iterations, epochs and mini_batch must be positive".into());
        }
        if self.mini_batch > self.batch || !self.batch.is_multiple_of(self.mini_batch) {
            return bad(format!("batch {} must be a multiple of mini_batch {}", self.batch, self.mini_batch));
        }
        let coeffs = [
            ("learning_rate", self.learning_rate),
            ("alpha_r", self.alpha_r),
            ("beta_kl", self.beta_kl),
            ("beta_e0", self.beta_e0),
            ("beta_min", self.beta_min),
            ("beta_decay", self.beta_decay),
        ];
        for (name, v) in coeffs {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.alpha_r > 1.0 || self.beta_decay > 1.0 {
            return bad("alpha_r and beta_decay must not exceed 1".into());
        }
        if !(0.0..=1.0).contains(&self.anomalous_rate) {
            return bad(format!("anomalous_rate must lie in [0, 1], got {}", self.anomalous_rate));
        }
        self.architecture.validate()?;
        self.geometry.validate()
    }
}

pub fn reward(target: &TransferFunction, candidate: &TransferFunction) -> Result<f64> {
    Ok(-error_db(target, candidate)?)
}

pub fn update_running_reward(prev: f64, rewards: &[f64], alpha_r: f64) -> Result<f64> {
    if rewards.is_empty() {
        return Err(contract("running reward needs a nonempty batch"));
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    Ok(alpha_r * mean + (1.0 - alpha_r) * prev)
}

pub fn advantages(rewards: &[f64], running: f64) -> Vec<f64> {
    rewards.iter().map(|r| r - running).collect()
}

/// Entropy weight for iteration `t` of `total` from the previous weight.
pub fn decay_entropy_coeff(
    prev: f64,
    beta_min: f64,
    beta_decay: f64,
    schedule: EntropySchedule,
    t: usize,
    total: usize,
) -> f64 {
    let next = match schedule {
        EntropySchedule::Exponential => prev * beta_decay,
        EntropySchedule::Linear => {
            let frac = total.saturating_sub(t) as f64 / total.max(1) as f64;
            beta_min + frac * (prev - beta_min)
        }
    };
    next.max(beta_min)
}

/// First iteration (1-based) whose exponential-schedule weight is at or
/// below `beta_min`.
pub fn iterations_to_floor(beta_e0: f64, beta_min: f64, beta_decay: f64) -> usize {
    let mut beta = beta_e0;
    let mut t = 1;
    while beta > beta_min {
        beta = decay_entropy_coeff(beta, beta_min, beta_decay, EntropySchedule::Exponential, t + 1, usize::MAX);
        t += 1;
    }
    t
}

/// Loss value split into its parts, averaged over the mini-batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub loss: f64,
    pub surrogate: f64,
    pub kl: f64,
    pub entropy: f64,
}

/// `-mean(ratio * adv) + mean(beta_kl * KL - beta_e * H)` over `indices`, and
/// its gradient. Ratios and KL are taken against what `batch` recorded at
/// sampling time.
pub fn loss_and_grad(
    policy: &Policy,
    batch: &SampledBatch,
    indices: &[usize],
    advs: &[f64],
    beta_kl: f64,
    beta_e: f64,
    exec: Exec,
) -> Result<(LossParts, Vec<f64>)> {
    if indices.is_empty() || advs.len() != batch.len() {
        return Err(contract(format!(
            "loss needs a nonempty mini-batch and one advantage per sample ({} for {})",
            advs.len(),
            batch.len()
        )));
    }
    let b = indices.len() as f64;
    let np = policy.num_params();
    let chunks = indices.len().div_ceil(GRAD_CHUNK);
    let partials = map_indexed_with(exec, chunks, |c| -> Result<(LossParts, Vec<f64>)> {
        let mut grad = vec![0.0; np];
        let mut parts = LossParts::default();
        for &s in &indices[c * GRAD_CHUNK..((c + 1) * GRAD_CHUNK).min(indices.len())] {
            let adv = advs[s];
            let old_lp = batch.log_probs[s];
            let t = policy.terms_with_grad(
                &batch.actions[s],
                Some(&batch.heads[s]),
                |t| {
                    let ratio = (t.log_prob - old_lp).exp();
                    TermWeights { log_prob: -ratio * adv / b, kl: beta_kl / b, entropy: -beta_e / b }
                },
                &mut grad,
            )?;
            let ratio = (t.log_prob - old_lp).exp();
            parts.surrogate -= ratio * adv / b;
            parts.kl += t.kl / b;
            parts.entropy += t.entropy / b;
        }
        Ok((parts, grad))
    });
    let mut total = LossParts::default();
    let mut grad = vec![0.0; np];
    for p in partials {
        let (parts, g) = p?;
        total.surrogate += parts.surrogate;
        total.kl += parts.kl;
        total.entropy += parts.entropy;
        for (a, v) in grad.iter_mut().zip(&g) {
            *a += v;
        }
    }
    total.loss = total.surrogate + beta_kl * total.kl - beta_e * total.entropy;
    Ok((total, grad))
}

/// Adaptive-moment optimizer with the usual (0.9, 0.999, 1e-8) constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((p, g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Best {
    pub reward: f64,
    pub action: Vec<f64>,
    pub design: CircuitDesign,
    pub response: TransferFunction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub mean_reward: f64,
    pub running_reward: f64,
    pub best_reward: f64,
    pub sum_kl: f64,
    pub sum_entropy: f64,
    pub beta_e: f64,
}

pub const HISTORY_HEADER: &str = "iteration,mean_reward,running_reward,best_reward,sum_kl,sum_entropy,beta_e";

impl HistoryRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.iteration,
            self.mean_reward,
            self.running_reward,
            self.best_reward,
            self.sum_kl,
            self.sum_entropy,
            self.beta_e
        )
    }
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

/// Rewards of one evaluated batch; failed samples carry `None`.
struct Scored {
    rewards: Vec<Option<f64>>,
    designs: Vec<Option<CircuitDesign>>,
    responses: Vec<Option<TransferFunction>>,
    first_eval_error: Option<crate::evaluator::EvalError>,
}

fn score(
    geometry: &GeometryConfig,
    n: usize,
    actions: &[Vec<f64>],
    target: &TransferFunction,
    evaluator: &dyn Evaluator,
) -> Scored {
    let mapped: Vec<Option<CircuitDesign>> = actions
        .iter()
        .enumerate()
        .map(|(s, a)| match CompoundAction::from_flat(n, a).and_then(|a| geometry.map(&a)) {
            Ok(d) => Some(d),
            Err(e) => {
                warn!("sample {s}: mapping failed: {e}");
                None
            }
        })
        .collect();
    let live: Vec<usize> = (0..actions.len()).filter(|s| mapped[*s].is_some()).collect();
    let designs: Vec<CircuitDesign> = live.iter().map(|s| mapped[*s].clone().unwrap()).collect();
    let results = evaluator.evaluate_batch(&designs, &target.freqs);
    let mut rewards = vec![None; actions.len()];
    let mut responses = vec![None; actions.len()];
    let mut first_eval_error = None;
    for (k, res) in results.into_iter().enumerate() {
        let s = live[k];
        if let Err(e) = &res {
            first_eval_error.get_or_insert_with(|| e.clone());
        }
        match res.map_err(Error::from).and_then(|tf| Ok((reward(target, &tf)?, tf))) {
            Ok((r, tf)) if r.is_finite() => {
                rewards[s] = Some(r);
                responses[s] = Some(tf);
            }
            Ok((r, _)) => warn!("sample {s}: non-finite reward {r}"),
            Err(e) => warn!("sample {s}: evaluation failed: {e}"),
        }
    }
    Scored { rewards, designs: mapped, responses, first_eval_error }
}

/// Training state between iterations.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    target: TransferFunction,
    evaluator: &'a dyn Evaluator,
    policy: Policy,
    adam: Adam,
    running: Option<f64>,
    beta_e: f64,
    iteration: usize,
    best: Option<Best>,
    exec: Exec,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig, target: TransferFunction, evaluator: &'a dyn Evaluator) -> Result<Self> {
        cfg.validate()?;
        target.validate()?;
        let policy = Policy::new(cfg.architecture.clone(), cfg.n, cfg.seed)?;
        let adam = Adam::new(policy.num_params(), cfg.learning_rate);
        let beta_e = cfg.beta_e0;
        Ok(Self {
            cfg,
            target,
            evaluator,
            policy,
            adam,
            running: None,
            beta_e,
            iteration: 0,
            best: None,
            exec: Exec::default(),
        })
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn best(&self) -> Option<&Best> {
        self.best.as_ref()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.cfg.iterations
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            &self.policy,
            self.iteration,
            RngState { seed: self.cfg.seed, counter: self.iteration as u64 + 1 },
            self.cfg.geometry,
        )
    }

    /// Runs one iteration and returns its history row.
    pub fn step(&mut self) -> Result<HistoryRow> {
        let t = self.iteration + 1;
        if t > 1 {
            self.beta_e = decay_entropy_coeff(
                self.beta_e,
                self.cfg.beta_min,
                self.cfg.beta_decay,
                self.cfg.schedule,
                t,
                self.cfg.iterations,
            );
        }
        let batch = self.policy.sample_batch_with(self.exec, self.cfg.batch, self.cfg.seed, t as u64);
        let scored = score(&self.cfg.geometry, self.cfg.n, &batch.actions, &self.target, self.evaluator);
        let valid: Vec<usize> = (0..batch.len()).filter(|s| scored.rewards[*s].is_some()).collect();
        let excluded = batch.len() - valid.len();
        if excluded > 0 {
            warn!("iteration {t}: {excluded} of {} samples excluded", batch.len());
        }
        if valid.len() < self.cfg.mini_batch {
            if let Some(e) = scored.first_eval_error {
                return Err(Error::Eval(e));
            }
            return Err(contract(format!(
                "iteration {t}: only {} valid samples, mini-batch needs {}",
                valid.len(),
                self.cfg.mini_batch
            )));
        }
        let rewards: Vec<f64> = valid.iter().map(|s| scored.rewards[*s].unwrap()).collect();
        let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        for &s in &valid {
            let r = scored.rewards[s].unwrap();
            if self.best.as_ref().is_none_or(|b| r > b.reward) {
                self.best = Some(Best {
                    reward: r,
                    action: batch.actions[s].clone(),
                    design: scored.designs[s].clone().unwrap(),
                    response: scored.responses[s].clone().unwrap(),
                });
            }
        }
        let running = update_running_reward(self.running.unwrap_or(mean), &rewards, self.cfg.alpha_r)?;
        self.running = Some(running);
        let mut advs = vec![0.0; batch.len()];
        for &s in &valid {
            advs[s] = scored.rewards[s].unwrap() - running;
        }

        let mut shuffle = substream(self.cfg.seed, SHUFFLE_STREAM | t as u64);
        let z = self.cfg.mini_batch;
        let mut last = LossParts::default();
        let mut order = valid.clone();
        for _ in 0..self.cfg.epochs {
            order.shuffle(&mut shuffle);
            for chunk in order.chunks_exact(z) {
                let (parts, grad) =
                    loss_and_grad(&self.policy, &batch, chunk, &advs, self.cfg.beta_kl, self.beta_e, self.exec)?;
                if !parts.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFiniteLoss {
                        iteration: t,
                        detail: format!("surrogate {} kl {} entropy {}", parts.surrogate, parts.kl, parts.entropy),
                    });
                }
                self.adam.step(self.policy.theta_mut(), &grad);
                last = parts;
            }
        }
        self.iteration = t;
        let row = HistoryRow {
            iteration: t,
            mean_reward: mean,
            running_reward: running,
            best_reward: self.best.as_ref().map_or(f64::NEG_INFINITY, |b| b.reward),
            sum_kl: last.kl,
            sum_entropy: last.entropy,
            beta_e: self.beta_e,
        };
        debug!("{}", row.csv());
        Ok(row)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Best,
    pub history: Vec<HistoryRow>,
    pub policy: Policy,
}

/// Runs every iteration of `cfg` against `target`.
pub fn train(cfg: &TrainConfig, target: &TransferFunction, evaluator: &dyn Evaluator) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg.clone(), target.clone(), evaluator)?;
    let mut history = Vec::with_capacity(cfg.iterations);
    while !trainer.is_done() {
        history.push(trainer.step()?);
    }
    let best = trainer.best.clone().ok_or_else(|| contract("no sample was ever evaluated"))?;
    Ok(TrainOutcome { best, history, policy: trainer.policy })
}

/// Uniformly random action for `n` resonators.
pub fn uniform_action<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let schema = Schema::for_resonators(n);
    let mut out = Vec::with_capacity(action_len(n));
    for k in schema.kinds() {
        out.push(match k {
            HeadKind::Beta => rng.random::<f64>(),
            HeadKind::Categorical(c) => rng.random_range(0..*c) as f64,
        });
    }
    out
}

/// Best reward among `budget` uniformly random actions, evaluated in
/// batches of `batch`.
pub fn random_search(
    n: usize,
    geometry: &GeometryConfig,
    target: &TransferFunction,
    evaluator: &dyn Evaluator,
    budget: usize,
    batch: usize,
    seed: u64,
) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    let mut done = 0;
    let mut round = 0u64;
    while done < budget {
        let count = batch.min(budget - done);
        let actions: Vec<Vec<f64>> =
            (0..count).map(|s| uniform_action(n, &mut substream(seed, (round << 32) | s as u64))).collect();
        let scored = score(geometry, n, &actions, target, evaluator);
        for r in scored.rewards.into_iter().flatten() {
            best = best.max(r);
        }
        done += count;
        round += 1;
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(contract("random search evaluated no sample successfully"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::SurrogateEvaluator;

    #[test]
    fn defaults_are_as_documented() {
        let c = TrainConfig::default();
        assert_eq!((c.iterations, c.batch, c.mini_batch, c.epochs), (1500, 1024, 512, 1));
        assert_eq!(c.learning_rate, 1e-5);
        assert_eq!((c.alpha_r, c.beta_kl, c.beta_e0, c.beta_min, c.beta_decay), (0.2, 3.0, 1.0, 0.02, 0.993));
        assert_eq!(c.checkpoint_every, 100);
        assert!(c.validate().is_ok());
        let bad = TrainConfig { mini_batch: 300, ..c.clone() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { beta_kl: 0.0, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn reward_examples() {
        let freqs = vec![1.0, 2.0];
        let a = TransferFunction::new(freqs.clone(), vec![num_complex::Complex64::new(0.5, 0.0); 2]).unwrap();
        let b = TransferFunction::new(freqs, vec![num_complex::Complex64::new(0.05, 0.0); 2]).unwrap();
        assert_eq!(reward(&a, &a).unwrap(), 0.0);
        assert!((reward(&a, &b).unwrap() + 20.0).abs() < 1e-9);
    }

    #[test]
    fn running_reward_examples() {
        assert!((update_running_reward(-5.0, &[-3.0], 0.2).unwrap() + 4.6).abs() < 1e-15);
        assert_eq!(update_running_reward(-5.0, &[-3.0, -1.0], 1.0).unwrap(), -2.0);
        assert_eq!(update_running_reward(-5.0, &[-3.0], 0.0).unwrap(), -5.0);
        assert!(update_running_reward(0.0, &[], 0.5).is_err());
    }

    #[test]
    fn advantage_examples() {
        assert_eq!(advantages(&[-1.0, -3.0], -2.0), vec![1.0, -1.0]);
        assert_eq!(advantages(&[-2.0, -2.0], -2.0), vec![0.0, 0.0]);
    }

    #[test]
    fn entropy_schedule_examples() {
        let e = EntropySchedule::Exponential;
        assert_eq!(decay_entropy_coeff(1.0, 0.02, 0.993, e, 2, 10), 0.993);
        assert_eq!(decay_entropy_coeff(0.0201, 0.02, 0.5, e, 2, 10), 0.02);
        let l = EntropySchedule::Linear;
        assert_eq!(decay_entropy_coeff(0.7, 0.02, 0.993, l, 10, 10), 0.02);
        assert!((decay_entropy_coeff(1.0, 0.0, 0.993, l, 5, 10) - 0.5).abs() < 1e-15);
        assert_eq!(iterations_to_floor(1.0, 0.02, 0.993), 558);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut a = Adam::new(2, 0.1);
        let mut th = vec![1.0, -1.0];
        a.step(&mut th, &[3.0, -0.5]);
        assert!((th[0] - 0.9).abs() < 1e-8 && (th[1] + 0.9).abs() < 1e-8);
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            iterations: 3,
            batch: 32,
            mini_batch: 16,
            n: 3,
            architecture: Architecture::Mlp { input_size: 4, hidden: vec![16] },
            ..Default::default()
        }
    }

    fn target() -> TransferFunction {
        let cfg = tiny_cfg();
        let a = uniform_action(3, &mut substream(77, 0));
        let d = cfg.geometry.map(&CompoundAction::from_flat(3, &a).unwrap()).unwrap();
        crate::evaluator::surrogate_eval(&d, &Default::default()).unwrap()
    }

    #[test]
    fn train_runs_and_is_deterministic() {
        let ev = SurrogateEvaluator::default();
        let t = target();
        let a = train(&tiny_cfg(), &t, &ev).unwrap();
        assert_eq!(a.history.len(), 3);
        assert!(a.history.windows(2).all(|w| w[1].best_reward >= w[0].best_reward));
        assert_eq!(a.history[0].beta_e, 1.0);
        assert_eq!(a.history[1].beta_e, 0.993);
        let mut seq = Trainer::new(tiny_cfg(), t.clone(), &ev).unwrap().with_exec(Exec::Sequential);
        let rows: Vec<HistoryRow> = (0..3).map(|_| seq.step().unwrap()).collect();
        assert_eq!(history_csv(&rows), history_csv(&a.history));
        assert_eq!(seq.policy().theta(), a.policy.theta());
        assert!(seq.is_done());
    }

    #[test]
    fn zero_advantage_loss_at_old_params() {
        let p = Policy::new(Architecture::Mlp { input_size: 4, hidden: vec![16] }, 3, 1).unwrap();
        let batch = p.sample_batch(8, 2, 0);
        let idx: Vec<usize> = (0..8).collect();
        let (parts, _) = loss_and_grad(&p, &batch, &idx, &[0.0; 8], 3.0, 0.7, Exec::default()).unwrap();
        assert_eq!(parts.kl, 0.0);
        assert!((parts.loss + 0.7 * parts.entropy).abs() < 1e-10);
        let (doubled, _) = loss_and_grad(&p, &batch, &idx, &[2.0; 8], 3.0, 0.7, Exec::default()).unwrap();
        let (single, _) = loss_and_grad(&p, &batch, &idx, &[1.0; 8], 3.0, 0.7, Exec::default()).unwrap();
        assert!((doubled.surrogate - 2.0 * single.surrogate).abs() < 1e-12);
    }

    #[test]
    fn random_search_is_reproducible() {
        let ev = SurrogateEvaluator::default();
        let t = target();
        let g = GeometryConfig::default();
        let a = random_search(3, &g, &t, &ev, 50, 16, 4).unwrap();
        assert_eq!(a, random_search(3, &g, &t, &ev, 50, 16, 4).unwrap());
        assert!(a <= 0.0);
    }
}

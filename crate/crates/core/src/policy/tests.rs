use super::*;
use crate::dist::{beta_entropy, cat_entropy, BetaParams, CategoricalParams};
use rand::Rng;

fn small_mlp() -> Architecture {
    Architecture::Mlp { input_size: 4, hidden: vec![16, 12] }
}

fn small_attention() -> Architecture {
    Architecture::Attention { input_size: 4, d_model: 8, heads: 2, layers: 2, ffn: 12 }
}

/// Randomizes every parameter so no block sits at its zero init.
fn jitter(p: &mut Policy, seed: u64, scale: f64) {
    let mut rng = substream(seed, 99);
    for t in p.theta_mut() {
        *t += scale * (2.0 * rng.random::<f64>() - 1.0);
    }
}

fn rel_err(g: &[f64], fd: &[f64]) -> f64 {
    let num = g.iter().zip(fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let den = fd.iter().map(|v| v.abs()).fold(0.0, f64::max);
    num / den
}

fn check_grad(arch: Architecture, n: usize) {
    let mut p = Policy::new(arch, n, 5).unwrap();
    jitter(&mut p, 1, 0.3);
    let mut old = p.clone();
    jitter(&mut old, 2, 0.05);
    let mut rng = substream(3, 0);
    let (action, _, _) = old.sample_one(&mut rng);
    let old_heads = old.heads(&action).unwrap();
    let frozen = TermWeights { log_prob: 0.5, kl: 0.7, entropy: -0.3 };
    let mut grad = vec![0.0; p.num_params()];
    p.terms_with_grad(&action, Some(&old_heads), |_| frozen, &mut grad).unwrap();
    let h = 1e-5;
    let fd: Vec<f64> = (0..p.num_params())
        .map(|k| {
            let mut a = p.clone();
            a.theta_mut()[k] += h;
            let mut b = p.clone();
            b.theta_mut()[k] -= h;
            let fa = {
                let t = a.terms(&action, Some(&old_heads)).unwrap();
                frozen.log_prob * t.log_prob + frozen.kl * t.kl + frozen.entropy * t.entropy
            };
            let fb = {
                let t = b.terms(&action, Some(&old_heads)).unwrap();
                frozen.log_prob * t.log_prob + frozen.kl * t.kl + frozen.entropy * t.entropy
            };
            (fa - fb) / (2.0 * h)
        })
        .collect();
    let e = rel_err(&grad, &fd);
    assert!(e <= 1e-4, "relative gradient error {e}");
    assert!(grad.iter().filter(|g| **g != 0.0).count() > p.num_params() / 2);
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    check_grad(small_mlp(), 3);
}

#[test]
fn attention_gradient_matches_finite_differences() {
    check_grad(small_attention(), 3);
}

#[test]
fn mlp_log_prob_gradient_width_32() {
    let mut p = Policy::new(Architecture::Mlp { input_size: 8, hidden: vec![32] }, 2, 11).unwrap();
    jitter(&mut p, 4, 0.2);
    let (action, _, _) = p.sample_one(&mut substream(9, 1));
    let (_, g) = p.log_prob_grad(&action).unwrap();
    let h = 1e-5;
    let fd: Vec<f64> = (0..p.num_params())
        .map(|k| {
            let mut a = p.clone();
            a.theta_mut()[k] += h;
            let mut b = p.clone();
            b.theta_mut()[k] -= h;
            (a.log_prob(&action).unwrap() - b.log_prob(&action).unwrap()) / (2.0 * h)
        })
        .collect();
    assert!(rel_err(&g, &fd) <= 1e-4);
}

#[test]
fn sampled_log_prob_is_reproduced() {
    for arch in [small_mlp(), small_attention()] {
        let p = Policy::new(arch, 4, 2).unwrap();
        let batch = p.sample_batch(16, 7, 0);
        for s in 0..batch.len() {
            let lp = p.log_prob(&batch.actions[s]).unwrap();
            assert!((lp - batch.log_probs[s]).abs() <= 1e-12);
            assert_eq!(p.heads(&batch.actions[s]).unwrap(), batch.heads[s]);
            let t = p.terms(&batch.actions[s], Some(&batch.heads[s])).unwrap();
            assert_eq!(t.kl, 0.0);
        }
    }
}

#[test]
fn batch_shape_and_determinism() {
    let p = Policy::new(Architecture::default(), 4, 0).unwrap();
    let a = p.sample_batch(1024, 42, 3);
    assert_eq!(a.len(), 1024);
    assert!(a.actions.iter().all(|x| x.len() == 27));
    assert!(a.log_probs.iter().all(|l| l.is_finite()));
    let b = p.sample_batch_with(Exec::Sequential, 1024, 42, 3);
    assert_eq!(a, b);
    let c = p.sample_batch(1024, 42, 4);
    assert_ne!(a.actions, c.actions);
    for x in &a.actions {
        crate::geometry::CompoundAction::from_flat(4, x).unwrap();
    }
}

#[test]
fn log_prob_factorizes() {
    let mut p = Policy::new(small_attention(), 3, 8).unwrap();
    jitter(&mut p, 6, 0.4);
    let (action, lp, _) = p.sample_one(&mut substream(1, 2));
    let d = p.schema().len();
    let mut sum = 0.0;
    let mut cat_only = 0.0;
    for i in 0..d {
        match p.decode_step(i, &action[i + 1..]).unwrap() {
            HeadParams::Beta(b) => sum += beta_log_pdf(&b, action[i]),
            HeadParams::Categorical(c) => {
                let l = cat_log_pmf(&c, action[i] as usize);
                sum += l;
                cat_only += c.probs()[action[i] as usize].ln();
            }
        }
    }
    assert!((sum - lp).abs() < 1e-10);
    assert!(cat_only < 0.0);
}

#[test]
fn fresh_heads_are_flat_and_conditional() {
    for arch in [Architecture::default(), small_attention()] {
        let p = Policy::new(arch, 3, 1).unwrap();
        let d = p.schema().len();
        match p.decode_step(d - 1, &[]).unwrap() {
            HeadParams::Beta(b) => {
                assert!((b.alpha - 1.69).abs() < 0.1 && (b.beta - 1.69).abs() < 0.1, "{b:?}");
            }
            HeadParams::Categorical(_) => panic!("last dimension is continuous"),
        }
        assert_eq!(p.decode_step(d - 1, &[]).unwrap(), p.decode_step(d - 1, &[]).unwrap());
        let mut s1 = vec![0.0; d - 1];
        let mut s2 = s1.clone();
        s1[d - 2] = 0.1;
        s2[d - 2] = 0.9;
        assert_ne!(p.decode_step(0, &s1).unwrap(), p.decode_step(0, &s2).unwrap());
        assert!(p.decode_step(0, &s1[1..]).is_err());
    }
}

#[test]
fn zero_parameters_give_closed_form_entropy() {
    let p0 = Policy::new(small_mlp(), 3, 0).unwrap();
    let p = Policy::from_theta(small_mlp(), 3, vec![0.0; p0.num_params()]).unwrap();
    let (action, _, heads) = p.sample_one(&mut substream(0, 0));
    assert!(heads.iter().all(|h| *h == 0.0));
    let (kl, h) = p.kl_and_entropy(&action, &heads).unwrap();
    assert_eq!(kl, 0.0);
    let b = 1.0 + 2f64.ln();
    let mut expected = 0.0;
    for k in p.schema().kinds() {
        expected += match k {
            HeadKind::Beta => beta_entropy(&BetaParams { alpha: b, beta: b }),
            HeadKind::Categorical(c) => cat_entropy(&CategoricalParams { logits: vec![0.0; *c] }),
        };
    }
    // 12 continuous heads and 4-way slits, 3-way direction and shift choices.
    let direct = 12.0 * beta_entropy(&BetaParams { alpha: b, beta: b }) + 3.0 * 4f64.ln() + 4.0 * 3f64.ln();
    assert!((h - expected).abs() < 1e-12);
    assert!((h - direct).abs() < 1e-12);
}

#[test]
fn kl_is_nonnegative_between_policies() {
    let p = Policy::new(small_attention(), 3, 0).unwrap();
    let mut q = p.clone();
    jitter(&mut q, 3, 0.2);
    let batch = p.sample_batch(32, 1, 0);
    for (a, h) in batch.actions.iter().zip(&batch.heads) {
        let (kl, _) = q.kl_and_entropy(a, h).unwrap();
        assert!(kl > 0.0);
    }
}

#[test]
fn schema_mismatch_is_rejected() {
    let p = Policy::new(small_mlp(), 3, 0).unwrap();
    assert!(p.log_prob(&[0.5; 5]).is_err());
    let (action, _, heads) = p.sample_one(&mut substream(0, 0));
    assert!(p.kl_and_entropy(&action, &heads[1..]).is_err());
    let mut bad = action.clone();
    bad[1] = 7.0;
    assert!(p.log_prob(&bad).is_err());
    assert!(Policy::from_theta(small_mlp(), 3, vec![0.0; 3]).is_err());
    assert!(
        Policy::new(Architecture::Attention { input_size: 4, d_model: 6, heads: 4, layers: 1, ffn: 4 }, 3, 0).is_err()
    );
}

#[test]
fn default_size_is_near_budget() {
    let p = Policy::new(Architecture::default(), 4, 0).unwrap();
    let bytes = p.num_params() * 8;
    assert!((200_000..450_000).contains(&bytes), "{bytes} bytes");
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    let mut p = Policy::new(small_attention(), 3, 4).unwrap();
    jitter(&mut p, 8, 0.37);
    let ck = Checkpoint::new(&p, 17, RngState { seed: 9, counter: 18 }, Default::default());
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.policy().unwrap().theta(), p.theta());

    let text = std::fs::read_to_string(&path).unwrap().replace("policy/v1", "policy/v2");
    std::fs::write(&path, text).unwrap();
    let err = Checkpoint::load(&path).unwrap_err().to_string();
    assert!(err.contains("policy/v1") && err.contains("policy/v2"), "{err}");
}

//! Clipped-surrogate PPO updates with an adaptive KL penalty.

use std::ops::Range;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::PpoConfig;
use super::rollout::RolloutBatch;
use crate::error::{Error, Result};
use crate::policy::{ActionDistribution, DistGrad, Net, OutputGrads, PolicyParams, Real};

/// Samples for one gradient step, with their observation rows.
#[derive(Debug, Clone)]
pub struct Minibatch<F> {
    pub x: Array2<F>,
    pub windows: Vec<(usize, usize)>,
    pub movement: Vec<[f64; 2]>,
    pub shoot: Vec<Option<bool>>,
    pub old_log_prob: Vec<f64>,
    pub old_dist: Vec<ActionDistribution>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl<F: Real> Minibatch<F> {
    /// Copies the listed step ranges (each within one stream) out of `batch`.
    pub fn gather(batch: &RolloutBatch, chunks: &[Range<usize>]) -> Self {
        let width = batch.obs_width;
        let mut rows: Vec<F> = Vec::new();
        let n: usize = chunks.iter().map(|c| c.len()).sum();
        let mut mb = Minibatch {
            x: Array2::zeros((0, width)),
            windows: Vec::with_capacity(n),
            movement: Vec::with_capacity(n),
            shoot: Vec::with_capacity(n),
            old_log_prob: Vec::with_capacity(n),
            old_dist: Vec::with_capacity(n),
            advantages: Vec::with_capacity(n),
            returns: Vec::with_capacity(n),
        };
        for c in chunks {
            let steps = &batch.steps[c.clone()];
            let lo = steps.iter().map(|s| s.window.0).min().expect("non-empty chunk");
            let hi = steps.iter().map(|s| s.window.1).max().expect("non-empty chunk");
            let base = rows.len() / width;
            rows.extend(batch.observations[lo * width..(hi + 1) * width].iter().map(|&v| F::of(v as f64)));
            for (k, s) in steps.iter().enumerate() {
                mb.windows.push((s.window.0 - lo + base, s.window.1 - lo + base));
                mb.movement.push(s.movement);
                mb.shoot.push(s.shoot);
                mb.old_log_prob.push(s.log_prob);
                mb.old_dist.push(s.dist);
                mb.advantages.push(batch.advantages[c.start + k]);
                mb.returns.push(batch.returns[c.start + k]);
            }
        }
        mb.x = Array2::from_shape_vec((rows.len() / width, width), rows).expect("row-major table");
        mb
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Loss components averaged over a minibatch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub kl: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

fn dist_at<F: Real>(out: &crate::policy::Outputs<F>, i: usize) -> ActionDistribution {
    ActionDistribution {
        mean: [out.mean[[i, 0]].to_f64(), out.mean[[i, 1]].to_f64()],
        log_std: [out.log_std[0].to_f64(), out.log_std[1].to_f64()],
        shoot_logit: out.shoot_logit.as_ref().map(|s| s[i].to_f64()),
    }
}

/// PPO loss on `mb` and, when requested, its gradient shaped like `net`.
pub fn ppo_loss<F: Real>(net: &Net<F>, mb: &Minibatch<F>, cfg: &PpoConfig, kl_coeff: f64, want_grad: bool) -> (LossTerms, Option<Net<F>>) {
    let cache = net.forward(mb.x.clone(), &mb.windows);
    let b = mb.len();
    let inv = 1.0 / b as f64;
    let mut t = LossTerms::default();
    let mut g = OutputGrads::<F>::zeros(b, net.spec.shoot);
    let mut clipped = 0usize;
    for i in 0..b {
        let new = dist_at(&cache.out, i);
        let old = &mb.old_dist[i];
        let a = mb.advantages[i];
        let logp = new.log_prob(mb.movement[i], mb.shoot[i]);
        let ratio = (logp - mb.old_log_prob[i]).exp();
        let r_clip = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        let (s1, s2) = (ratio * a, r_clip * a);
        t.policy -= s1.min(s2) * inv;
        if (ratio - 1.0).abs() > cfg.clip {
            clipped += 1;
        }
        let v = cache.out.value[i].to_f64();
        let err = v - mb.returns[i];
        let sq = err * err;
        t.value += sq.min(cfg.vf_clip) * inv;
        let kl = old.kl(&new);
        t.kl += kl * inv;
        let h = new.entropy();
        t.entropy += h * inv;
        if want_grad {
            let mut dg = DistGrad::default();
            if s1 <= s2 {
                dg.add(new.log_prob_grad(mb.movement[i], mb.shoot[i]).scaled(-a * ratio * inv));
            }
            if kl_coeff != 0.0 {
                dg.add(old.kl_grad(&new).scaled(kl_coeff * inv));
            }
            if cfg.entropy_coeff != 0.0 {
                dg.add(new.entropy_grad().scaled(-cfg.entropy_coeff * inv));
            }
            for k in 0..2 {
                g.mean[[i, k]] = F::of(dg.mean[k]);
                g.log_std[k] += F::of(dg.log_std[k]);
            }
            if let Some(s) = g.shoot_logit.as_mut() {
                s[i] = F::of(dg.shoot_logit);
            }
            if sq < cfg.vf_clip {
                g.value[i] = F::of(cfg.vf_coeff * 2.0 * err * inv);
            }
        }
    }
    t.clip_fraction = clipped as f64 * inv;
    t.total = t.policy + cfg.vf_coeff * t.value + kl_coeff * t.kl - cfg.entropy_coeff * t.entropy;
    let grad = want_grad.then(|| net.backward(&cache, &g));
    (t, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f32], grad: &[f64], cfg: &PpoConfig) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let step = cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
            *p = (*p as f64 - step) as f32;
        }
    }
}

/// Scales `g` in place so its Euclidean norm is at most `max`; returns the
/// norm before scaling.
pub fn clip_global_norm(g: &mut [f64], max: f64) -> f64 {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max {
        let k = max / norm;
        g.iter_mut().for_each(|x| *x *= k);
    }
    norm
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub total_loss: f64,
    pub kl: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    /// Clip fraction over the first pass through the batch.
    pub first_epoch_clip_fraction: f64,
    pub grad_norm: f64,
    /// Penalty coefficient after adaptation.
    pub kl_coeff: f64,
    pub minibatches: usize,
}

/// Parameters plus optimizer state; owns the update step.
#[derive(Debug, Clone)]
pub struct Learner {
    pub params: PolicyParams,
    pub kl_coeff: f64,
    adam: Adam,
    rng: ChaCha8Rng,
}

#[derive(Serialize, Deserialize)]
pub struct LearnerState {
    pub kl_coeff: f64,
    adam: Adam,
    rng: ChaCha8Rng,
}

impl Learner {
    pub fn new(params: PolicyParams, cfg: &PpoConfig, seed: u64) -> Self {
        let n = params.values.len();
        Learner { params, kl_coeff: cfg.kl_coeff, adam: Adam::new(n), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn state(&self) -> LearnerState {
        LearnerState { kl_coeff: self.kl_coeff, adam: self.adam.clone(), rng: self.rng.clone() }
    }

    pub fn from_state(params: PolicyParams, s: LearnerState) -> Result<Self> {
        if s.adam.m.len() != params.values.len() {
            return Err(Error::CorruptFile("optimizer state does not match parameter count".into()));
        }
        Ok(Learner { params, kl_coeff: s.kl_coeff, adam: s.adam, rng: s.rng })
    }

    /// Consecutive step ranges of at most one policy window each.
    fn chunks(&self, batch: &RolloutBatch) -> Vec<Range<usize>> {
        let len = self.params.spec.history_len();
        let mut out = Vec::new();
        for r in &batch.streams {
            let mut s = r.start;
            while s < r.end {
                let e = (s + len).min(r.end);
                out.push(s..e);
                s = e;
            }
        }
        out
    }

    /// Runs `cfg.epochs` passes of shuffled minibatch steps over `batch`,
    /// whose advantages and returns must already be filled.
    pub fn update(&mut self, batch: &RolloutBatch, cfg: &PpoConfig) -> Result<UpdateStats> {
        assert_eq!(batch.advantages.len(), batch.len(), "compute_gae before updating");
        let mut chunks = self.chunks(batch);
        let per_mb = ((cfg.minibatch as f64 / self.params.spec.history_len() as f64).round() as usize).max(1);
        let mut net = Net::<f32>::from_params(&self.params);
        let mut sum = UpdateStats::default();
        let (mut first_clipped, mut first_n) = (0.0, 0usize);
        for epoch in 0..cfg.epochs {
            chunks.shuffle(&mut self.rng);
            for (k, group) in chunks.chunks(per_mb).enumerate() {
                let mb = Minibatch::<f32>::gather(batch, group);
                let (t, grad) = ppo_loss(&net, &mb, cfg, self.kl_coeff, true);
                if !t.total.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        minibatch: k,
                        detail: format!("policy {} value {} kl {} entropy {}", t.policy, t.value, t.kl, t.entropy),
                    });
                }
                let mut g: Vec<f64> = grad.expect("requested").to_flat().into_iter().map(|v| v as f64).collect();
                let norm = clip_global_norm(&mut g, cfg.grad_clip);
                self.adam.step(&mut self.params.values, &g, cfg);
                net = Net::<f32>::from_params(&self.params);
                if epoch == 0 {
                    first_clipped += t.clip_fraction * mb.len() as f64;
                    first_n += mb.len();
                }
                sum.policy_loss += t.policy;
                sum.value_loss += t.value;
                sum.total_loss += t.total;
                sum.kl += t.kl;
                sum.entropy += t.entropy;
                sum.clip_fraction += t.clip_fraction;
                sum.grad_norm += norm;
                sum.minibatches += 1;
            }
        }
        let n = sum.minibatches.max(1) as f64;
        let mut s = UpdateStats {
            policy_loss: sum.policy_loss / n,
            value_loss: sum.value_loss / n,
            total_loss: sum.total_loss / n,
            kl: sum.kl / n,
            entropy: sum.entropy / n,
            clip_fraction: sum.clip_fraction / n,
            first_epoch_clip_fraction: if first_n > 0 { first_clipped / first_n as f64 } else { 0.0 },
            grad_norm: sum.grad_norm / n,
            kl_coeff: 0.0,
            minibatches: sum.minibatches,
        };
        if s.kl > 2.0 * cfg.kl_target {
            self.kl_coeff *= 2.0;
        } else if s.kl < 0.5 * cfg.kl_target {
            self.kl_coeff *= 0.5;
        }
        s.kl_coeff = self.kl_coeff;
        if !self.params.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: cfg.epochs, minibatch: 0, detail: "parameters became non-finite".into() });
        }
        Ok(s)
    }
}

/// One full update of `params` on `batch`, starting from fresh optimizer
/// state.
pub fn ppo_update(params: &PolicyParams, batch: &RolloutBatch, cfg: &PpoConfig, seed: u64) -> Result<(PolicyParams, UpdateStats)> {
    let mut l = Learner::new(params.clone(), cfg, seed);
    let s = l.update(batch, cfg)?;
    Ok((l.params, s))
}

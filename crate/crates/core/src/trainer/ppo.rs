//! Clipped-surrogate PPO loss, its analytic gradient, and the update loop.
//!
//! For action streams `k` the minimised objective is
//!
//! ```text
//! L = Σ_k −mean_b min(ρ_kb·A_kb, clip(ρ_kb, 1−ε, 1+ε)·A_kb)
//!     + c_v·mean_b (V(s_b) − R_b)²
//!     − c_e·Σ_k H_k
//! ```
//!
//! Each distributed agent's actor only touches its own terms; the critic is shared.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::policy::Policy;
use crate::seed;
use crate::trainer::adam::Adam;
use crate::trainer::gae::normalize_advantages;
use crate::trainer::rollout::{gather, peer_rows, RolloutBuffer};

#[derive(Debug, Clone, PartialEq)]
pub struct StreamBatch {
    pub obs: Array2<f64>,
    pub peers: Option<Array2<f64>>,
    pub actions: Array2<f64>,
    pub old_log_probs: Array1<f64>,
    pub advantages: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub streams: Vec<StreamBatch>,
    pub states: Array2<f64>,
    pub returns: Array1<f64>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn gather(buffer: &RolloutBuffer, advantages: &[Vec<f64>], returns: &[f64], idx: &[usize]) -> Self {
        let streams = buffer
            .streams
            .iter()
            .zip(advantages)
            .map(|(s, adv)| StreamBatch {
                obs: gather(&s.obs, idx),
                peers: s.peers.as_ref().map(|p| {
                    let n_peers = p.nrows() / s.obs.nrows();
                    gather(p, &peer_rows(idx, n_peers))
                }),
                actions: gather(&s.actions, idx),
                old_log_probs: idx.iter().map(|&t| s.log_probs[t]).collect(),
                advantages: idx.iter().map(|&t| adv[t]).collect(),
            })
            .collect();
        Self {
            streams,
            states: gather(&buffer.global_states, idx),
            returns: idx.iter().map(|&t| returns[t]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients {
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl From<&TrainConfig> for LossCoefficients {
    fn from(c: &TrainConfig) -> Self {
        Self {
            clip_eps: c.clip_eps,
            value_coef: c.value_coef,
            entropy_coef: c.entropy_coef,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    /// Surrogate loss averaged over streams.
    pub policy: f64,
    pub value: f64,
    /// Entropy averaged over streams.
    pub entropy: f64,
    pub total: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

fn loss_impl(
    policy: &Policy,
    mb: &Minibatch,
    coef: LossCoefficients,
    mut grad: Option<&mut Policy>,
) -> Result<LossParts> {
    let n_streams = policy.n_streams() as f64;
    let b = mb.len() as f64;
    let mut parts = LossParts::default();
    let mut policy_sum = 0.0;
    let mut entropy_sum = 0.0;
    for (k, sb) in mb.streams.iter().enumerate() {
        let cache = policy.stream_forward(k, sb.obs.view(), sb.peers.as_ref().map(|p| p.view()))?;
        let actor = &policy.agents[k].actor;
        let logp = actor.log_probs(cache.actor(), sb.actions.view());
        let mut d_logp = Array1::zeros(logp.len());
        let mut surrogate = 0.0;
        for i in 0..logp.len() {
            let ratio = (logp[i] - sb.old_log_probs[i]).exp();
            let a = sb.advantages[i];
            let clipped = ratio.clamp(1.0 - coef.clip_eps, 1.0 + coef.clip_eps);
            surrogate += (ratio * a).min(clipped * a);
            let active = if a >= 0.0 {
                ratio <= 1.0 + coef.clip_eps
            } else {
                ratio >= 1.0 - coef.clip_eps
            };
            if active {
                d_logp[i] = -ratio * a / b;
            }
            if (ratio - 1.0).abs() > coef.clip_eps {
                parts.clip_fraction += 1.0;
            }
            parts.approx_kl += sb.old_log_probs[i] - logp[i];
        }
        policy_sum += -surrogate / b;
        entropy_sum += actor.entropy();
        if let Some(g) = grad.as_deref_mut() {
            policy.stream_backward(k, &cache, sb.actions.view(), &d_logp, g);
            g.agents[k].actor.log_std.mapv_inplace(|v| v - coef.entropy_coef);
        }
    }

    let critic_cache = policy.critic.forward_cached(mb.states.view())?;
    let v = critic_cache.output().column(0).to_owned();
    let err = &v - &mb.returns;
    parts.value = err.mapv(|e| e * e).sum() / b;
    if let Some(g) = grad {
        let d_out = (&err * (2.0 * coef.value_coef / b)).insert_axis(ndarray::Axis(1));
        policy.critic.backward(&critic_cache, d_out, &mut g.critic);
    }

    parts.policy = policy_sum / n_streams;
    parts.entropy = entropy_sum / n_streams;
    parts.total = policy_sum + coef.value_coef * parts.value - coef.entropy_coef * entropy_sum;
    parts.clip_fraction /= b * n_streams;
    parts.approx_kl /= b * n_streams;
    Ok(parts)
}

pub fn ppo_loss(policy: &Policy, mb: &Minibatch, coef: LossCoefficients) -> Result<LossParts> {
    loss_impl(policy, mb, coef, None)
}

/// Loss and its gradient with respect to every parameter of `policy`.
pub fn ppo_loss_and_grad(policy: &Policy, mb: &Minibatch, coef: LossCoefficients) -> Result<(LossParts, Policy)> {
    let mut grad = policy.zeros_like();
    let parts = loss_impl(policy, mb, coef, Some(&mut grad))?;
    Ok((parts, grad))
}

/// Scales `grad` so its global norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm(grad: &mut Policy, max_norm: f64) -> f64 {
    let norm = grad.squared_norm().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in grad.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

/// Splits `0..len` into `max(1, len / minibatch)` near-equal shuffled groups.
pub fn minibatch_indices(len: usize, minibatch: usize, rng: &mut seed::StreamRng) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..len).collect();
    perm.shuffle(rng);
    let k = (len / minibatch.max(1)).max(1);
    let base = len / k;
    let extra = len % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        out.push(perm[start..start + size].to_vec());
        start += size;
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean global gradient norm before clipping.
    pub grad_norm: f64,
    /// Largest global gradient norm actually applied.
    pub max_clipped_grad_norm: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub minibatches: usize,
}

/// Advantages normalised per stream, plus value targets.
pub fn prepare_targets(buffer: &RolloutBuffer, cfg: &TrainConfig) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let (mut adv, returns) = buffer.advantages(cfg.gamma, cfg.gae_lambda)?;
    for a in &mut adv {
        normalize_advantages(a);
    }
    Ok((adv, returns))
}

pub fn ppo_update(
    policy: &mut Policy,
    adam: &mut Adam,
    buffer: &RolloutBuffer,
    cfg: &TrainConfig,
    update: usize,
) -> Result<UpdateStats> {
    let (adv, returns) = prepare_targets(buffer, cfg)?;
    let coef = LossCoefficients::from(cfg);
    let mut stats = UpdateStats::default();
    for epoch in 0..cfg.epochs {
        let mut rng = seed::stream(&[cfg.seed, seed::tag::SHUFFLE, update as u64, epoch as u64]);
        for (m, idx) in minibatch_indices(buffer.len(), cfg.minibatch_size, &mut rng)
            .iter()
            .enumerate()
        {
            let mb = Minibatch::gather(buffer, &adv, &returns, idx);
            let (parts, mut grad) = ppo_loss_and_grad(policy, &mb, coef)?;
            if !parts.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    update,
                    epoch,
                    minibatch: m,
                });
            }
            let pre = clip_grad_norm(&mut grad, cfg.max_grad_norm);
            if !pre.is_finite() {
                return Err(Error::NonFiniteLoss {
                    update,
                    epoch,
                    minibatch: m,
                });
            }
            let post = grad.squared_norm().sqrt();
            adam.apply(policy, &grad, cfg.actor_lr, cfg.critic_lr);
            policy.clamp_log_std();

            stats.policy_loss += parts.policy;
            stats.value_loss += parts.value;
            stats.entropy += parts.entropy;
            stats.clip_fraction += parts.clip_fraction;
            stats.approx_kl += parts.approx_kl;
            stats.grad_norm += pre;
            stats.max_clipped_grad_norm = stats.max_clipped_grad_norm.max(post);
            stats.minibatches += 1;
        }
    }
    let k = stats.minibatches.max(1) as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.clip_fraction /= k;
    stats.approx_kl /= k;
    stats.grad_norm /= k;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minibatches_partition_the_buffer() {
        let mut rng = seed::stream(&[1]);
        let groups = minibatch_indices(8000, 4000, &mut rng);
        assert_eq!(groups.len(), 2);
        let mut all: Vec<usize> = groups.concat();
        all.sort_unstable();
        assert_eq!(all, (0..8000).collect::<Vec<_>>());

        let groups = minibatch_indices(16000, 8192, &mut rng);
        assert_eq!(groups.len(), 1);
        let groups = minibatch_indices(10, 3, &mut rng);
        assert_eq!(groups.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 3, 3]);
    }
}

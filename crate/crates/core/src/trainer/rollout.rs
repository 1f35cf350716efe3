//! On-policy rollout collection.

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::env::ReachEnv;
use crate::error::{Error, Result};
use crate::policy::{ActionMode, Architecture, Policy, PEER_TUPLE_DIM};
use crate::seed;
use crate::trainer::gae::compute_gae;

/// Per-stream trajectory tensors, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamData {
    pub obs: Array2<f64>,
    /// `n−1` consecutive peer-tuple rows per time step (message-passing streams only).
    pub peers: Option<Array2<f64>>,
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    /// Training reward of this stream, with truncation bootstraps folded in.
    pub rewards: Vec<f64>,
}

/// Contiguous steps of one environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    /// `V(s)` after the last step, or 0 if that step ended an episode.
    pub bootstrap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub length: usize,
    pub success: bool,
    pub final_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub streams: Vec<StreamData>,
    pub global_states: Array2<f64>,
    pub values: Vec<f64>,
    /// Reward the critic regresses on (team reward, or the agent mean for distributed).
    pub critic_rewards: Vec<f64>,
    /// Same stream without truncation bootstraps, for logging.
    pub raw_team_rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub segments: Vec<Segment>,
    pub episodes: Vec<EpisodeSummary>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean_team_reward(&self) -> f64 {
        self.raw_team_rewards.iter().sum::<f64>() / self.len().max(1) as f64
    }

    /// Raw per-stream advantages and the critic's value targets.
    pub fn advantages(&self, gamma: f64, lambda: f64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let gae_over_segments = |rewards: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut adv = Vec::with_capacity(self.len());
            let mut ret = Vec::with_capacity(self.len());
            for seg in &self.segments {
                let r = seg.start..seg.start + seg.len;
                let (a, rt) = compute_gae(
                    &rewards[r.clone()],
                    &self.values[r.clone()],
                    &self.dones[r],
                    seg.bootstrap,
                    gamma,
                    lambda,
                )?;
                adv.extend(a);
                ret.extend(rt);
            }
            Ok((adv, ret))
        };
        let per_stream = self
            .streams
            .iter()
            .map(|s| gae_over_segments(&s.rewards).map(|(a, _)| a))
            .collect::<Result<Vec<_>>>()?;
        let (_, returns) = gae_over_segments(&self.critic_rewards)?;
        Ok((per_stream, returns))
    }
}

#[derive(Default)]
struct EnvTrace {
    obs: Vec<Vec<f64>>,
    peers: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    log_probs: Vec<Vec<f64>>,
    rewards: Vec<Vec<f64>>,
    states: Vec<f64>,
    values: Vec<f64>,
    critic_rewards: Vec<f64>,
    raw_team_rewards: Vec<f64>,
    dones: Vec<bool>,
    bootstrap: f64,
    episodes: Vec<EpisodeSummary>,
}

fn run_env(policy: &Policy, env: &mut ReachEnv, steps: usize, gamma: f64, keys: [u64; 4]) -> Result<EnvTrace> {
    let mut rng = seed::stream(&keys);
    let streams = policy.n_streams();
    let target = env.config().target_vec();
    let mut tr = EnvTrace {
        obs: vec![Vec::new(); streams],
        peers: vec![Vec::new(); streams],
        actions: vec![Vec::new(); streams],
        log_probs: vec![Vec::with_capacity(steps); streams],
        rewards: vec![Vec::with_capacity(steps); streams],
        ..Default::default()
    };
    for t in 0..steps {
        let snap = env.snapshot();
        let action = policy.act(&snap, &target, ActionMode::Stochastic, &mut rng)?;
        let value = policy.value(&snap, &target)?;
        for k in 0..streams {
            tr.obs[k].extend(policy.stream_observation(k, &snap, &target));
            if let Some(p) = policy.stream_peers(k, &snap, &target) {
                tr.peers[k].extend(p);
            }
            tr.actions[k].extend_from_slice(&action.stream_actions[k]);
            tr.log_probs[k].push(action.log_probs[k]);
        }
        tr.states.extend(policy.scaling.global_state(&snap, &target));
        tr.values.push(value);

        let out = env.step(&action.joint)?;
        let bonus = if out.truncated {
            gamma * policy.value(&env.snapshot(), &target)?
        } else {
            0.0
        };
        let team = match policy.architecture {
            Architecture::Centralised => {
                tr.rewards[0].push(out.reward_centralised + bonus);
                out.reward_centralised
            }
            Architecture::Distributed => {
                for (k, r) in out.rewards_distributed.iter().enumerate() {
                    tr.rewards[k].push(r + bonus);
                }
                out.rewards_distributed.iter().sum::<f64>() / out.rewards_distributed.len() as f64
            }
        };
        tr.critic_rewards.push(team + bonus);
        tr.raw_team_rewards.push(team);
        tr.dones.push(out.done);
        if out.done {
            tr.episodes.push(EpisodeSummary {
                length: out.info.step,
                success: out.success,
                final_distance: out.info.tip_distance,
            });
            env.reset(seed::derive_seed(&[keys[0], keys[1], keys[2], keys[3], t as u64]));
        }
    }
    tr.bootstrap = if tr.dones.last().copied().unwrap_or(true) {
        0.0
    } else {
        policy.value(&env.snapshot(), &target)?
    };
    Ok(tr)
}

fn to_rows(flat: Vec<f64>, cols: usize) -> Array2<f64> {
    let n = flat.len() / cols.max(1);
    Array2::from_shape_vec((n, cols), flat).expect("row-major trace")
}

/// Runs every environment for `steps_per_env` steps under a frozen policy.
///
/// Environment `e` draws from the stream keyed by `(seed, e, update)`, and
/// traces are concatenated in environment order, so the buffer does not
/// depend on thread scheduling.
pub fn collect_rollouts(
    policy: &Policy,
    envs: &mut [ReachEnv],
    steps_per_env: usize,
    gamma: f64,
    seed: u64,
    update: usize,
) -> Result<RolloutBuffer> {
    if envs.is_empty() || steps_per_env == 0 {
        return Err(Error::config("rollouts need at least one environment and one step"));
    }
    let traces: Vec<EnvTrace> = envs
        .par_iter_mut()
        .enumerate()
        .map(|(e, env)| {
            run_env(
                policy,
                env,
                steps_per_env,
                gamma,
                [seed, seed::tag::ROLLOUT, e as u64, update as u64],
            )
        })
        .collect::<Result<_>>()?;

    let streams = policy.n_streams();
    let n = policy.n_sections;
    let state_dim = 6 * n + 3;
    let mut segments = Vec::with_capacity(traces.len());
    let mut buf = EnvTrace {
        obs: vec![Vec::new(); streams],
        peers: vec![Vec::new(); streams],
        actions: vec![Vec::new(); streams],
        log_probs: vec![Vec::new(); streams],
        rewards: vec![Vec::new(); streams],
        ..Default::default()
    };
    let mut start = 0;
    for tr in traces {
        segments.push(Segment {
            start,
            len: tr.values.len(),
            bootstrap: tr.bootstrap,
        });
        start += tr.values.len();
        for k in 0..streams {
            buf.obs[k].extend(&tr.obs[k]);
            buf.peers[k].extend(&tr.peers[k]);
            buf.actions[k].extend(&tr.actions[k]);
            buf.log_probs[k].extend(&tr.log_probs[k]);
            buf.rewards[k].extend(&tr.rewards[k]);
        }
        buf.states.extend(tr.states);
        buf.values.extend(tr.values);
        buf.critic_rewards.extend(tr.critic_rewards);
        buf.raw_team_rewards.extend(tr.raw_team_rewards);
        buf.dones.extend(tr.dones);
        buf.episodes.extend(tr.episodes);
    }

    let streams_data = (0..streams)
        .map(|k| {
            let obs_dim = buf.obs[k].len() / start;
            let act_dim = buf.actions[k].len() / start;
            StreamData {
                obs: to_rows(std::mem::take(&mut buf.obs[k]), obs_dim),
                peers: policy.agents[k]
                    .comm
                    .as_ref()
                    .map(|_| to_rows(std::mem::take(&mut buf.peers[k]), PEER_TUPLE_DIM)),
                actions: to_rows(std::mem::take(&mut buf.actions[k]), act_dim),
                log_probs: std::mem::take(&mut buf.log_probs[k]),
                rewards: std::mem::take(&mut buf.rewards[k]),
            }
        })
        .collect();

    Ok(RolloutBuffer {
        streams: streams_data,
        global_states: to_rows(buf.states, state_dim),
        values: buf.values,
        critic_rewards: buf.critic_rewards,
        raw_team_rewards: buf.raw_team_rewards,
        dones: buf.dones,
        segments,
        episodes: buf.episodes,
    })
}

/// Row indices of the peer tuples belonging to time steps `idx`.
pub(crate) fn peer_rows(idx: &[usize], n_peers: usize) -> Vec<usize> {
    idx.iter().flat_map(|&t| t * n_peers..(t + 1) * n_peers).collect()
}

pub(crate) fn gather(a: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    a.select(Axis(0), idx)
}

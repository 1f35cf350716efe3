//! Centralised and distributed actor-critic policies.
//!
//! Both architectures are a list of *action streams* plus one critic over the
//! global state:
//!
//! - centralised: one stream mapping the global state `s ∈ R^{6n+3}` to a
//!   Gaussian over the joint action `u ∈ R^{3n}`;
//! - distributed: `n` streams, each mapping `[o_i; c_i] ∈ R^{6n+4+16}` to a
//!   Gaussian over the agent's force `a_i ∈ R³`, where the message context
//!   `c_i = f_agg(mean_{j≠i} f_enc(tuple_j))` is computed by the agent's own
//!   encoder and aggregator from peer tuples `[p_j, f_j, g]`.
//!
//! Gaussian means are `f_max·tanh(head)`; standard deviations are
//! state-independent, `exp(log_std)` with `log_std` clamped to `[-20, 2]`.
//! Network inputs are scaled: positions and target by the rod length, forces
//! by `f_max`.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{
    build_global_state, build_local_observation, global_state_dim, local_obs_dim, JointAction, NodeSnapshot,
};
use crate::error::{Error, Result};
use crate::nn::{sorted_group_mean, tanh, tanh_inplace, Mlp, MlpCache, Parameters};
use crate::rod::Vec3;
use crate::seed;

pub const MESSAGE_DIM: usize = 16;
pub const PEER_TUPLE_DIM: usize = 9;
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Centralised,
    Distributed,
}

impl Architecture {
    pub const BOTH: [Architecture; 2] = [Architecture::Centralised, Architecture::Distributed];

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "centralised" | "centralized" | "ppo" => Ok(Architecture::Centralised),
            "distributed" | "mappo" => Ok(Architecture::Distributed),
            other => Err(Error::config(format!("unknown architecture '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Centralised => "centralised",
            Architecture::Distributed => "distributed",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Architecture::Centralised => "Centralised",
            Architecture::Distributed => "Distributed",
        }
    }

    /// Which reward the architecture is trained on.
    pub fn reward_stream(self) -> &'static str {
        match self {
            Architecture::Centralised => "team",
            Architecture::Distributed => "mixed_local",
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hidden-layer widths of every network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkShape {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    pub aggregator_hidden: Vec<usize>,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self {
            actor_hidden: vec![128, 128],
            critic_hidden: vec![256, 256],
            encoder_hidden: vec![64],
            aggregator_hidden: vec![32],
        }
    }
}

impl NetworkShape {
    pub fn validate(&self) -> Result<()> {
        for (name, widths) in [
            ("actor_hidden", &self.actor_hidden),
            ("critic_hidden", &self.critic_hidden),
            ("encoder_hidden", &self.encoder_hidden),
            ("aggregator_hidden", &self.aggregator_hidden),
        ] {
            if widths.is_empty() || widths.contains(&0) {
                return Err(Error::config(format!(
                    "{name} needs at least one hidden layer of positive width, got {widths:?}"
                )));
            }
        }
        Ok(())
    }
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(input);
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

/// Scales physical observations into network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputScaling {
    pub length: f64,
    pub f_max: f64,
}

impl InputScaling {
    pub fn global_state(&self, snap: &NodeSnapshot, target: &Vec3) -> Vec<f64> {
        let n = snap.n_agents();
        let mut s = build_global_state(&snap.positions, &snap.forces, target);
        for (k, v) in s.iter_mut().enumerate() {
            *v /= if (3 * n..6 * n).contains(&k) {
                self.f_max
            } else {
                self.length
            };
        }
        s
    }

    pub fn local_observation(&self, agent: usize, snap: &NodeSnapshot, target: &Vec3) -> Vec<f64> {
        let n = snap.n_agents();
        let mut o = build_local_observation(agent, &snap.positions, &snap.forces, target, n);
        let peer_forces_start = 10 + 3 * (n - 1);
        for (k, v) in o.iter_mut().enumerate().skip(1) {
            let is_force = (4..7).contains(&k) || k >= peer_forces_start;
            *v /= if is_force { self.f_max } else { self.length };
        }
        o
    }

    /// `[p_j, f_j, g]` for every agent `j ≠ agent`, ascending, flattened.
    pub fn peer_tuples(&self, agent: usize, snap: &NodeSnapshot, target: &Vec3) -> Vec<f64> {
        let mut rows = Vec::with_capacity((snap.n_agents() - 1) * PEER_TUPLE_DIM);
        for j in (0..snap.n_agents()).filter(|&j| j != agent) {
            rows.extend(snap.positions[j].iter().map(|p| p / self.length));
            rows.extend(snap.forces[j].iter().map(|f| f / self.f_max));
            rows.extend(target.iter().map(|g| g / self.length));
        }
        rows
    }
}

/// Diagonal Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl Gaussian {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    pub fn log_prob(&self, action: &[f64]) -> f64 {
        gaussian_log_prob(&self.mean, &self.log_std, action)
    }

    pub fn entropy(&self) -> f64 {
        gaussian_entropy(&self.log_std)
    }

    /// Reparameterised draw `mean + std ⊙ ξ` and its log density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, f64) {
        let action: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, l)| {
                let xi: f64 = rng.sample(StandardNormal);
                m + l.exp() * xi
            })
            .collect();
        let lp = self.log_prob(&action);
        (action, lp)
    }

    pub fn mode(&self) -> Vec<f64> {
        self.mean.clone()
    }
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, l), a)| {
            let z = (a - m) * (-l).exp();
            -0.5 * z * z - l - HALF_LOG_TWO_PI
        })
        .sum()
}

/// `Σ_j (½·log(2πe) + log σ_j)`.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|l| 0.5 + HALF_LOG_TWO_PI + l).sum()
}

/// Tanh-bounded Gaussian mean head with a free log-std vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianActor {
    pub net: Mlp,
    pub log_std: Array1<f64>,
    pub f_max: f64,
}

#[derive(Debug, Clone)]
pub struct ActorCache {
    mlp: MlpCache,
    squashed: Array2<f64>,
}

impl ActorCache {
    pub fn mean(&self, f_max: f64) -> Array2<f64> {
        &self.squashed * f_max
    }
}

impl GaussianActor {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], output: usize, f_max: f64, rng: &mut R) -> Self {
        let net = Mlp::orthogonal(&widths(input, hidden, output), 1.0, 0.01, rng);
        let init = (0.5 * f_max).ln().clamp(LOG_STD_MIN, LOG_STD_MAX);
        Self {
            net,
            log_std: Array1::from_elem(output, init),
            f_max,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn distribution(&self, input: &[f64]) -> Result<Gaussian> {
        let raw = self.net.forward_one(input)?;
        Ok(Gaussian {
            mean: raw.iter().map(|&r| self.f_max * tanh(r)).collect(),
            log_std: self.log_std.to_vec(),
        })
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<ActorCache> {
        let mlp = self.net.forward_cached(x)?;
        let mut squashed = mlp.output().clone();
        tanh_inplace(&mut squashed);
        Ok(ActorCache { mlp, squashed })
    }

    pub fn log_probs(&self, cache: &ActorCache, actions: ArrayView2<f64>) -> Array1<f64> {
        let mean = cache.mean(self.f_max);
        let ls = self.log_std.as_slice().expect("contiguous");
        Array1::from_iter(
            mean.outer_iter()
                .zip(actions.outer_iter())
                .map(|(m, a)| gaussian_log_prob(m.as_slice().unwrap(), ls, &a.to_vec())),
        )
    }

    pub fn entropy(&self) -> f64 {
        gaussian_entropy(self.log_std.as_slice().expect("contiguous"))
    }

    /// Backpropagates `dL/dlogπ(a_b)` for each row; returns `dL/dinput`.
    pub fn backward(
        &self,
        cache: &ActorCache,
        actions: ArrayView2<f64>,
        d_logp: &Array1<f64>,
        grad: &mut GaussianActor,
    ) -> Array2<f64> {
        let inv_var = self.log_std.mapv(|l| (-2.0 * l).exp());
        let mut d_raw = Array2::zeros(cache.squashed.raw_dim());
        for (b, w) in d_logp.iter().enumerate() {
            for j in 0..self.output_dim() {
                let t = cache.squashed[(b, j)];
                let diff = actions[(b, j)] - self.f_max * t;
                let dlogp_dmean = diff * inv_var[j];
                d_raw[(b, j)] = w * dlogp_dmean * self.f_max * (1.0 - t * t);
                grad.log_std[j] += w * (diff * diff * inv_var[j] - 1.0);
            }
        }
        self.net.backward(&cache.mlp, d_raw, &mut grad.net)
    }

    pub fn clamp_log_std(&mut self) {
        self.log_std.mapv_inplace(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            net: self.net.zeros_like(),
            log_std: Array1::zeros(self.log_std.len()),
            f_max: self.f_max,
        }
    }
}

/// Encoder → mean-pool → aggregator message pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct CommNet {
    pub encoder: Mlp,
    pub aggregator: Mlp,
}

#[derive(Debug, Clone)]
pub struct CommCache {
    n_peers: usize,
    encoder: MlpCache,
    aggregator: MlpCache,
}

impl CommCache {
    pub fn context(&self) -> &Array2<f64> {
        self.aggregator.output()
    }
}

impl CommNet {
    pub fn new<R: Rng + ?Sized>(shape: &NetworkShape, rng: &mut R) -> Self {
        Self {
            encoder: Mlp::orthogonal(
                &widths(PEER_TUPLE_DIM, &shape.encoder_hidden, MESSAGE_DIM),
                1.0,
                1.0,
                rng,
            ),
            aggregator: Mlp::orthogonal(
                &widths(MESSAGE_DIM, &shape.aggregator_hidden, MESSAGE_DIM),
                1.0,
                1.0,
                rng,
            ),
        }
    }

    /// `c = f_agg(mean_j f_enc(tuple_j))` for one agent.
    ///
    /// Each peer is encoded on its own and the pool sums in sorted order, so the
    /// result is bitwise invariant under any permutation of `peers`.
    pub fn encode_and_aggregate(&self, peers: &[[f64; PEER_TUPLE_DIM]]) -> Result<Vec<f64>> {
        if peers.is_empty() {
            return Err(Error::config("message pooling needs at least one peer"));
        }
        let mut encoded = Array2::zeros((peers.len(), MESSAGE_DIM));
        for (i, peer) in peers.iter().enumerate() {
            encoded
                .row_mut(i)
                .assign(&Array1::from(self.encoder.forward_one(peer)?));
        }
        let pooled = sorted_group_mean(&encoded, peers.len());
        self.aggregator.forward_one(pooled.as_slice().expect("contiguous"))
    }

    /// Batched pipeline. `peers` holds `n_peers` consecutive rows per sample.
    pub fn forward_batch(&self, peers: ArrayView2<f64>, n_peers: usize) -> Result<CommCache> {
        if n_peers == 0 {
            return Err(Error::config("message pooling needs at least one peer"));
        }
        let encoder = self.encoder.forward_cached(peers)?;
        let pooled = sorted_group_mean(encoder.output(), n_peers);
        let aggregator = self.aggregator.forward_cached(pooled.view())?;
        Ok(CommCache {
            n_peers,
            encoder,
            aggregator,
        })
    }

    pub fn backward(&self, cache: &CommCache, d_context: Array2<f64>, grad: &mut CommNet) {
        let d_pooled = self
            .aggregator
            .backward(&cache.aggregator, d_context, &mut grad.aggregator);
        let scale = 1.0 / cache.n_peers as f64;
        let batch = d_pooled.nrows();
        let mut d_encoded = Array2::zeros((batch * cache.n_peers, MESSAGE_DIM));
        for b in 0..batch {
            for j in 0..cache.n_peers {
                d_encoded
                    .row_mut(b * cache.n_peers + j)
                    .assign(&(&d_pooled.row(b) * scale));
            }
        }
        self.encoder.backward(&cache.encoder, d_encoded, &mut grad.encoder);
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            aggregator: self.aggregator.zeros_like(),
        }
    }
}

/// One action stream: an actor plus, for distributed agents, its message pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNets {
    pub actor: GaussianActor,
    pub comm: Option<CommNet>,
}

/// Forward state for one action stream over a batch.
pub struct StreamCache {
    comm: Option<CommCache>,
    actor: ActorCache,
    obs_cols: usize,
}

impl StreamCache {
    pub fn actor(&self) -> &ActorCache {
        &self.actor
    }
}

/// Trainable parameters are split into actor-side (actors, log-stds, message
/// networks) and critic-side groups, which use separate learning rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Actor,
    Critic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Stochastic,
    Deterministic,
}

/// Output of one policy query.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyAction {
    pub joint: JointAction,
    /// Per-stream action vectors (one joint vector, or one 3-vector per agent).
    pub stream_actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub architecture: Architecture,
    pub n_sections: usize,
    pub scaling: InputScaling,
    pub shape: NetworkShape,
    pub agents: Vec<AgentNets>,
    pub critic: Mlp,
}

impl Policy {
    pub fn new(
        architecture: Architecture,
        n_sections: usize,
        scaling: InputScaling,
        shape: NetworkShape,
        init_seed: u64,
    ) -> Result<Self> {
        shape.validate()?;
        if n_sections < 2 {
            return Err(Error::config("policies need at least two sections"));
        }
        let mut rng = seed::stream(&[init_seed, seed::tag::INIT]);
        let n = n_sections;
        let agents = match architecture {
            Architecture::Centralised => vec![AgentNets {
                actor: GaussianActor::new(global_state_dim(n), &shape.actor_hidden, 3 * n, scaling.f_max, &mut rng),
                comm: None,
            }],
            Architecture::Distributed => (0..n)
                .map(|_| AgentNets {
                    actor: GaussianActor::new(
                        local_obs_dim(n) + MESSAGE_DIM,
                        &shape.actor_hidden,
                        3,
                        scaling.f_max,
                        &mut rng,
                    ),
                    comm: Some(CommNet::new(&shape, &mut rng)),
                })
                .collect(),
        };
        let critic = Mlp::orthogonal(
            &widths(global_state_dim(n), &shape.critic_hidden, 1),
            1.0,
            1.0,
            &mut rng,
        );
        Ok(Self {
            architecture,
            n_sections,
            scaling,
            shape,
            agents,
            critic,
        })
    }

    pub fn n_streams(&self) -> usize {
        self.agents.len()
    }

    /// Observation part of a stream's input (before any message context).
    pub fn stream_observation(&self, stream: usize, snap: &NodeSnapshot, target: &Vec3) -> Vec<f64> {
        match self.architecture {
            Architecture::Centralised => self.scaling.global_state(snap, target),
            Architecture::Distributed => self.scaling.local_observation(stream, snap, target),
        }
    }

    pub fn stream_peers(&self, stream: usize, snap: &NodeSnapshot, target: &Vec3) -> Option<Vec<f64>> {
        self.agents[stream]
            .comm
            .as_ref()
            .map(|_| self.scaling.peer_tuples(stream, snap, target))
    }

    /// Action distribution of every stream. Reads only actor-side inputs.
    pub fn distributions(&self, snap: &NodeSnapshot, target: &Vec3) -> Result<Vec<Gaussian>> {
        self.check_snapshot(snap)?;
        (0..self.n_streams())
            .map(|k| {
                let mut input = self.stream_observation(k, snap, target);
                if let Some(comm) = &self.agents[k].comm {
                    let flat = self.scaling.peer_tuples(k, snap, target);
                    let peers: Vec<[f64; PEER_TUPLE_DIM]> = flat
                        .chunks_exact(PEER_TUPLE_DIM)
                        .map(|c| c.try_into().expect("chunk of nine"))
                        .collect();
                    input.extend(comm.encode_and_aggregate(&peers)?);
                }
                self.agents[k].actor.distribution(&input)
            })
            .collect()
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        snap: &NodeSnapshot,
        target: &Vec3,
        mode: ActionMode,
        rng: &mut R,
    ) -> Result<PolicyAction> {
        let dists = self.distributions(snap, target)?;
        let mut stream_actions = Vec::with_capacity(dists.len());
        let mut log_probs = Vec::with_capacity(dists.len());
        for d in &dists {
            let (a, lp) = match mode {
                ActionMode::Stochastic => d.sample(rng),
                ActionMode::Deterministic => {
                    let a = d.mode();
                    let lp = d.log_prob(&a);
                    (a, lp)
                }
            };
            stream_actions.push(a);
            log_probs.push(lp);
        }
        let flat: Vec<f64> = stream_actions.iter().flatten().copied().collect();
        Ok(PolicyAction {
            joint: JointAction::from_flat(&flat),
            stream_actions,
            log_probs,
        })
    }

    /// Critic estimate `V(s)`.
    pub fn value(&self, snap: &NodeSnapshot, target: &Vec3) -> Result<f64> {
        self.check_snapshot(snap)?;
        Ok(self.critic.forward_one(&self.scaling.global_state(snap, target))?[0])
    }

    fn check_snapshot(&self, snap: &NodeSnapshot) -> Result<()> {
        if snap.n_agents() != self.n_sections || snap.forces.len() != self.n_sections {
            return Err(Error::Dimension {
                context: "policy snapshot agents",
                expected: self.n_sections,
                actual: snap.n_agents(),
            });
        }
        Ok(())
    }

    /// Batched forward for stream `k`. `obs` rows are stream observations,
    /// `peers` (distributed only) holds `n−1` tuple rows per sample.
    pub fn stream_forward(
        &self,
        k: usize,
        obs: ArrayView2<f64>,
        peers: Option<ArrayView2<f64>>,
    ) -> Result<StreamCache> {
        let agent = &self.agents[k];
        let obs_cols = obs.ncols();
        match (&agent.comm, peers) {
            (Some(comm), Some(peers)) => {
                let comm_cache = comm.forward_batch(peers, self.n_sections - 1)?;
                let input = concatenate(Axis(1), &[obs, comm_cache.context().view()]).expect("row counts agree");
                let actor = agent.actor.forward_batch(input.view())?;
                Ok(StreamCache {
                    comm: Some(comm_cache),
                    actor,
                    obs_cols,
                })
            }
            (None, None) => Ok(StreamCache {
                comm: None,
                actor: agent.actor.forward_batch(obs)?,
                obs_cols,
            }),
            _ => Err(Error::config(
                "peer tuples must be supplied exactly for message-passing streams",
            )),
        }
    }

    pub fn stream_backward(
        &self,
        k: usize,
        cache: &StreamCache,
        actions: ArrayView2<f64>,
        d_logp: &Array1<f64>,
        grad: &mut Policy,
    ) {
        let agent = &self.agents[k];
        let grad_agent = &mut grad.agents[k];
        let d_input = agent
            .actor
            .backward(&cache.actor, actions, d_logp, &mut grad_agent.actor);
        if let (Some(comm), Some(comm_cache), Some(grad_comm)) = (&agent.comm, &cache.comm, grad_agent.comm.as_mut()) {
            let d_context = d_input.slice(s![.., cache.obs_cols..]).to_owned();
            comm.backward(comm_cache, d_context, grad_comm);
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            architecture: self.architecture,
            n_sections: self.n_sections,
            scaling: self.scaling,
            shape: self.shape.clone(),
            agents: self
                .agents
                .iter()
                .map(|a| AgentNets {
                    actor: a.actor.zeros_like(),
                    comm: a.comm.as_ref().map(CommNet::zeros_like),
                })
                .collect(),
            critic: self.critic.zeros_like(),
        }
    }

    pub fn clamp_log_std(&mut self) {
        for a in &mut self.agents {
            a.actor.clamp_log_std();
        }
    }

    /// Parameter tensors paired with their optimiser group, in a fixed order.
    pub fn grouped_tensors_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        let mut out: Vec<(ParamGroup, &mut [f64])> = Vec::new();
        for a in &mut self.agents {
            out.extend(a.actor.net.tensors_mut().into_iter().map(|t| (ParamGroup::Actor, t)));
            out.push((ParamGroup::Actor, a.actor.log_std.as_slice_mut().expect("contiguous")));
            if let Some(c) = &mut a.comm {
                out.extend(c.encoder.tensors_mut().into_iter().map(|t| (ParamGroup::Actor, t)));
                out.extend(c.aggregator.tensors_mut().into_iter().map(|t| (ParamGroup::Actor, t)));
            }
        }
        out.extend(self.critic.tensors_mut().into_iter().map(|t| (ParamGroup::Critic, t)));
        out
    }
}

impl Parameters for Policy {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for a in &self.agents {
            out.extend(a.actor.net.tensors());
            out.push(a.actor.log_std.as_slice().expect("contiguous"));
            if let Some(c) = &a.comm {
                out.extend(c.encoder.tensors());
                out.extend(c.aggregator.tensors());
            }
        }
        out.extend(self.critic.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.grouped_tensors_mut().into_iter().map(|(_, t)| t).collect()
    }
}

//! Fixed-point reaching task on the rod.
//!
//! One [`ReachEnv`] serves both controller architectures: the physics and the
//! bookkeeping are identical, only the consumer of the observation and reward
//! streams differs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rod::{forcing_nodes, ExternalLoadSet, RodModel, RodParams, RodState, Vec3};

/// Section counts the experiments are defined for.
pub const SECTION_COUNTS: [usize; 6] = [2, 3, 4, 6, 8, 12];

/// Dimension of an agent's local observation for `n` sections.
pub fn local_obs_dim(n: usize) -> usize {
    6 * n + 4
}

/// Dimension of the global critic state for `n` sections.
pub fn global_state_dim(n: usize) -> usize {
    6 * n + 3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Nominal,
    Disturbance,
    ActuatorFailure,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::Nominal,
        ScenarioKind::Disturbance,
        ScenarioKind::ActuatorFailure,
    ];

    /// 1-based scenario number used in reports.
    pub fn number(self) -> u8 {
        match self {
            ScenarioKind::Nominal => 1,
            ScenarioKind::Disturbance => 2,
            ScenarioKind::ActuatorFailure => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Nominal => "nominal",
            ScenarioKind::Disturbance => "disturbance",
            ScenarioKind::ActuatorFailure => "actuator_failure",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "1" | "nominal" => Ok(ScenarioKind::Nominal),
            "2" | "disturbance" => Ok(ScenarioKind::Disturbance),
            "3" | "actuator_failure" | "failure" => Ok(ScenarioKind::ActuatorFailure),
            other => Err(Error::config(format!("unknown scenario '{other}'"))),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Scenario injected on top of the nominal task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    Nominal {},
    Disturbance {
        /// First control step (0-based) at which the disturbance acts.
        disturbance_step: usize,
        disturbance_force: [f64; 3],
        disturbance_duration: usize,
        disturbance_node: usize,
    },
    ActuatorFailure {
        failed_agent: usize,
        failure_start_step: usize,
    },
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec::Nominal {}
    }
}

impl ScenarioSpec {
    /// 10 N along −x at mid-span for 10 steps from step 300.
    pub fn default_disturbance(n_elements: usize) -> Self {
        ScenarioSpec::Disturbance {
            disturbance_step: 300,
            disturbance_force: [-10.0, 0.0, 0.0],
            disturbance_duration: 10,
            disturbance_node: n_elements / 2,
        }
    }

    /// Agent 4 disabled from the first step.
    pub fn default_failure() -> Self {
        ScenarioSpec::ActuatorFailure {
            failed_agent: 4,
            failure_start_step: 0,
        }
    }

    pub fn kind(&self) -> ScenarioKind {
        match self {
            ScenarioSpec::Nominal {} => ScenarioKind::Nominal,
            ScenarioSpec::Disturbance { .. } => ScenarioKind::Disturbance,
            ScenarioSpec::ActuatorFailure { .. } => ScenarioKind::ActuatorFailure,
        }
    }

    pub fn disturbance_onset(&self) -> Option<usize> {
        match self {
            ScenarioSpec::Disturbance { disturbance_step, .. } => Some(*disturbance_step),
            _ => None,
        }
    }

    fn validate(&self, n_sections: usize, n_elements: usize) -> Result<()> {
        match self {
            ScenarioSpec::Nominal {} => Ok(()),
            ScenarioSpec::Disturbance {
                disturbance_force,
                disturbance_node,
                ..
            } => {
                if *disturbance_node > n_elements {
                    return Err(Error::config(format!(
                        "disturbance node {disturbance_node} outside rod of {n_elements} elements"
                    )));
                }
                if disturbance_force.iter().any(|f| !f.is_finite()) {
                    return Err(Error::config("disturbance force must be finite"));
                }
                Ok(())
            }
            ScenarioSpec::ActuatorFailure { failed_agent, .. } => {
                if *failed_agent >= n_sections {
                    return Err(Error::config(format!(
                        "failed agent {failed_agent} must be < n_sections = {n_sections}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Masks the commanded forces and returns any extra node load for the
    /// control step with 0-based index `step_index`.
    pub fn apply(&self, forces: &mut [Vec3], step_index: usize) -> Option<(usize, Vec3)> {
        match self {
            ScenarioSpec::Nominal {} => None,
            ScenarioSpec::Disturbance {
                disturbance_step,
                disturbance_force,
                disturbance_duration,
                disturbance_node,
            } => {
                let window = *disturbance_step..disturbance_step + disturbance_duration;
                window
                    .contains(&step_index)
                    .then(|| (*disturbance_node, Vec3::from(*disturbance_force)))
            }
            ScenarioSpec::ActuatorFailure {
                failed_agent,
                failure_start_step,
            } => {
                if step_index >= *failure_start_step {
                    forces[*failed_agent] = Vec3::zeros();
                }
                None
            }
        }
    }
}

/// Episode constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub n_sections: usize,
    pub control_dt: f64,
    pub f_max: f64,
    pub success_radius: f64,
    pub horizon: usize,
    pub target: [f64; 3],
    pub lambda_d: f64,
    pub lambda_a: f64,
    #[serde(default)]
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_substeps")]
    pub n_substeps: usize,
}

fn default_substeps() -> usize {
    100
}

impl EnvConfig {
    /// Task constants for a rod of unit length along +z from the origin.
    pub fn new(n_sections: usize) -> Self {
        Self::for_rod(n_sections, &RodParams::default())
    }

    /// Target at 60% reach along the axis and 40% off-axis.
    pub fn for_rod(n_sections: usize, rod: &RodParams) -> Self {
        Self {
            n_sections,
            control_dt: 2e-3,
            f_max: 15.0,
            success_radius: 0.03,
            horizon: 1000,
            target: [0.4 * rod.length, 0.0, 0.6 * rod.length],
            lambda_d: 10.0,
            lambda_a: 1e-3,
            scenario: ScenarioSpec::Nominal {},
            seed: 0,
            n_substeps: default_substeps(),
        }
    }

    pub fn with_scenario(mut self, scenario: ScenarioSpec) -> Self {
        self.scenario = scenario;
        self
    }

    pub fn target_vec(&self) -> Vec3 {
        Vec3::from(self.target)
    }

    pub fn validate(&self, rod: &RodParams) -> Result<()> {
        if !SECTION_COUNTS.contains(&self.n_sections) {
            return Err(Error::config(format!(
                "n_sections must be one of {SECTION_COUNTS:?}, got {}",
                self.n_sections
            )));
        }
        if self.n_sections > rod.n_elements {
            return Err(Error::config(format!(
                "n_sections {} exceeds rod elements {}",
                self.n_sections, rod.n_elements
            )));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be >= 1"));
        }
        if self.n_substeps == 0 {
            return Err(Error::config("n_substeps must be >= 1"));
        }
        for (name, v) in [
            ("control_dt", self.control_dt),
            ("f_max", self.f_max),
            ("success_radius", self.success_radius),
            ("lambda_d", self.lambda_d),
            ("lambda_a", self.lambda_a),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("env.{name} must be finite and > 0, got {v}")));
            }
        }
        if self.target.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("env.target must be finite"));
        }
        self.scenario.validate(self.n_sections, rod.n_elements)
    }
}

/// Per-agent local observations, the global critic state and the tip distance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub per_agent: Vec<Vec<f64>>,
    pub global_state: Vec<f64>,
    pub tip_distance: f64,
}

/// Positions of the forcing nodes and the forces applied at the previous step.
/// Everything observable is derived from this snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSnapshot {
    pub positions: Vec<Vec3>,
    pub forces: Vec<Vec3>,
}

impl NodeSnapshot {
    pub fn n_agents(&self) -> usize {
        self.positions.len()
    }

    pub fn observation_set(&self, target: &Vec3) -> ObservationSet {
        let n = self.n_agents();
        let per_agent = (0..n)
            .map(|i| build_local_observation(i, &self.positions, &self.forces, target, n))
            .collect();
        let tip_distance = (self.positions[n - 1] - target).norm();
        ObservationSet {
            per_agent,
            global_state: build_global_state(&self.positions, &self.forces, target),
            tip_distance,
        }
    }
}

/// `[id_i, p_i, f_i, g, p_{-i}, f_{-i}]` with `id_i = i/(n−1)` and the peer
/// stacks in ascending agent order.
pub fn build_local_observation(
    agent_index: usize,
    positions: &[Vec3],
    prev_forces: &[Vec3],
    target: &Vec3,
    n: usize,
) -> Vec<f64> {
    assert!(agent_index < n, "agent {agent_index} out of range for {n} agents");
    let mut o = Vec::with_capacity(local_obs_dim(n));
    o.push(if n > 1 {
        agent_index as f64 / (n - 1) as f64
    } else {
        0.0
    });
    o.extend_from_slice(positions[agent_index].as_slice());
    o.extend_from_slice(prev_forces[agent_index].as_slice());
    o.extend_from_slice(target.as_slice());
    for (j, p) in positions.iter().enumerate().take(n) {
        if j != agent_index {
            o.extend_from_slice(p.as_slice());
        }
    }
    for (j, f) in prev_forces.iter().enumerate().take(n) {
        if j != agent_index {
            o.extend_from_slice(f.as_slice());
        }
    }
    o
}

/// `[p_1..p_n, f_1..f_n, g]`.
pub fn build_global_state(positions: &[Vec3], forces: &[Vec3], target: &Vec3) -> Vec<f64> {
    let mut s = Vec::with_capacity(global_state_dim(positions.len()));
    for p in positions {
        s.extend_from_slice(p.as_slice());
    }
    for f in forces {
        s.extend_from_slice(f.as_slice());
    }
    s.extend_from_slice(target.as_slice());
    s
}

/// Distances and rewards for one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardBreakdown {
    pub tip_distance: f64,
    pub agent_distances: Vec<f64>,
    pub global_progress: f64,
    pub agent_progress: Vec<f64>,
    pub effort_costs: Vec<f64>,
    pub centralised: f64,
    pub distributed: Vec<f64>,
}

/// Shaped rewards from forcing-node positions before and after a step.
///
/// The tip is the last forcing node. Forces must already be masked.
pub fn compute_rewards(
    prev_positions: &[Vec3],
    new_positions: &[Vec3],
    applied_forces: &[Vec3],
    config: &EnvConfig,
) -> RewardBreakdown {
    let g = config.target_vec();
    let n = new_positions.len();
    let dist = |p: &Vec3| (p - g).norm();
    let prev_tip = dist(&prev_positions[n - 1]);
    let tip_distance = dist(&new_positions[n - 1]);
    let global_progress = prev_tip - tip_distance;

    let agent_distances: Vec<f64> = new_positions.iter().map(dist).collect();
    let agent_progress: Vec<f64> = prev_positions
        .iter()
        .zip(&agent_distances)
        .map(|(p, d)| dist(p) - d)
        .collect();
    let effort_costs: Vec<f64> = applied_forces.iter().map(|f| f.norm() / config.f_max).collect();

    let distributed = agent_progress
        .iter()
        .zip(&effort_costs)
        .map(|(local, cost)| {
            0.5 * config.lambda_d * global_progress + 0.5 * config.lambda_d * local - config.lambda_a * cost
        })
        .collect();
    let mean_cost = effort_costs.iter().sum::<f64>() / n as f64;
    let centralised = config.lambda_d * global_progress - config.lambda_a * mean_cost;

    RewardBreakdown {
        tip_distance,
        agent_distances,
        global_progress,
        agent_progress,
        effort_costs,
        centralised,
        distributed,
    }
}

/// Per-section force commands, Newtons.
#[derive(Debug, Clone, PartialEq)]
pub struct JointAction {
    pub per_agent_forces: Vec<Vec3>,
}

impl JointAction {
    pub fn zeros(n: usize) -> Self {
        Self {
            per_agent_forces: vec![Vec3::zeros(); n],
        }
    }

    /// From the flattened `u ∈ R^{3n}`.
    pub fn from_flat(u: &[f64]) -> Self {
        Self {
            per_agent_forces: u.chunks_exact(3).map(Vec3::from_column_slice).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.per_agent_forces.iter().flat_map(|f| f.iter().copied()).collect()
    }

    /// Euclidean norm of the flattened action.
    pub fn norm(&self) -> f64 {
        self.per_agent_forces
            .iter()
            .map(|f| f.norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub tip_distance: f64,
    pub agent_distances: Vec<f64>,
    pub effort_costs: Vec<f64>,
    pub global_progress: f64,
    pub agent_progress: Vec<f64>,
    /// Steps taken in this episode including this one (1-based).
    pub step: usize,
    /// Forces that reached the rod (after clamping and scenario masking).
    pub applied_forces: Vec<Vec3>,
    pub clamped: bool,
    pub disturbance_active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: ObservationSet,
    pub reward_centralised: f64,
    pub rewards_distributed: Vec<f64>,
    pub done: bool,
    pub success: bool,
    /// Horizon reached without success.
    pub truncated: bool,
    pub info: StepInfo,
}

/// Episodic reaching environment.
#[derive(Debug, Clone)]
pub struct ReachEnv {
    model: RodModel,
    config: EnvConfig,
    forcing: Vec<usize>,
    base: Vec3,
    direction: Vec3,
    state: RodState,
    prev_forces: Vec<Vec3>,
    steps: usize,
    done: bool,
}

impl ReachEnv {
    pub fn new(rod: RodParams, config: EnvConfig) -> Result<Self> {
        config.validate(&rod)?;
        let forcing = forcing_nodes(config.n_sections, rod.n_elements)?;
        let model = RodModel::new(rod)?;
        let base = Vec3::zeros();
        let direction = Vec3::z();
        let state = model.init_straight_rod(base, direction)?;
        let n = config.n_sections;
        Ok(Self {
            model,
            config,
            forcing,
            base,
            direction,
            state,
            prev_forces: vec![Vec3::zeros(); n],
            steps: 0,
            done: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn model(&self) -> &RodModel {
        &self.model
    }

    pub fn rod_state(&self) -> &RodState {
        &self.state
    }

    pub fn forcing_node_indices(&self) -> &[usize] {
        &self.forcing
    }

    pub fn n_agents(&self) -> usize {
        self.config.n_sections
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Replaces the scenario for subsequent episodes.
    pub fn set_scenario(&mut self, scenario: ScenarioSpec) -> Result<()> {
        scenario.validate(self.config.n_sections, self.model.params().n_elements)?;
        self.config.scenario = scenario;
        Ok(())
    }

    /// Straight rod, zero forces, step counter at zero. The task has no random
    /// initial conditions; `seed` is recorded for bookkeeping.
    pub fn reset(&mut self, seed: u64) -> ObservationSet {
        self.config.seed = seed;
        self.state = self
            .model
            .init_straight_rod(self.base, self.direction)
            .expect("base and direction validated at construction");
        self.prev_forces = vec![Vec3::zeros(); self.config.n_sections];
        self.steps = 0;
        self.done = false;
        self.snapshot().observation_set(&self.config.target_vec())
    }

    pub fn snapshot(&self) -> NodeSnapshot {
        NodeSnapshot {
            positions: self.forcing_positions(),
            forces: self.prev_forces.clone(),
        }
    }

    fn forcing_positions(&self) -> Vec<Vec3> {
        self.forcing.iter().map(|&k| self.state.node_positions[k]).collect()
    }

    pub fn step(&mut self, action: &JointAction) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::StepAfterDone);
        }
        let n = self.config.n_sections;
        if action.per_agent_forces.len() != n {
            return Err(Error::Dimension {
                context: "joint action agents",
                expected: n,
                actual: action.per_agent_forces.len(),
            });
        }
        let f_max = self.config.f_max;
        let mut clamped = false;
        let mut forces: Vec<Vec3> = action
            .per_agent_forces
            .iter()
            .map(|f| {
                f.map(|c| {
                    let c = if c.is_nan() { 0.0 } else { c };
                    let bounded = c.clamp(-f_max, f_max);
                    clamped |= bounded != c;
                    bounded
                })
            })
            .collect();

        let step_index = self.steps;
        let extra = self.config.scenario.apply(&mut forces, step_index);

        let mut node_forces = vec![Vec3::zeros(); self.state.n_nodes()];
        ExternalLoadSet::new(self.forcing.clone(), forces.clone(), self.model.params().n_elements)?
            .accumulate_into(&mut node_forces);
        if let Some((node, f)) = extra {
            node_forces[node] += f;
        }

        let prev_positions = self.forcing_positions();
        self.model.step_physics(
            &mut self.state,
            &node_forces,
            self.config.control_dt,
            self.config.n_substeps,
        )?;
        let new_positions = self.forcing_positions();
        let rewards = compute_rewards(&prev_positions, &new_positions, &forces, &self.config);

        self.steps += 1;
        self.prev_forces = forces.clone();
        let success = rewards.tip_distance <= self.config.success_radius;
        let truncated = !success && self.steps >= self.config.horizon;
        self.done = success || truncated;

        let observation = NodeSnapshot {
            positions: new_positions,
            forces: self.prev_forces.clone(),
        }
        .observation_set(&self.config.target_vec());
        debug_assert_eq!(observation.per_agent[0].len(), local_obs_dim(n));
        debug_assert_eq!(observation.global_state.len(), global_state_dim(n));

        Ok(StepOutcome {
            observation,
            reward_centralised: rewards.centralised,
            rewards_distributed: rewards.distributed,
            done: self.done,
            success,
            truncated,
            info: StepInfo {
                tip_distance: rewards.tip_distance,
                agent_distances: rewards.agent_distances,
                effort_costs: rewards.effort_costs,
                global_progress: rewards.global_progress,
                agent_progress: rewards.agent_progress,
                step: self.steps,
                applied_forces: forces,
                clamped,
                disturbance_active: extra.is_some(),
            },
        })
    }
}

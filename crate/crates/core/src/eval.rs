//! Episode metrics, scenario suites and aggregate reports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::check_scenario_supported;
use crate::env::{EnvConfig, JointAction, NodeSnapshot, ReachEnv, ScenarioKind};
use crate::error::{Error, Result};
use crate::policy::{ActionMode, Architecture, Policy};
use crate::rod::{RodParams, Vec3};
use crate::seed::{self, StreamRng};

/// Anything that maps an observation snapshot to a joint action.
pub trait Controller: Sync {
    fn n_sections(&self) -> usize;
    fn act(&self, snap: &NodeSnapshot, target: &Vec3, rng: &mut StreamRng) -> Result<JointAction>;
}

/// A policy run in deterministic (mean) or stochastic mode.
pub struct PolicyController<'a> {
    pub policy: &'a Policy,
    pub mode: ActionMode,
}

impl Controller for PolicyController<'_> {
    fn n_sections(&self) -> usize {
        self.policy.n_sections
    }

    fn act(&self, snap: &NodeSnapshot, target: &Vec3, rng: &mut StreamRng) -> Result<JointAction> {
        Ok(self.policy.act(snap, target, self.mode, rng)?.joint)
    }
}

/// Repeats one joint action forever.
pub struct ConstantController(pub JointAction);

impl Controller for ConstantController {
    fn n_sections(&self) -> usize {
        self.0.per_agent_forces.len()
    }

    fn act(&self, _: &NodeSnapshot, _: &Vec3, _: &mut StreamRng) -> Result<JointAction> {
        Ok(self.0.clone())
    }
}

/// One dumped control step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub time_s: f64,
    pub tip: Vec3,
    pub tip_distance: f64,
    /// Applied forces, flattened per agent.
    pub forces: Vec<f64>,
}

/// Architecture-independent record of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub length: usize,
    pub success: bool,
    pub final_distance: f64,
    pub action_norms: Vec<f64>,
    pub disturbance_onset: Option<usize>,
    pub horizon: usize,
    pub trajectory: Option<Vec<TrajectoryRow>>,
}

/// Per-episode seed derived from the suite seed.
pub fn episode_seed(base_seed: u64, episode_id: u64) -> u64 {
    seed::derive_seed(&[base_seed, seed::tag::EPISODE, episode_id])
}

/// Runs one episode until success or the horizon.
pub fn run_episode(
    controller: &dyn Controller,
    rod: &RodParams,
    config: &EnvConfig,
    seed: u64,
    record: bool,
) -> Result<EpisodeTrace> {
    if controller.n_sections() != config.n_sections {
        return Err(Error::CheckpointMismatch(format!(
            "controller drives {} sections but the environment has {}",
            controller.n_sections(),
            config.n_sections
        )));
    }
    let mut env = ReachEnv::new(rod.clone(), config.clone())?;
    env.reset(seed);
    let mut rng = seed::stream(&[seed]);
    let target = config.target_vec();
    let mut action_norms = Vec::new();
    let mut trajectory = record.then(Vec::new);
    loop {
        let action = controller.act(&env.snapshot(), &target, &mut rng)?;
        let out = env.step(&action)?;
        let applied = JointAction {
            per_agent_forces: out.info.applied_forces.clone(),
        };
        action_norms.push(applied.norm());
        if let Some(rows) = trajectory.as_mut() {
            rows.push(TrajectoryRow {
                step: out.info.step,
                time_s: env.rod_state().sim_time,
                tip: env.rod_state().tip_position(),
                tip_distance: out.info.tip_distance,
                forces: applied.flat(),
            });
        }
        if out.done {
            return Ok(EpisodeTrace {
                length: out.info.step,
                success: out.success,
                final_distance: out.info.tip_distance,
                action_norms,
                disturbance_onset: config.scenario.disturbance_onset(),
                horizon: config.horizon,
                trajectory,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode_id: u64,
    pub seed: u64,
    pub scenario: ScenarioKind,
    pub n_sections: usize,
    pub architecture: Architecture,
    pub success: bool,
    pub episode_length: usize,
    pub final_distance: f64,
    pub mean_action_magnitude: f64,
    /// Disturbance scenario only; empty when the episode ended before onset.
    pub settling_steps: Option<usize>,
}

impl EpisodeMetrics {
    pub fn from_trace(
        trace: &EpisodeTrace,
        episode_id: u64,
        seed: u64,
        scenario: ScenarioKind,
        n_sections: usize,
        architecture: Architecture,
    ) -> Self {
        let mean_action_magnitude = trace.action_norms.iter().sum::<f64>() / trace.action_norms.len() as f64;
        let settling_steps = trace.disturbance_onset.and_then(|onset| {
            if trace.length <= onset {
                None
            } else if trace.success {
                Some(trace.length - onset)
            } else {
                Some(trace.horizon - onset)
            }
        });
        Self {
            episode_id,
            seed,
            scenario,
            n_sections,
            architecture,
            success: trace.success,
            episode_length: trace.length,
            final_distance: trace.final_distance,
            mean_action_magnitude,
            settling_steps,
        }
    }
}

/// Summary of one (architecture, n, scenario) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub architecture: Architecture,
    pub n_sections: usize,
    pub scenario: ScenarioKind,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_action_magnitude: f64,
    pub mean_final_distance: f64,
    pub std_final_distance: f64,
    pub mean_episode_length: f64,
    pub std_episode_length: f64,
    pub mean_settling_steps: Option<f64>,
    pub fingerprint: String,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl AggregateReport {
    /// Population statistics over the rows of one cell.
    pub fn from_episodes(rows: &[EpisodeMetrics], fingerprint: &str) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::config("cannot aggregate an empty episode set"))?;
        if rows.iter().any(|r| {
            (r.architecture, r.n_sections, r.scenario) != (first.architecture, first.n_sections, first.scenario)
        }) {
            return Err(Error::config("aggregate rows must share architecture, n and scenario"));
        }
        let successes = rows.iter().filter(|r| r.success).count();
        let (mean_final_distance, std_final_distance) = mean_std(rows.iter().map(|r| r.final_distance));
        let (mean_episode_length, std_episode_length) = mean_std(rows.iter().map(|r| r.episode_length as f64));
        let settled: Vec<f64> = rows.iter().filter_map(|r| r.settling_steps).map(|s| s as f64).collect();
        Ok(Self {
            architecture: first.architecture,
            n_sections: first.n_sections,
            scenario: first.scenario,
            episodes: rows.len(),
            successes,
            success_rate: 100.0 * successes as f64 / rows.len() as f64,
            mean_action_magnitude: rows.iter().map(|r| r.mean_action_magnitude).sum::<f64>() / rows.len() as f64,
            mean_final_distance,
            std_final_distance,
            mean_episode_length,
            std_episode_length,
            mean_settling_steps: (!settled.is_empty()).then(|| settled.iter().sum::<f64>() / settled.len() as f64),
            fingerprint: fingerprint.to_string(),
        })
    }
}

/// One trained policy entered into a suite.
pub struct SuiteEntry<'a> {
    pub policy: &'a Policy,
    /// Task constants the policy was trained with (scenario ignored).
    pub env: EnvConfig,
    pub rod: RodParams,
}

#[derive(Debug, Clone)]
pub struct SuiteSpec {
    pub scenarios: Vec<ScenarioKind>,
    pub episodes: usize,
    pub base_seed: u64,
    pub mode: ActionMode,
    pub disturbance: Option<crate::env::ScenarioSpec>,
    pub failure: Option<crate::env::ScenarioSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub episodes: Vec<EpisodeMetrics>,
    pub aggregates: Vec<AggregateReport>,
}

/// Cells are checked before any episode runs.
pub fn plan_cells(entries: &[SuiteEntry], spec: &SuiteSpec) -> Result<Vec<(usize, ScenarioKind)>> {
    let mut cells = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        for &kind in &spec.scenarios {
            check_scenario_supported(kind, e.policy.n_sections)?;
            cells.push((i, kind));
        }
    }
    if cells.is_empty() {
        return Err(Error::config("evaluation suite has no cells"));
    }
    Ok(cells)
}

pub fn scenario_for(kind: ScenarioKind, spec: &SuiteSpec, rod: &RodParams) -> crate::env::ScenarioSpec {
    use crate::env::ScenarioSpec;
    match kind {
        ScenarioKind::Nominal => ScenarioSpec::Nominal {},
        ScenarioKind::Disturbance => spec
            .disturbance
            .clone()
            .unwrap_or_else(|| ScenarioSpec::default_disturbance(rod.n_elements)),
        ScenarioKind::ActuatorFailure => spec.failure.clone().unwrap_or_else(ScenarioSpec::default_failure),
    }
}

/// Runs `spec.episodes` episodes for every (entry, scenario) cell. Rows are
/// sorted by (architecture, n, scenario, episode_id).
pub fn run_suite(entries: &[SuiteEntry], spec: &SuiteSpec, fingerprint: &str) -> Result<SuiteResult> {
    let cells = plan_cells(entries, spec)?;
    let jobs: Vec<(usize, ScenarioKind, u64)> = cells
        .iter()
        .flat_map(|&(i, kind)| (0..spec.episodes as u64).map(move |id| (i, kind, id)))
        .collect();
    let mut episodes: Vec<EpisodeMetrics> = jobs
        .par_iter()
        .map(|&(i, kind, id)| {
            let e = &entries[i];
            let config = e.env.clone().with_scenario(scenario_for(kind, spec, &e.rod));
            let seed = episode_seed(spec.base_seed, id);
            let controller = PolicyController {
                policy: e.policy,
                mode: spec.mode,
            };
            let trace = run_episode(&controller, &e.rod, &config, seed, false)?;
            Ok(EpisodeMetrics::from_trace(
                &trace,
                id,
                seed,
                kind,
                e.policy.n_sections,
                e.policy.architecture,
            ))
        })
        .collect::<Result<_>>()?;
    episodes.sort_by_key(|m| (m.architecture, m.n_sections, m.scenario, m.episode_id));
    let aggregates = episodes
        .chunk_by(|a, b| (a.architecture, a.n_sections, a.scenario) == (b.architecture, b.n_sections, b.scenario))
        .map(|rows| AggregateReport::from_episodes(rows, fingerprint))
        .collect::<Result<_>>()?;
    Ok(SuiteResult { episodes, aggregates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ScenarioSpec;

    fn metrics(id: u64, success: bool, dist: f64, len: usize) -> EpisodeMetrics {
        EpisodeMetrics {
            episode_id: id,
            seed: id,
            scenario: ScenarioKind::Nominal,
            n_sections: 2,
            architecture: Architecture::Centralised,
            success,
            episode_length: len,
            final_distance: dist,
            mean_action_magnitude: 1.0,
            settling_steps: None,
        }
    }

    #[test]
    fn success_rate_arithmetic() {
        let rows: Vec<_> = (0..100).map(|i| metrics(i, i < 37, 0.1, 1000)).collect();
        let agg = AggregateReport::from_episodes(&rows, "f").unwrap();
        assert_eq!(agg.success_rate, 37.0);
        assert_eq!(agg.mean_episode_length, 1000.0);
        assert_eq!(agg.std_episode_length, 0.0);
    }

    #[test]
    fn constant_action_magnitude() {
        let mut a = JointAction::zeros(2);
        a.per_agent_forces[0] = Vec3::new(2.0, 3.0, 6.0);
        let config = EnvConfig {
            horizon: 25,
            ..EnvConfig::new(2)
        };
        let trace = run_episode(&ConstantController(a), &RodParams::default(), &config, 0, true).unwrap();
        let m = EpisodeMetrics::from_trace(&trace, 0, 0, ScenarioKind::Nominal, 2, Architecture::Centralised);
        assert!((m.mean_action_magnitude - 7.0).abs() < 1e-12);
        assert_eq!(trace.trajectory.unwrap().len(), trace.length);
    }

    #[test]
    fn settling_semantics() {
        let mut trace = EpisodeTrace {
            length: 450,
            success: true,
            final_distance: 0.01,
            action_norms: vec![1.0],
            disturbance_onset: Some(300),
            horizon: 1000,
            trajectory: None,
        };
        let m = |t: &EpisodeTrace| {
            EpisodeMetrics::from_trace(t, 0, 0, ScenarioKind::Disturbance, 2, Architecture::Distributed).settling_steps
        };
        assert_eq!(m(&trace), Some(150));
        trace.success = false;
        trace.length = 1000;
        assert_eq!(m(&trace), Some(700));
        trace.length = 120;
        trace.success = true;
        assert_eq!(m(&trace), None);
        trace.disturbance_onset = None;
        assert_eq!(m(&trace), None);
    }

    #[test]
    fn failure_scenario_gated() {
        let p = Policy::new(
            Architecture::Distributed,
            6,
            crate::policy::InputScaling {
                length: 1.0,
                f_max: 15.0,
            },
            Default::default(),
            0,
        )
        .unwrap();
        let entries = [SuiteEntry {
            policy: &p,
            env: EnvConfig::new(6),
            rod: RodParams::default(),
        }];
        let spec = SuiteSpec {
            scenarios: vec![ScenarioKind::ActuatorFailure],
            episodes: 1,
            base_seed: 0,
            mode: ActionMode::Deterministic,
            disturbance: None,
            failure: Some(ScenarioSpec::default_failure()),
        };
        assert!(run_suite(&entries, &spec, "x").unwrap_err().is_usage());
    }
}

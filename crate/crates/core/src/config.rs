//! Versioned run configuration.
//!
//! A run config is a TOML document:
//!
//! ```toml
//! version = 1
//!
//! [rod]            # optional, every field defaults
//! damping_coefficient = 10.0
//!
//! [env]            # optional overrides of the task constants
//! horizon = 1000
//!
//! [train]
//! profile = "desk" # or "paper"; remaining keys override the profile
//! seed = 0
//!
//! [eval]
//! n = [2, 6]
//! scenarios = ["nominal", "disturbance"]
//! episodes = 100
//! base_seed = 0
//!
//! [io]
//! output_dir = "runs"
//! checkpoint_retention = 3
//! ```
//!
//! Unknown keys are rejected. [`RunConfig::resolve`] folds profiles and
//! overrides into a [`ResolvedRun`], whose canonical JSON hash is the
//! fingerprint stamped on every artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{EnvConfig, ScenarioKind, ScenarioSpec};
use crate::error::{Error, Result};
use crate::policy::{Architecture, NetworkShape};
use crate::rod::RodParams;

pub const CONFIG_VERSION: u32 = 1;
pub const OUTPUT_DIR_ENV: &str = "SOFTARM_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::config(format!(
                "unknown profile '{other}' (expected desk or paper)"
            ))),
        }
    }
}

/// PPO hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub updates: usize,
    pub steps_per_env: usize,
    pub num_envs: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub clip_eps: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    pub network: NetworkShape,
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self {
            updates: 10_000,
            steps_per_env: 2000,
            num_envs: 8,
            epochs: 5,
            minibatch_size: 8192,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            clip_eps: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            eval_every: 200,
            eval_episodes: 20,
            seed: 0,
            network: NetworkShape::default(),
        }
    }

    /// 500 updates on 4 environments; the minibatch shrinks to fit the
    /// 8000-step buffer.
    pub fn desk() -> Self {
        Self {
            updates: 500,
            num_envs: 4,
            minibatch_size: 4000,
            ..Self::paper()
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    pub fn buffer_len(&self) -> usize {
        self.num_envs * self.steps_per_env
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("updates", self.updates),
            ("steps_per_env", self.steps_per_env),
            ("num_envs", self.num_envs),
            ("epochs", self.epochs),
            ("minibatch_size", self.minibatch_size),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return Err(Error::config(format!("train.{name} must be >= 1")));
            }
        }
        if self.minibatch_size > self.buffer_len() {
            return Err(Error::config(format!(
                "train.minibatch_size {} exceeds num_envs × steps_per_env = {}",
                self.minibatch_size,
                self.buffer_len()
            )));
        }
        for (name, v) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("entropy_coef", self.entropy_coef),
            ("value_coef", self.value_coef),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("train.{name} must be finite and > 0, got {v}")));
            }
        }
        for (name, v) in [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("train.{name} must lie in (0, 1], got {v}")));
            }
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::config(format!(
                "train.clip_eps must lie in (0, 1), got {}",
                self.clip_eps
            )));
        }
        self.network.validate()
    }
}

/// `[train]` block: a profile plus optional per-key overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub profile: Option<Profile>,
    pub updates: Option<usize>,
    pub steps_per_env: Option<usize>,
    pub num_envs: Option<usize>,
    pub epochs: Option<usize>,
    pub minibatch_size: Option<usize>,
    pub actor_lr: Option<f64>,
    pub critic_lr: Option<f64>,
    pub clip_eps: Option<f64>,
    pub gamma: Option<f64>,
    pub gae_lambda: Option<f64>,
    pub entropy_coef: Option<f64>,
    pub value_coef: Option<f64>,
    pub max_grad_norm: Option<f64>,
    pub eval_every: Option<usize>,
    pub eval_episodes: Option<usize>,
    pub seed: Option<u64>,
    pub network: Option<NetworkShape>,
}

macro_rules! overlay {
    ($base:ident, $over:ident, $($field:ident),*) => {
        $(if let Some(v) = $over.$field.clone() { $base.$field = v; })*
    };
}

impl TrainSection {
    pub fn resolve(&self, profile: Profile) -> TrainConfig {
        let mut t = TrainConfig::for_profile(profile);
        let o = self;
        overlay!(
            t,
            o,
            updates,
            steps_per_env,
            num_envs,
            epochs,
            minibatch_size,
            actor_lr,
            critic_lr,
            clip_eps,
            gamma,
            gae_lambda,
            entropy_coef,
            value_coef,
            max_grad_norm,
            eval_every,
            eval_episodes,
            seed,
            network
        );
        t
    }
}

/// `[env]` block: overrides of the task constants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub n_sections: Option<usize>,
    pub control_dt: Option<f64>,
    pub f_max: Option<f64>,
    pub success_radius: Option<f64>,
    pub horizon: Option<usize>,
    pub target: Option<[f64; 3]>,
    pub lambda_d: Option<f64>,
    pub lambda_a: Option<f64>,
    pub n_substeps: Option<usize>,
}

impl EnvSection {
    pub fn resolve(&self, n_sections: usize, rod: &RodParams) -> EnvConfig {
        let mut e = EnvConfig::for_rod(n_sections, rod);
        let o = self;
        overlay!(
            e,
            o,
            control_dt,
            f_max,
            success_radius,
            horizon,
            target,
            lambda_d,
            lambda_a,
            n_substeps
        );
        e
    }
}

/// `[eval]` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_eval_n")]
    pub n: Vec<usize>,
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<ScenarioKind>,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub stochastic: bool,
    /// Overrides the default disturbance (10 N along −x at mid-span, steps 300–309).
    #[serde(default)]
    pub disturbance: Option<ScenarioSpec>,
    /// Overrides the default failure (agent 4 from step 0).
    #[serde(default)]
    pub failure: Option<ScenarioSpec>,
}

fn default_eval_n() -> Vec<usize> {
    vec![2, 3, 4, 6, 8, 12]
}

fn default_scenarios() -> Vec<ScenarioKind> {
    ScenarioKind::ALL.to_vec()
}

fn default_episodes() -> usize {
    100
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            n: default_eval_n(),
            scenarios: default_scenarios(),
            episodes: default_episodes(),
            base_seed: 0,
            stochastic: false,
            disturbance: None,
            failure: None,
        }
    }
}

impl EvalSection {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::config("eval.episodes must be >= 1"));
        }
        if let Some(d) = &self.disturbance {
            if d.kind() != ScenarioKind::Disturbance {
                return Err(Error::config("eval.disturbance must have kind = \"disturbance\""));
            }
        }
        if let Some(f) = &self.failure {
            if f.kind() != ScenarioKind::ActuatorFailure {
                return Err(Error::config("eval.failure must have kind = \"actuator_failure\""));
            }
        }
        Ok(())
    }
}

/// Actuator-failure cells exist only for the eight-section arm.
pub fn check_scenario_supported(kind: ScenarioKind, n_sections: usize) -> Result<()> {
    if kind == ScenarioKind::ActuatorFailure && n_sections != 8 {
        return Err(Error::config(format!(
            "scenario actuator_failure is defined only for n = 8, requested n = {n_sections}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Periodic checkpoints kept on disk; the final one is always kept.
    #[serde(default = "default_retention")]
    pub checkpoint_retention: usize,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_retention() -> usize {
    3
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            output_dir: default_output_dir(),
            checkpoint_retention: default_retention(),
        }
    }
}

/// Parsed config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub rod: RodParams,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub io: IoSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            rod: RodParams::default(),
            env: EnvSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            io: IoSection::default(),
        }
    }
}

/// Command-line choices that complete a config for one training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOverrides {
    pub architecture: Option<Architecture>,
    pub n_sections: Option<usize>,
    pub seed: Option<u64>,
    pub profile: Option<Profile>,
}

/// Fully resolved settings of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedRun {
    pub version: u32,
    pub architecture: Architecture,
    pub profile: Profile,
    pub rod: RodParams,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub io: IoSection,
}

impl ResolvedRun {
    pub fn validate(&self) -> Result<()> {
        self.rod.validate()?;
        self.env.validate(&self.rod)?;
        self.train.validate()?;
        self.eval.validate()
    }

    /// Hash of everything that affects results; the output location is excluded.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        canonical.io.output_dir = PathBuf::new();
        fingerprint(&canonical)
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    /// Output directory, with the environment override applied.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.io.output_dir.clone(),
        }
    }

    pub fn resolve(&self, overrides: &RunOverrides) -> Result<ResolvedRun> {
        let profile = overrides.profile.or(self.train.profile).unwrap_or_default();
        let n = overrides
            .n_sections
            .or(self.env.n_sections)
            .ok_or_else(|| Error::config("n_sections must be given in [env] or on the command line"))?;
        let mut train = self.train.resolve(profile);
        if let Some(seed) = overrides.seed {
            train.seed = seed;
        }
        let mut io = self.io.clone();
        io.output_dir = self.output_dir();
        let resolved = ResolvedRun {
            version: CONFIG_VERSION,
            architecture: overrides.architecture.unwrap_or(Architecture::Distributed),
            profile,
            rod: self.rod.clone(),
            env: self.env.resolve(n, &self.rod),
            train,
            eval: self.eval.clone(),
            io,
        };
        resolved.validate()?;
        Ok(resolved)
    }

    pub fn validate(&self) -> Result<()> {
        self.rod.validate()?;
        self.eval.validate()?;
        for &n in &self.eval.n {
            self.env.resolve(n, &self.rod).validate(&self.rod)?;
        }
        Ok(())
    }
}

/// SHA-256 of the canonical JSON form, first 16 hex digits.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_vec(&serde_json::to_value(value).expect("serialisable")).expect("json");
    let digest = Sha256::digest(&canonical);
    hex::encode(&digest[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
version = 1

[rod]
damping_coefficient = 8.0

[env]
horizon = 500

[train]
profile = "desk"
updates = 3
seed = 11

[eval]
n = [2, 6]
scenarios = ["nominal", "disturbance"]
episodes = 5

[io]
output_dir = "out"
"#;

    #[test]
    fn parse_and_resolve() {
        let cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        let run = cfg
            .resolve(&RunOverrides {
                architecture: Some(Architecture::Centralised),
                n_sections: Some(6),
                ..Default::default()
            })
            .unwrap();
        assert_eq!(run.rod.damping_coefficient, 8.0);
        assert_eq!(run.env.horizon, 500);
        assert_eq!(run.env.n_sections, 6);
        assert_eq!(run.train.updates, 3);
        assert_eq!(run.train.num_envs, 4);
        assert_eq!(run.train.seed, 11);
        assert_eq!(
            run.eval.scenarios,
            vec![ScenarioKind::Nominal, ScenarioKind::Disturbance]
        );
    }

    #[test]
    fn profiles() {
        let paper = TrainConfig::paper();
        assert_eq!((paper.updates, paper.num_envs, paper.minibatch_size), (10_000, 8, 8192));
        assert_eq!(paper.buffer_len(), 16_000);
        paper.validate().unwrap();
        let desk = TrainConfig::desk();
        assert_eq!((desk.updates, desk.num_envs), (500, 4));
        desk.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("version = 1\nbogus = 3\n").is_err());
        assert!(RunConfig::from_toml_str("version = 1\n[train]\nlearning_rate = 3\n").is_err());
        assert!(RunConfig::from_toml_str("version = 1\n[rod]\nlenght = 1.0\n").is_err());
    }

    #[test]
    fn version_checked() {
        assert!(RunConfig::from_toml_str("version = 2\n").is_err());
        assert!(RunConfig::from_toml_str("[io]\n").is_err());
    }

    #[test]
    fn invalid_train_values() {
        let mut t = TrainConfig::desk();
        t.minibatch_size = t.buffer_len() + 1;
        assert!(t.validate().is_err());
        let mut t = TrainConfig::desk();
        t.gamma = 0.0;
        assert!(t.validate().is_err());
        let mut t = TrainConfig::desk();
        t.clip_eps = 1.0;
        assert!(t.validate().is_err());
    }

    #[test]
    fn failure_scenario_gating() {
        assert!(check_scenario_supported(ScenarioKind::ActuatorFailure, 8).is_ok());
        assert!(check_scenario_supported(ScenarioKind::ActuatorFailure, 6).is_err());
        assert!(check_scenario_supported(ScenarioKind::Disturbance, 6).is_ok());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        let o = RunOverrides {
            n_sections: Some(2),
            ..Default::default()
        };
        let a = cfg.resolve(&o).unwrap();
        let b = cfg.resolve(&o).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = cfg.resolve(&RunOverrides { seed: Some(99), ..o }).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        let again = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }
}

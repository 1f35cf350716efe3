//! Versioned JSON checkpoints.
//!
//! A checkpoint stores every weight tensor with its name and shape, the input
//! scaling constants, the network shape and the rod and task constants used
//! in training. Loading rebuilds the policy skeleton from the stored metadata
//! and refuses any tensor whose name or shape disagrees with it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::nn::{Mlp, Parameters};
use crate::policy::{Architecture, InputScaling, NetworkShape, Policy};
use crate::rod::RodParams;

pub const FORMAT: &str = "softarm-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub n_sections: usize,
    pub network: NetworkShape,
    pub scaling: InputScaling,
    pub env: EnvConfig,
    pub rod: RodParams,
    /// Number of completed updates.
    pub update: usize,
    pub fingerprint: String,
    pub tensors: Vec<TensorRecord>,
}

/// Names and shapes of a policy's tensors, in [`Parameters::tensors`] order.
pub fn tensor_layout(policy: &Policy) -> Vec<(String, Vec<usize>)> {
    fn mlp(prefix: &str, net: &Mlp, out: &mut Vec<(String, Vec<usize>)>) {
        for (k, layer) in net.layers.iter().enumerate() {
            out.push((format!("{prefix}.{k}.weight"), vec![layer.fan_in(), layer.fan_out()]));
            out.push((format!("{prefix}.{k}.bias"), vec![layer.fan_out()]));
        }
    }
    let mut out = Vec::new();
    for (i, agent) in policy.agents.iter().enumerate() {
        mlp(&format!("actor{i}.mean"), &agent.actor.net, &mut out);
        out.push((format!("actor{i}.log_std"), vec![agent.actor.log_std.len()]));
        if let Some(comm) = &agent.comm {
            mlp(&format!("actor{i}.encoder"), &comm.encoder, &mut out);
            mlp(&format!("actor{i}.aggregator"), &comm.aggregator, &mut out);
        }
    }
    mlp("critic", &policy.critic, &mut out);
    out
}

impl Checkpoint {
    pub fn from_policy(policy: &Policy, env: &EnvConfig, rod: &RodParams, update: usize, fingerprint: &str) -> Self {
        let tensors = tensor_layout(policy)
            .into_iter()
            .zip(policy.tensors())
            .map(|((name, shape), data)| TensorRecord {
                name,
                shape,
                data: data.to_vec(),
            })
            .collect();
        Self {
            format: FORMAT.to_string(),
            version: FORMAT_VERSION,
            architecture: policy.architecture,
            n_sections: policy.n_sections,
            network: policy.shape.clone(),
            scaling: policy.scaling,
            env: env.clone(),
            rod: rod.clone(),
            update,
            fingerprint: fingerprint.to_string(),
            tensors,
        }
    }

    /// Rebuilds the policy, checking every tensor against the stored metadata.
    pub fn to_policy(&self) -> Result<Policy> {
        if self.format != FORMAT || self.version != FORMAT_VERSION {
            return Err(Error::CheckpointMismatch(format!(
                "unsupported checkpoint format {} v{}",
                self.format, self.version
            )));
        }
        if self.env.n_sections != self.n_sections {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint n_sections {} disagrees with its env block ({})",
                self.n_sections, self.env.n_sections
            )));
        }
        let mut policy = Policy::new(
            self.architecture,
            self.n_sections,
            self.scaling,
            self.network.clone(),
            0,
        )
        .map_err(|e| Error::CheckpointMismatch(e.to_string()))?;
        let layout = tensor_layout(&policy);
        if layout.len() != self.tensors.len() {
            return Err(Error::CheckpointMismatch(format!(
                "expected {} tensors, found {}",
                layout.len(),
                self.tensors.len()
            )));
        }
        for (((name, shape), record), slot) in layout.iter().zip(&self.tensors).zip(policy.tensors_mut()) {
            if *name != record.name || *shape != record.shape {
                return Err(Error::CheckpointMismatch(format!(
                    "tensor {} has shape {:?}, expected {name} with shape {shape:?}",
                    record.name, record.shape
                )));
            }
            if record.data.len() != slot.len() {
                return Err(Error::CheckpointMismatch(format!(
                    "tensor {name} holds {} values, shape {shape:?} needs {}",
                    record.data.len(),
                    slot.len()
                )));
            }
            if record.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::CheckpointMismatch(format!(
                    "tensor {name} contains non-finite values"
                )));
            }
            slot.copy_from_slice(&record.data);
        }
        Ok(policy)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string(self).expect("checkpoint serialises");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::CheckpointMismatch(format!("{}: not a valid checkpoint: {e}", path.display())))
    }
}

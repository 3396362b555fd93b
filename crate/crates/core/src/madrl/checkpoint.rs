//! JSON checkpoints of a trained pool.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pool::AgentPool;
use super::MadrlError;
use crate::devices::ActionSpaceDescriptor;
use crate::network::FeederNetwork;
use crate::Scalar;

const FORMAT: &str = "vvo-madrl-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile<T> {
    format: String,
    version: u32,
    #[serde(flatten)]
    pool: AgentPool<T>,
}

/// Writes the pool as self-describing JSON. Floats are printed in their
/// shortest round-trip form, so reloading is bit-exact.
pub fn save_checkpoint<T: Scalar>(pool: &AgentPool<T>, path: impl AsRef<Path>) -> Result<(), MadrlError> {
    let file = CheckpointFile {
        format: FORMAT.to_string(),
        version: VERSION,
        pool: pool.clone(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Loads a checkpoint without checking it against a feeder.
pub fn read_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<AgentPool<T>, MadrlError> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile<T> = serde_json::from_str(&text)?;
    if file.format != FORMAT || file.version != VERSION {
        return Err(MadrlError::Incompatible(format!(
            "unsupported checkpoint format {} v{}",
            file.format, file.version
        )));
    }
    check_shapes(&file.pool)?;
    Ok(file.pool)
}

/// Loads a checkpoint and verifies it was trained on `network`.
pub fn load_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    network: &FeederNetwork<T>,
) -> Result<AgentPool<T>, MadrlError> {
    let pool = read_checkpoint(path)?;
    pool.check_compatible(network)?;
    Ok(pool)
}

fn check_shapes<T: Scalar>(pool: &AgentPool<T>) -> Result<(), MadrlError> {
    if pool.agents.len() != pool.descriptor.len() {
        return Err(MadrlError::Incompatible("agent count differs from slot count".into()));
    }
    for (i, (agent, slot)) in pool.agents.iter().zip(&pool.descriptor.slots).enumerate() {
        let layers_ok = agent.q.layers.windows(2).all(|w| w[0].outputs == w[1].inputs)
            && agent
                .q
                .layers
                .iter()
                .all(|l| l.weights.len() == l.inputs * l.outputs && l.biases.len() == l.outputs);
        if agent.q.layers.is_empty()
            || !layers_ok
            || agent.slot != *slot
            || agent.q.input_dim() != pool.state_dim
            || agent.q.output_dim() != slot.cardinality
        {
            return Err(MadrlError::Incompatible(format!("agent {i} has inconsistent shapes")));
        }
    }
    Ok(())
}

impl<T: Scalar> AgentPool<T> {
    pub fn check_compatible(&self, network: &FeederNetwork<T>) -> Result<(), MadrlError> {
        if self.feeder_hash != network.identity_hash() {
            return Err(MadrlError::Incompatible(format!(
                "trained on feeder {} ({}), got {}",
                self.feeder, self.feeder_hash, network.name
            )));
        }
        if self.descriptor != ActionSpaceDescriptor::for_network(network) || self.state_dim != network.state_dim() {
            return Err(MadrlError::Incompatible("action space or state dimension differs".into()));
        }
        Ok(())
    }
}

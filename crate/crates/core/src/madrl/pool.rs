//! Agent pool, state encoding and ε-greedy selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::MlpNetwork;
use super::optimizer::Optimizer;
use super::train::TrainerConfig;
use super::MadrlError;
use crate::devices::{ActionSlot, ActionSpaceDescriptor};
use crate::env::EnvState;
use crate::network::FeederNetwork;
use crate::Scalar;

/// How voltage magnitudes are fed to the networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateEncoding<T> {
    Raw,
    /// `(v − center)/scale` on present phases, 0 on absent ones.
    Centered { center: T, scale: T },
}

impl<T: Scalar> StateEncoding<T> {
    /// Centered on 1 p.u. with the ±0.05 band mapped to ±1.
    pub fn centered() -> Self {
        StateEncoding::Centered {
            center: T::one(),
            scale: T::lit(0.05),
        }
    }

    pub fn encode(&self, state: &[T]) -> Vec<T> {
        match *self {
            StateEncoding::Raw => state.to_vec(),
            StateEncoding::Centered { center, scale } => state
                .iter()
                .map(|&v| if v > T::zero() { (v - center) / scale } else { T::zero() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent<T> {
    pub slot: ActionSlot,
    pub q: MlpNetwork<T>,
    pub target: Option<MlpNetwork<T>>,
    pub optimizer: Optimizer<T>,
    pub updates: u64,
}

/// Per-agent choice plus whether it came from the exploration branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub actions: Vec<usize>,
    pub explored: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPool<T> {
    pub feeder: String,
    pub feeder_hash: String,
    pub descriptor: ActionSpaceDescriptor,
    pub state_dim: usize,
    pub encoding: StateEncoding<T>,
    pub config: TrainerConfig<T>,
    pub agents: Vec<Agent<T>>,
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax<T: Scalar>(q: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// `ε_t = ε_{t−1}·η`.
pub fn decay_epsilon<T: Scalar>(epsilon: T, eta: T) -> T {
    epsilon * eta
}

impl<T: Scalar> AgentPool<T> {
    /// Randomly initialized agents, one per action slot of `network`.
    pub fn new<R: Rng + ?Sized>(
        network: &FeederNetwork<T>,
        config: &TrainerConfig<T>,
        rng: &mut R,
    ) -> Result<Self, MadrlError> {
        config.validate()?;
        let descriptor = ActionSpaceDescriptor::for_network(network);
        let state_dim = network.state_dim();
        let agents = descriptor
            .slots
            .iter()
            .map(|slot| {
                let mut dims = vec![state_dim];
                dims.extend(&config.hidden);
                dims.push(slot.cardinality);
                let q = MlpNetwork::new(&dims, config.output, rng)?;
                let optimizer = Optimizer::new(config.optimizer, config.learning_rate, &q);
                Ok(Agent {
                    slot: slot.clone(),
                    target: config.target_sync.map(|_| q.clone()),
                    q,
                    optimizer,
                    updates: 0,
                })
            })
            .collect::<Result<Vec<_>, MadrlError>>()?;
        Ok(AgentPool {
            feeder: network.name.clone(),
            feeder_hash: network.identity_hash(),
            descriptor,
            state_dim,
            encoding: config.encoding,
            config: config.clone(),
            agents,
        })
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    fn encoded(&self, state: &EnvState<T>) -> Result<Vec<T>, MadrlError> {
        if state.len() != self.state_dim {
            return Err(MadrlError::DimensionMismatch {
                expected: self.state_dim,
                got: state.len(),
            });
        }
        Ok(self.encoding.encode(&state.0))
    }

    /// Q-vector of every agent on `state`.
    pub fn q_values(&self, state: &EnvState<T>) -> Result<Vec<Vec<T>>, MadrlError> {
        let x = self.encoded(state)?;
        self.agents.iter().map(|a| a.q.forward(&x)).collect()
    }

    /// Per-agent argmax.
    pub fn act_greedy(&self, state: &EnvState<T>) -> Result<Vec<usize>, MadrlError> {
        Ok(self.q_values(state)?.iter().map(|q| argmax(q)).collect())
    }

    /// ε-greedy joint action; each agent explores independently.
    pub fn select_actions<R: Rng + ?Sized>(
        &self,
        state: &EnvState<T>,
        epsilon: T,
        rng: &mut R,
    ) -> Result<Vec<usize>, MadrlError> {
        Ok(self.select_traced(state, epsilon, rng)?.actions)
    }

    pub fn select_traced<R: Rng + ?Sized>(
        &self,
        state: &EnvState<T>,
        epsilon: T,
        rng: &mut R,
    ) -> Result<Selection, MadrlError> {
        let x = self.encoded(state)?;
        self.select_encoded(&x, epsilon, rng)
    }

    pub(crate) fn select_encoded<R: Rng + ?Sized>(
        &self,
        x: &[T],
        epsilon: T,
        rng: &mut R,
    ) -> Result<Selection, MadrlError> {
        let eps = epsilon.as_f64();
        let mut actions = Vec::with_capacity(self.agents.len());
        let mut explored = Vec::with_capacity(self.agents.len());
        for agent in &self.agents {
            let xi: f64 = rng.gen();
            if xi < eps {
                actions.push(rng.gen_range(0..agent.slot.cardinality));
                explored.push(true);
            } else {
                actions.push(argmax(&agent.q.forward(x)?));
                explored.push(false);
            }
        }
        Ok(Selection { actions, explored })
    }
}

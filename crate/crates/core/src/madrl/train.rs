//! Training loop.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Sample};
use super::optimizer::OptimizerKind;
use super::pool::{decay_epsilon, AgentPool, StateEncoding};
use super::replay::ReplayBuffer;
use super::MadrlError;
use crate::env::{EnvConfig, EnvError, VvoEnv};
use crate::network::FeederNetwork;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig<T> {
    pub learning_rate: T,
    pub gamma: T,
    pub epsilon_decay: T,
    pub epsilon_start: T,
    /// Transitions drawn from replay per agent update (the current one is added).
    pub batch_size: usize,
    pub episodes: usize,
    pub replay_capacity: usize,
    pub optimizer: OptimizerKind<T>,
    /// Copy the online network into a target network every this many updates.
    pub target_sync: Option<usize>,
    pub hidden: Vec<usize>,
    pub output: Activation,
    pub encoding: StateEncoding<T>,
    /// Multiplier applied to rewards before they enter the Bellman targets.
    pub reward_scale: T,
    /// Step failures tolerated in a row before training aborts.
    pub max_consecutive_failures: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for TrainerConfig<T> {
    fn default() -> Self {
        TrainerConfig {
            learning_rate: T::lit(1e-4),
            gamma: T::lit(0.95),
            epsilon_decay: T::lit(0.999),
            epsilon_start: T::one(),
            batch_size: 32,
            episodes: 8000,
            replay_capacity: 2000,
            optimizer: OptimizerKind::Sgd,
            target_sync: None,
            hidden: vec![128, 64],
            output: Activation::Linear,
            encoding: StateEncoding::centered(),
            reward_scale: T::lit(0.1),
            max_consecutive_failures: 20,
            seed: 0,
        }
    }
}

impl<T: Scalar> TrainerConfig<T> {
    pub fn validate(&self) -> Result<(), MadrlError> {
        let (z, one) = (T::zero(), T::one());
        if !(self.learning_rate > z) {
            return Err(MadrlError::InvalidConfig("learning rate must be positive"));
        }
        if !(self.gamma >= z && self.gamma <= one) {
            return Err(MadrlError::InvalidConfig("gamma must lie in [0, 1]"));
        }
        if !(self.epsilon_decay > z && self.epsilon_decay <= one) {
            return Err(MadrlError::InvalidConfig("epsilon decay must lie in (0, 1]"));
        }
        if !(self.epsilon_start > z && self.epsilon_start <= one) {
            return Err(MadrlError::InvalidConfig("initial epsilon must lie in (0, 1]"));
        }
        if self.replay_capacity == 0 {
            return Err(MadrlError::InvalidConfig("replay capacity must be positive"));
        }
        if self.target_sync == Some(0) {
            return Err(MadrlError::InvalidConfig("target sync period must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(MadrlError::InvalidConfig("hidden layers must be non-empty"));
        }
        if !(self.reward_scale > z && self.reward_scale.is_finite()) {
            return Err(MadrlError::InvalidConfig("reward scale must be positive"));
        }
        if let StateEncoding::Centered { scale, .. } = self.encoding {
            if !(scale > z) {
                return Err(MadrlError::InvalidConfig("encoding scale must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord<T> {
    pub episode: usize,
    pub reward: T,
    pub loss_kw: T,
    pub violation: T,
    pub epsilon: T,
}

/// Encoded joint transition as stored in replay.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience<T> {
    pub input: Vec<T>,
    pub actions: Vec<usize>,
    /// Already multiplied by the reward scale.
    pub reward: T,
    pub next_input: Vec<T>,
}

/// Violation charged to a step whose power flow fails.
const FAILED_STEP_VIOLATION: f64 = 1.0;

/// Trains a fresh pool on `network` and returns it with the per-episode log.
pub fn train<T: Scalar>(
    network: &FeederNetwork<T>,
    env_config: &EnvConfig<T>,
    config: &TrainerConfig<T>,
) -> Result<(AgentPool<T>, Vec<TrainingRecord<T>>), MadrlError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pool = AgentPool::new(network, config, &mut rng)?;
    let env = VvoEnv::new(network, *env_config, rng.next_u64())?;
    train_with_env(pool, env, config, &mut rng)
}

/// Continues training `pool` in `env`.
pub fn train_with_env<T: Scalar>(
    mut pool: AgentPool<T>,
    mut env: VvoEnv<'_, T>,
    config: &TrainerConfig<T>,
    rng: &mut ChaCha8Rng,
) -> Result<(AgentPool<T>, Vec<TrainingRecord<T>>), MadrlError> {
    config.validate()?;
    let mut replay: ReplayBuffer<Experience<T>> = ReplayBuffer::new(config.replay_capacity);
    let mut log = Vec::with_capacity(config.episodes);
    let mut epsilon = config.epsilon_start;
    let mut failures = 0usize;
    let penalty = env.config().reward.penalty;
    for episode in 1..=config.episodes {
        reset(&mut env)?;
        let (mut total, mut loss_kw, mut violation) = (T::zero(), T::zero(), T::zero());
        for _ in 0..env.config().steps_per_episode {
            let input = pool.encoding.encode(&env.state().0);
            let actions = pool.select_encoded(&input, epsilon, rng)?.actions;
            let (reward, next_input, done) = match env.step(&actions) {
                Ok(t) => {
                    failures = 0;
                    loss_kw = t.loss_kw;
                    violation = t.violation;
                    (t.reward, pool.encoding.encode(&t.next_state.0), t.done)
                }
                Err(e @ (EnvError::PowerFlow { .. } | EnvError::NotConverged { .. })) => {
                    failures += 1;
                    if failures > config.max_consecutive_failures {
                        return Err(MadrlError::PersistentDivergence {
                            episode,
                            failures,
                            last: e,
                        });
                    }
                    violation = T::lit(FAILED_STEP_VIOLATION);
                    (-penalty * violation, input.clone(), true)
                }
                Err(e) => return Err(e.into()),
            };
            total += reward;
            let current = Experience {
                input,
                actions,
                reward: reward * config.reward_scale,
                next_input,
            };
            update_agents(&mut pool, &replay, &current, config, rng)?;
            replay.push(current);
            if done {
                break;
            }
        }
        log.push(TrainingRecord {
            episode,
            reward: total,
            loss_kw,
            violation,
            epsilon,
        });
        epsilon = decay_epsilon(epsilon, config.epsilon_decay);
    }
    Ok((pool, log))
}

/// Draws a new scenario; if the carried action fails on it, falls back to neutral.
fn reset<T: Scalar>(env: &mut VvoEnv<'_, T>) -> Result<(), MadrlError> {
    match env.reset() {
        Ok(_) => Ok(()),
        Err(EnvError::PowerFlow { .. } | EnvError::NotConverged { .. }) => {
            let neutral = env.descriptor().neutral_indices();
            env.carry(neutral);
            let scenario = env.scenario().clone();
            env.set_scenario(scenario)?;
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

/// One gradient step per agent on `batch_size` replayed transitions plus `current`.
fn update_agents<T: Scalar>(
    pool: &mut AgentPool<T>,
    replay: &ReplayBuffer<Experience<T>>,
    current: &Experience<T>,
    config: &TrainerConfig<T>,
    rng: &mut ChaCha8Rng,
) -> Result<(), MadrlError> {
    for (j, agent) in pool.agents.iter_mut().enumerate() {
        let mut batch = replay.sample(config.batch_size, rng);
        batch.push(current);
        let bootstrap = agent.target.as_ref().unwrap_or(&agent.q);
        let targets = batch
            .iter()
            .map(|e| {
                if config.gamma == T::zero() {
                    return Ok(e.reward);
                }
                let next = bootstrap.forward(&e.next_input)?;
                let best = next.iter().copied().fold(T::neg_infinity(), T::max);
                Ok(e.reward + config.gamma * best)
            })
            .collect::<Result<Vec<T>, MadrlError>>()?;
        let samples: Vec<Sample<'_, T>> = batch
            .iter()
            .zip(&targets)
            .map(|(e, &target)| Sample {
                input: &e.input,
                action: e.actions[j],
                target,
            })
            .collect();
        let (loss, grads) = agent.q.gradients(&samples)?;
        if !loss.is_finite() {
            return Err(MadrlError::NonFinite("training loss"));
        }
        agent.optimizer.apply(&mut agent.q, &grads)?;
        agent.updates += 1;
        if let (Some(period), Some(target)) = (config.target_sync, agent.target.as_mut()) {
            if agent.updates % period as u64 == 0 {
                *target = agent.q.clone();
            }
        }
    }
    Ok(())
}

//! Reinforcement-learning environment around the power flow.
//!
//! A scenario scales every load and DG output independently. Applying a joint
//! action solves the scenario and yields the voltage state, the series loss
//! and the voltage-violation amount. The reward compares the new action's
//! loss with the carried-over previous action's loss under the same scenario.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::{ActionSpaceDescriptor, DeviceError, JointAction};
use crate::network::FeederNetwork;
use crate::powerflow::{OperatingPoint, PowerFlowError, PowerFlowSolution, Solver, SolverConfig};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("power flow failed for scenario seed {seed} under action {action:?}: {source}")]
    PowerFlow {
        seed: u64,
        action: Vec<usize>,
        #[source]
        source: PowerFlowError,
    },
    #[error("solver did not converge for scenario seed {seed} under action {action:?}")]
    NotConverged { seed: u64, action: Vec<usize> },
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Uniform sampling intervals for the per-load and per-DG-phase multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBounds<T> {
    pub load: (T, T),
    /// Multiplier on each DG phase's nominal active output, capped at rating.
    pub dg: (T, T),
}

impl<T: Scalar> Default for ScenarioBounds<T> {
    fn default() -> Self {
        let b = (T::lit(0.8), T::lit(1.2));
        ScenarioBounds { load: b, dg: b }
    }
}

impl<T: Scalar> ScenarioBounds<T> {
    pub fn validate(&self) -> Result<(), EnvError> {
        for (lo, hi) in [self.load, self.dg] {
            if !(lo > T::zero() && lo <= hi && hi.is_finite()) {
                return Err(EnvError::InvalidConfig("bounds must satisfy 0 < lo <= hi < inf"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario<T> {
    pub load_scale: Vec<T>,
    /// Active output per DG unit entry in kW.
    pub dg_kw: Vec<Vec<T>>,
    pub seed: u64,
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, (lo, hi): (T, T)) -> T {
    if lo == hi {
        return lo;
    }
    let u: f64 = rng.gen();
    lo + (hi - lo) * T::lit(u)
}

/// Independent uniform multipliers for every load and DG phase.
pub fn sample_scenario<T: Scalar>(
    network: &FeederNetwork<T>,
    bounds: &ScenarioBounds<T>,
    seed: u64,
) -> Scenario<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let load_scale = network.loads.iter().map(|_| uniform(&mut rng, bounds.load)).collect();
    let base = network.power_base_kw();
    let dg_kw = network
        .dg_units
        .iter()
        .map(|u| {
            u.entries
                .iter()
                .map(|e| {
                    let p = e.p_out * uniform(&mut rng, bounds.dg);
                    p.min(e.s_rated) * base
                })
                .collect()
        })
        .collect();
    Scenario { load_scale, dg_kw, seed }
}

impl<T: Scalar> Scenario<T> {
    /// The nominal condition: unit load scales, nominal DG output.
    pub fn nominal(network: &FeederNetwork<T>) -> Self {
        sample_scenario(
            network,
            &ScenarioBounds {
                load: (T::one(), T::one()),
                dg: (T::one(), T::one()),
            },
            0,
        )
    }

    pub fn operating_point(&self, network: &FeederNetwork<T>) -> OperatingPoint<T> {
        let base = network.power_base_kw();
        OperatingPoint {
            load_scale: self.load_scale.clone(),
            dg_p: self
                .dg_kw
                .iter()
                .map(|u| u.iter().map(|&p| p / base).collect())
                .collect(),
            inverter_min_pf: None,
        }
    }
}

/// Flattened |U| per bus and phase (a, b, c); absent phases are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState<T>(pub Vec<T>);

impl<T: Scalar> EnvState<T> {
    pub fn from_solution(network: &FeederNetwork<T>, solution: &PowerFlowSolution<T>) -> Self {
        let mut v = Vec::with_capacity(network.state_dim());
        for (bus, u) in network.buses.iter().zip(&solution.voltages) {
            for p in crate::phase::Phase::ALL {
                v.push(if bus.phases.contains(p) { u[p].norm() } else { T::zero() });
            }
        }
        EnvState(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig<T> {
    /// Penalty per p.u. of total violation.
    pub penalty: T,
    pub v_min: T,
    pub v_max: T,
}

impl<T: Scalar> Default for RewardConfig<T> {
    fn default() -> Self {
        RewardConfig {
            penalty: T::lit(1000.0),
            v_min: T::lit(0.95),
            v_max: T::lit(1.05),
        }
    }
}

impl<T: Scalar> RewardConfig<T> {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.penalty > T::zero()) {
            return Err(EnvError::InvalidConfig("penalty must be positive"));
        }
        if !(self.v_min < self.v_max) {
            return Err(EnvError::InvalidConfig("lower voltage bound must be below the upper"));
        }
        Ok(())
    }
}

/// Σ over magnitudes of the distance outside `[v_min, v_max]`.
///
/// Zero entries (absent phases) are skipped.
pub fn violation_amount<T: Scalar>(magnitudes: &[T], cfg: &RewardConfig<T>) -> T {
    magnitudes
        .iter()
        .filter(|&&v| v > T::zero())
        .fold(T::zero(), |acc, &v| {
            acc + (v - cfg.v_max).max(T::zero()) + (cfg.v_min - v).max(T::zero())
        })
}

/// Loss reduction when no bound is violated, otherwise `-M·violation`.
pub fn reward<T: Scalar>(prev_loss_kw: T, new_loss_kw: T, violation: T, cfg: &RewardConfig<T>) -> T {
    if violation > T::zero() {
        -cfg.penalty * violation
    } else {
        prev_loss_kw - new_loss_kw
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T> {
    pub state: EnvState<T>,
    pub loss_kw: T,
    pub violation: T,
}

/// Solves `scenario` under `action` and extracts state, loss and violation.
///
/// `indices` is carried only for error diagnostics.
pub fn apply<T: Scalar>(
    solver: &Solver<'_, T>,
    scenario: &Scenario<T>,
    action: &JointAction,
    indices: &[usize],
    solver_cfg: &SolverConfig<T>,
    reward_cfg: &RewardConfig<T>,
) -> Result<Evaluation<T>, EnvError> {
    let net = solver.network();
    let op = scenario.operating_point(net);
    let fail = |source| EnvError::PowerFlow {
        seed: scenario.seed,
        action: indices.to_vec(),
        source,
    };
    let solution = solver.solve(action, &op, solver_cfg).map_err(fail)?;
    if !solution.converged {
        return Err(EnvError::NotConverged {
            seed: scenario.seed,
            action: indices.to_vec(),
        });
    }
    let state = EnvState::from_solution(net, &solution);
    let violation = violation_amount(&state.0, reward_cfg);
    Ok(Evaluation {
        state,
        loss_kw: solution.total_loss_kw,
        violation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig<T> {
    pub bounds: ScenarioBounds<T>,
    pub reward: RewardConfig<T>,
    pub solver: SolverConfig<T>,
    /// Control steps per scenario; 1 gives one step per episode.
    pub steps_per_episode: usize,
}

impl<T: Scalar> Default for EnvConfig<T> {
    fn default() -> Self {
        EnvConfig {
            bounds: ScenarioBounds::default(),
            reward: RewardConfig::default(),
            solver: SolverConfig::default(),
            steps_per_episode: 1,
        }
    }
}

impl<T: Scalar> EnvConfig<T> {
    pub fn validate(&self) -> Result<(), EnvError> {
        self.bounds.validate()?;
        self.reward.validate()?;
        if self.steps_per_episode == 0 {
            return Err(EnvError::InvalidConfig("steps_per_episode must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition<T> {
    pub state: EnvState<T>,
    pub action: Vec<usize>,
    pub reward: T,
    pub next_state: EnvState<T>,
    pub loss_kw: T,
    pub violation: T,
    /// True when this step ended its episode.
    pub done: bool,
}

/// One feeder environment with its own scenario stream.
pub struct VvoEnv<'a, T> {
    solver: Solver<'a, T>,
    descriptor: ActionSpaceDescriptor,
    config: EnvConfig<T>,
    rng: ChaCha8Rng,
    scenario: Scenario<T>,
    state: EnvState<T>,
    prev_action: Vec<usize>,
    prev_loss_kw: T,
    step_in_episode: usize,
}

impl<'a, T: Scalar> VvoEnv<'a, T> {
    /// The carried action starts at the neutral settings.
    pub fn new(network: &'a FeederNetwork<T>, config: EnvConfig<T>, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let solver = Solver::new(network).map_err(|source| EnvError::PowerFlow {
            seed,
            action: Vec::new(),
            source,
        })?;
        let descriptor = ActionSpaceDescriptor::for_network(network);
        let prev_action = descriptor.neutral_indices();
        Ok(VvoEnv {
            solver,
            descriptor,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            scenario: Scenario::nominal(network),
            state: EnvState(vec![T::zero(); network.state_dim()]),
            prev_action,
            prev_loss_kw: T::zero(),
            step_in_episode: 0,
        })
    }

    pub fn network(&self) -> &'a FeederNetwork<T> {
        self.solver.network()
    }

    pub fn solver(&self) -> &Solver<'a, T> {
        &self.solver
    }

    pub fn descriptor(&self) -> &ActionSpaceDescriptor {
        &self.descriptor
    }

    pub fn config(&self) -> &EnvConfig<T> {
        &self.config
    }

    pub fn scenario(&self) -> &Scenario<T> {
        &self.scenario
    }

    pub fn state(&self) -> &EnvState<T> {
        &self.state
    }

    pub fn prev_action(&self) -> &[usize] {
        &self.prev_action
    }

    pub fn prev_loss_kw(&self) -> T {
        self.prev_loss_kw
    }

    /// Evaluates index vector `indices` under the current scenario.
    pub fn evaluate(&self, indices: &[usize]) -> Result<Evaluation<T>, EnvError> {
        let action = self.descriptor.decode_for(self.network(), indices)?;
        apply(
            &self.solver,
            &self.scenario,
            &action,
            indices,
            &self.config.solver,
            &self.config.reward,
        )
    }

    /// Replaces the carried action without evaluating it.
    pub fn carry(&mut self, indices: Vec<usize>) {
        self.prev_action = indices;
    }

    /// Starts an episode: draws a scenario and evaluates the carried action on it.
    pub fn reset(&mut self) -> Result<&EnvState<T>, EnvError> {
        let seed = self.rng.next_u64();
        self.set_scenario(sample_scenario(self.network(), &self.config.bounds, seed))
    }

    /// Starts an episode on a given scenario.
    pub fn set_scenario(&mut self, scenario: Scenario<T>) -> Result<&EnvState<T>, EnvError> {
        self.scenario = scenario;
        let eval = self.evaluate(&self.prev_action)?;
        self.state = eval.state;
        self.prev_loss_kw = eval.loss_kw;
        self.step_in_episode = 0;
        Ok(&self.state)
    }

    /// Applies `indices`, rewards it against the carried action and carries it forward.
    pub fn step(&mut self, indices: &[usize]) -> Result<Transition<T>, EnvError> {
        let eval = self.evaluate(indices)?;
        let r = reward(self.prev_loss_kw, eval.loss_kw, eval.violation, &self.config.reward);
        self.step_in_episode += 1;
        let transition = Transition {
            state: std::mem::replace(&mut self.state, eval.state.clone()),
            action: indices.to_vec(),
            reward: r,
            next_state: eval.state,
            loss_kw: eval.loss_kw,
            violation: eval.violation,
            done: self.step_in_episode >= self.config.steps_per_episode,
        };
        self.prev_action = indices.to_vec();
        self.prev_loss_kw = eval.loss_kw;
        Ok(transition)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    fn cfg() -> RewardConfig<f64> {
        RewardConfig::default()
    }

    #[test]
    fn degenerate_bounds_give_unit_scales() {
        let net = bundled::ieee13::<f64>().unwrap();
        let b = ScenarioBounds {
            load: (1.0, 1.0),
            dg: (1.0, 1.0),
        };
        let s = sample_scenario(&net, &b, 5);
        assert!(s.load_scale.iter().all(|&x| x == 1.0));
        let op = s.operating_point(&net);
        let nominal = OperatingPoint::nominal(&net);
        for (a, b) in op.dg_p.iter().flatten().zip(nominal.dg_p.iter().flatten()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn same_seed_same_scenario() {
        let net = bundled::ieee13::<f64>().unwrap();
        let b = ScenarioBounds::default();
        assert_eq!(sample_scenario(&net, &b, 9), sample_scenario(&net, &b, 9));
        assert_ne!(sample_scenario(&net, &b, 9), sample_scenario(&net, &b, 10));
    }

    #[test]
    fn sample_statistics() {
        let net = bundled::ieee13::<f64>().unwrap();
        let b = ScenarioBounds::default();
        let (mut lo, mut hi, mut sum, mut n) = (f64::MAX, f64::MIN, 0.0, 0usize);
        for seed in 0..10_000 {
            for x in sample_scenario(&net, &b, seed).load_scale {
                lo = lo.min(x);
                hi = hi.max(x);
                sum += x;
                n += 1;
            }
        }
        assert!(lo >= 0.8 && hi <= 1.2);
        assert!((sum / n as f64 - 1.0).abs() < 0.01);
    }

    #[test]
    fn violation_examples() {
        let c = cfg();
        assert_eq!(violation_amount(&[1.0, 0.99, 1.04, 0.0], &c), 0.0);
        assert!((violation_amount(&[1.07, 1.0, 1.0], &c) - 0.02).abs() < 1e-12);
        assert!((violation_amount(&[0.94, 1.06, 1.0], &c) - 0.02).abs() < 1e-12);
    }

    #[test]
    fn reward_examples() {
        let c = cfg();
        assert_eq!(reward(100.0, 90.0, 0.0, &c), 10.0);
        assert_eq!(reward(100.0, 110.0, 0.0, &c), -10.0);
        assert!((reward(3.0, 1.0, 0.02, &c) + 20.0).abs() < 1e-9);
    }

    #[test]
    fn bad_reward_config_rejected() {
        let mut c = cfg();
        c.penalty = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.v_min = 1.1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn state_has_fixed_dimension() {
        let net = bundled::ieee13::<f64>().unwrap();
        let mut env = VvoEnv::new(&net, EnvConfig::default(), 1).unwrap();
        for _ in 0..3 {
            let s = env.reset().unwrap().clone();
            assert_eq!(s.len(), 3 * net.buses.len());
            for (k, bus) in net.buses.iter().enumerate() {
                for p in crate::phase::Phase::ALL {
                    let v = s.0[3 * k + p.index()];
                    assert_eq!(bus.phases.contains(p), v > 0.0);
                }
            }
        }
    }

    #[test]
    fn repeating_an_action_without_violation_gives_zero() {
        let net = bundled::ieee13::<f64>().unwrap();
        let mut env = VvoEnv::new(&net, EnvConfig::default(), 3).unwrap();
        env.reset().unwrap();
        let a = (1..33)
            .flat_map(|tap| (0..2).map(move |cap| (tap, cap)))
            .map(|(tap, cap)| {
                let mut a = env.descriptor().neutral_indices();
                for (i, s) in env.descriptor().slots.iter().enumerate() {
                    match s.kind {
                        crate::devices::DeviceKind::Regulator => a[i] = tap,
                        crate::devices::DeviceKind::Capacitor => a[i] = cap,
                        _ => {}
                    }
                }
                a
            })
            .find(|a| env.evaluate(a).unwrap().violation == 0.0)
            .expect("some uniform tap/cap setting is inside the band");
        let first = env.step(&a).unwrap();
        assert_eq!(first.violation, 0.0);
        let second = env.step(&a).unwrap();
        assert_eq!(second.reward, 0.0);
        assert_eq!(second.state, first.next_state);
    }

    #[test]
    fn violating_action_is_penalized() {
        let net = bundled::ieee13::<f64>().unwrap();
        let mut env = VvoEnv::new(&net, EnvConfig::default(), 3).unwrap();
        env.reset().unwrap();
        let mut a = env.descriptor().neutral_indices();
        for (i, s) in env.descriptor().slots.iter().enumerate() {
            if s.kind == crate::devices::DeviceKind::Regulator {
                a[i] = 0;
            }
        }
        let t = env.step(&a).unwrap();
        assert!(t.violation > 0.0);
        assert!(t.reward < 0.0);
    }

    #[test]
    fn env_is_deterministic() {
        let net = bundled::ieee13::<f64>().unwrap();
        let run = || {
            let mut env = VvoEnv::new(&net, EnvConfig::default(), 42).unwrap();
            let mut out = Vec::new();
            for k in 0..3 {
                env.reset().unwrap();
                let mut a = env.descriptor().neutral_indices();
                a[0] = 17 + k;
                out.push(env.step(&a).unwrap());
            }
            out
        };
        assert_eq!(run(), run());
    }
}

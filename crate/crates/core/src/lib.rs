//! Volt-VAR control for unbalanced radial distribution feeders.
//!
//! A forward-backward sweep power flow ([`powerflow`]) serves as the
//! environment ([`env`]) for a pool of per-device-phase DQN agents
//! ([`madrl`]) that set regulator taps, capacitor switches and inverter
//! reactive output. [`experiment`] holds the evaluation harness.

// `!(x > 0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundled;
pub mod devices;
pub mod env;
pub mod experiment;
pub mod madrl;
pub mod network;
pub mod phase;
pub mod powerflow;
mod scalar;

pub use scalar::Scalar;

pub type Feeder = network::FeederNetwork<f64>;
pub type Solution = powerflow::PowerFlowSolution<f64>;
pub type Pool = madrl::AgentPool<f64>;
pub type Network = madrl::MlpNetwork<f64>;

//! Evaluation harness: baseline comparison, success rate, loss reduction and reports.

use std::io::{Read, Write};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::{ActionSpaceDescriptor, DeviceError, JointAction};
use crate::env::{apply, sample_scenario, EnvConfig, EnvError, EnvState, Evaluation, Scenario};
use crate::madrl::{AgentPool, MadrlError, TrainingRecord};
use crate::network::FeederNetwork;
use crate::powerflow::{PowerFlowError, Solver};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Madrl(#[from] MadrlError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Caps off, taps neutral, inverters at unity power factor.
pub fn baseline_settings<T>(network: &FeederNetwork<T>) -> JointAction {
    JointAction::neutral(network)
}

/// One test case. Losses of a diverged evaluation are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: usize,
    pub p_loss_base_kw: Option<f64>,
    pub p_loss_ctrl_kw: Option<f64>,
    pub delta_p_kw: Option<f64>,
    pub viol_base: Option<f64>,
    pub viol_ctrl: Option<f64>,
}

/// Wall time of greedy inference plus the controlled solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseTiming {
    pub case_id: usize,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub feeder: String,
    pub n_test: usize,
    /// Cases whose baseline solve converged.
    pub n_evaluated: usize,
    /// Cases with a baseline violation.
    pub m_v: usize,
    /// Of those, cases the control brings inside the band.
    pub n_v: usize,
    /// `n_v / m_v`; absent when no case violates at baseline.
    pub s_v: Option<f64>,
    pub mean_delta_p_kw: Option<f64>,
    pub max_delta_p_kw: Option<f64>,
    pub frac_delta_p_positive: Option<f64>,
    pub mean_base_loss_kw: Option<f64>,
    /// Mean of ΔP over the baseline loss, in percent.
    pub mean_reduction_pct: Option<f64>,
    /// Cases whose controlled state still violates the band.
    pub ctrl_violation_cases: usize,
    pub control_failures: usize,
    pub mean_latency_ms: Option<f64>,
    pub reference: Option<PublishedReference>,
}

/// Published figures for the bundled feeders, reported next to ours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedReference {
    pub s_v: f64,
    pub mean_delta_p_kw: f64,
    pub max_delta_p_kw: f64,
    pub frac_delta_p_positive: f64,
    pub mean_reduction_pct: f64,
    pub mean_latency_ms: f64,
}

pub fn published_reference(feeder: &str) -> Option<PublishedReference> {
    match feeder {
        "ieee13" => Some(PublishedReference {
            s_v: 0.998,
            mean_delta_p_kw: 34.12,
            max_delta_p_kw: 62.22,
            frac_delta_p_positive: 1.0,
            mean_reduction_pct: 14.78,
            mean_latency_ms: 21.7,
        }),
        "ieee123" => Some(PublishedReference {
            s_v: 0.99975,
            mean_delta_p_kw: 109.09,
            max_delta_p_kw: 123.55,
            frac_delta_p_positive: 1.0,
            mean_reduction_pct: 36.09,
            mean_latency_ms: 39.2,
        }),
        _ => None,
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Aggregates per-case results; latency is merged from `timings` if given.
pub fn aggregate(feeder: &str, cases: &[CaseResult], timings: &[CaseTiming]) -> EvalReport {
    let evaluated: Vec<&CaseResult> = cases.iter().filter(|c| c.p_loss_base_kw.is_some()).collect();
    let m_v = evaluated.iter().filter(|c| c.viol_base.is_some_and(|v| v > 0.0)).count();
    let n_v = evaluated
        .iter()
        .filter(|c| c.viol_base.is_some_and(|v| v > 0.0) && c.viol_ctrl == Some(0.0))
        .count();
    let deltas: Vec<f64> = evaluated.iter().filter_map(|c| c.delta_p_kw).collect();
    let base: Vec<f64> = evaluated
        .iter()
        .filter(|c| c.delta_p_kw.is_some())
        .filter_map(|c| c.p_loss_base_kw)
        .collect();
    let pct: Vec<f64> = evaluated
        .iter()
        .filter_map(|c| Some(100.0 * c.delta_p_kw? / c.p_loss_base_kw?))
        .collect();
    let latencies: Vec<f64> = timings.iter().map(|t| t.latency_ms).collect();
    EvalReport {
        feeder: feeder.to_string(),
        n_test: cases.len(),
        n_evaluated: evaluated.len(),
        m_v,
        n_v,
        s_v: (m_v > 0).then(|| n_v as f64 / m_v as f64),
        mean_delta_p_kw: mean(&deltas),
        max_delta_p_kw: deltas.iter().copied().reduce(f64::max),
        frac_delta_p_positive: (!deltas.is_empty())
            .then(|| deltas.iter().filter(|&&d| d > 0.0).count() as f64 / deltas.len() as f64),
        mean_base_loss_kw: mean(&base),
        mean_reduction_pct: mean(&pct),
        ctrl_violation_cases: evaluated.iter().filter(|c| c.viol_ctrl.is_some_and(|v| v > 0.0)).count(),
        control_failures: evaluated.iter().filter(|c| c.p_loss_ctrl_kw.is_none()).count(),
        mean_latency_ms: mean(&latencies),
        reference: published_reference(feeder),
    }
}

/// Per-case outcome of running the pool on a sequence of fresh scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub report: EvalReport,
    pub cases: Vec<CaseResult>,
    pub timings: Vec<CaseTiming>,
    /// Greedy index vector per case (empty for skipped cases).
    pub actions: Vec<Vec<usize>>,
}

fn diverged(e: &EnvError) -> bool {
    matches!(e, EnvError::PowerFlow { .. } | EnvError::NotConverged { .. })
}

/// Runs `n_test` fresh scenarios drawn from `seed`.
///
/// As in training, the agents observe the voltages produced by the settings
/// currently in place (the previous case's control, neutral at the start)
/// under the new case's loads.
pub fn evaluate<T: Scalar>(
    network: &FeederNetwork<T>,
    pool: &AgentPool<T>,
    env_config: &EnvConfig<T>,
    n_test: usize,
    seed: u64,
) -> Result<Evaluated, ExperimentError> {
    pool.check_compatible(network)?;
    env_config.validate()?;
    let solver = Solver::new(network)?;
    let descriptor = ActionSpaceDescriptor::for_network(network);
    let baseline = baseline_settings(network);
    let baseline_idx = descriptor.encode(&baseline)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut carried = baseline_idx.clone();
    let (mut cases, mut timings, mut actions) = (Vec::new(), Vec::new(), Vec::new());
    let run = |scenario: &Scenario<T>, idx: &[usize]| -> Result<Option<Evaluation<T>>, ExperimentError> {
        let action = descriptor.decode_for(network, idx)?;
        match apply(&solver, scenario, &action, idx, &env_config.solver, &env_config.reward) {
            Ok(e) => Ok(Some(e)),
            Err(e) if diverged(&e) => Ok(None),
            Err(e) => Err(e.into()),
        }
    };
    for case_id in 0..n_test {
        let scenario = sample_scenario(network, &env_config.bounds, rng.next_u64());
        let Some(base) = run(&scenario, &baseline_idx)? else {
            cases.push(CaseResult {
                case_id,
                p_loss_base_kw: None,
                p_loss_ctrl_kw: None,
                delta_p_kw: None,
                viol_base: None,
                viol_ctrl: None,
            });
            actions.push(Vec::new());
            continue;
        };
        let observed: EnvState<T> = match run(&scenario, &carried)? {
            Some(e) => e.state,
            None => base.state.clone(),
        };
        let start = Instant::now();
        let idx = pool.act_greedy(&observed)?;
        let ctrl = run(&scenario, &idx)?;
        let latency_ms = start.elapsed().as_secs_f64() * 1e3;
        let (base_kw, base_v) = (base.loss_kw.as_f64(), base.violation.as_f64());
        let (ctrl_kw, ctrl_v) = match &ctrl {
            Some(c) => (Some(c.loss_kw.as_f64()), Some(c.violation.as_f64())),
            None => (None, None),
        };
        cases.push(CaseResult {
            case_id,
            p_loss_base_kw: Some(base_kw),
            p_loss_ctrl_kw: ctrl_kw,
            delta_p_kw: ctrl_kw.map(|c| base_kw - c),
            viol_base: Some(base_v),
            viol_ctrl: ctrl_v,
        });
        timings.push(CaseTiming { case_id, latency_ms });
        if ctrl.is_some() {
            carried = idx.clone();
        }
        actions.push(idx);
    }
    let report = aggregate(&network.name, &cases, &timings);
    Ok(Evaluated {
        report,
        cases,
        timings,
        actions,
    })
}

/// Baseline-only statistics over `n_test` fresh scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub feeder: String,
    pub n_test: usize,
    pub diverged: usize,
    pub violating_cases: usize,
    pub mean_loss_kw: Option<f64>,
    pub min_voltage_pu: Option<f64>,
    pub max_voltage_pu: Option<f64>,
}

pub fn baseline_stats<T: Scalar>(
    network: &FeederNetwork<T>,
    env_config: &EnvConfig<T>,
    n_test: usize,
    seed: u64,
) -> Result<BaselineReport, ExperimentError> {
    env_config.validate()?;
    let solver = Solver::new(network)?;
    let action = baseline_settings(network);
    let idx = ActionSpaceDescriptor::for_network(network).encode(&action)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut losses, mut diverged_n, mut violating) = (Vec::new(), 0, 0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..n_test {
        let scenario = sample_scenario(network, &env_config.bounds, rng.next_u64());
        match apply(&solver, &scenario, &action, &idx, &env_config.solver, &env_config.reward) {
            Ok(e) => {
                losses.push(e.loss_kw.as_f64());
                if e.violation > T::zero() {
                    violating += 1;
                }
                for v in e.state.0.iter().map(|v| v.as_f64()).filter(|&v| v > 0.0) {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            Err(e) if diverged(&e) => diverged_n += 1,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(BaselineReport {
        feeder: network.name.clone(),
        n_test,
        diverged: diverged_n,
        violating_cases: violating,
        mean_loss_kw: mean(&losses),
        min_voltage_pu: lo.is_finite().then_some(lo),
        max_voltage_pu: hi.is_finite().then_some(hi),
    })
}

pub fn write_cases_csv<W: Write>(out: W, cases: &[CaseResult]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for c in cases {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cases_csv<R: Read>(input: R) -> Result<Vec<CaseResult>, ExperimentError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<CaseResult>, _>>()?)
}

pub fn write_timing_csv<W: Write>(out: W, timings: &[CaseTiming]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for t in timings {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct LogRow {
    episode: usize,
    reward: f64,
    loss_kw: f64,
    violation: f64,
    epsilon: f64,
}

pub fn write_training_log<T: Scalar, W: Write>(out: W, log: &[TrainingRecord<T>]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in log {
        w.serialize(LogRow {
            episode: r.episode,
            reward: r.reward.as_f64(),
            loss_kw: r.loss_kw.as_f64(),
            violation: r.violation.as_f64(),
            epsilon: r.epsilon.as_f64(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Mean reward and violation rate over the first and last `window` episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningTrend {
    pub leading_mean_reward: f64,
    pub trailing_mean_reward: f64,
    pub leading_violation_rate: f64,
    pub trailing_violation_rate: f64,
}

pub fn learning_trend<T: Scalar>(log: &[TrainingRecord<T>], window: usize) -> Option<LearningTrend> {
    if window == 0 || log.len() < window {
        return None;
    }
    let stats = |rs: &[TrainingRecord<T>]| {
        let n = rs.len() as f64;
        let r = rs.iter().map(|r| r.reward.as_f64()).sum::<f64>() / n;
        let v = rs.iter().filter(|r| r.violation > T::zero()).count() as f64 / n;
        (r, v)
    };
    let (lr, lv) = stats(&log[..window]);
    let (tr, tv) = stats(&log[log.len() - window..]);
    Some(LearningTrend {
        leading_mean_reward: lr,
        trailing_mean_reward: tr,
        leading_violation_rate: lv,
        trailing_violation_rate: tv,
    })
}

//! Forward-backward sweep power flow for unbalanced radial feeders.
//!
//! Each iteration computes bus current injections from the present voltages,
//! aggregates branch currents from the leaves to the root, then updates
//! voltages from the root to the leaves. Iteration stops when no bus voltage
//! moves by more than the tolerance (infinity norm). Regulators sit at the
//! sending end of their branch: the line sees `A_r·U_from`, and the upstream
//! bus supplies `A_r·I_line`, which conserves power through the ideal ratio.

use num_complex::Complex;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::{capacitor_q, inverter_q_max, regulator_matrices, DeviceError, JointAction};
use crate::network::{BranchElement, FeederNetwork, ZipLoad};
use crate::phase::{Phase, PhaseMatrix, PhaseVec};
use crate::Scalar;

/// Voltage magnitude below which an iterate is treated as collapsed.
pub const COLLAPSE_PU: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum PowerFlowError {
    #[error("network must be in per-unit form")]
    NotPerUnit,
    #[error("solver diverged at iteration {iteration} (bus {bus}, phase {phase})")]
    Diverged {
        iteration: usize,
        bus: String,
        phase: Phase,
    },
    #[error("zero voltage on loaded bus {bus}, phase {phase}")]
    ZeroVoltage { bus: String, phase: Phase },
    #[error("singular series impedance on branch {0}")]
    SingularImpedance(usize),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("operating point does not match the network")]
    OperatingPointMismatch,
    #[error(transparent)]
    Device(#[from] DeviceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    pub tolerance: T,
    pub max_iterations: usize,
    /// Source magnitude per phase; `None` uses the network's `source_pu`.
    pub source_voltage: Option<T>,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            tolerance: T::lit(1e-6),
            max_iterations: 100,
            source_voltage: None,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    fn validate(&self) -> Result<(), PowerFlowError> {
        if !(self.tolerance > T::zero()) {
            return Err(PowerFlowError::InvalidConfig("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(PowerFlowError::InvalidConfig("max_iterations must be at least 1"));
        }
        if let Some(v) = self.source_voltage {
            if !(v > T::zero()) {
                return Err(PowerFlowError::InvalidConfig("source voltage must be positive"));
            }
        }
        Ok(())
    }
}

/// Load and generation condition applied on top of the nominal network.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint<T> {
    /// Multiplier per network load.
    pub load_scale: Vec<T>,
    /// Active output per DG unit entry (per unit), same shape as the units.
    pub dg_p: Vec<Vec<T>>,
    /// Optional lower power-factor bound for inverter reactive dispatch.
    pub inverter_min_pf: Option<T>,
}

impl<T: Scalar> OperatingPoint<T> {
    pub fn nominal(network: &FeederNetwork<T>) -> Self {
        OperatingPoint {
            load_scale: vec![T::one(); network.loads.len()],
            dg_p: network
                .dg_units
                .iter()
                .map(|u| u.entries.iter().map(|e| e.p_out).collect())
                .collect(),
            inverter_min_pf: None,
        }
    }

    fn check(&self, network: &FeederNetwork<T>) -> Result<(), PowerFlowError> {
        let shape_ok = self.load_scale.len() == network.loads.len()
            && self.dg_p.len() == network.dg_units.len()
            && self
                .dg_p
                .iter()
                .zip(&network.dg_units)
                .all(|(p, u)| p.len() == u.entries.len());
        if shape_ok {
            Ok(())
        } else {
            Err(PowerFlowError::OperatingPointMismatch)
        }
    }
}

/// Generalized branch constants: U_m = a·U_n − b·I_n, I_n = c·U_m + d·I_m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchConstants<T> {
    pub a: PhaseMatrix<T>,
    pub b: PhaseMatrix<T>,
    pub c: PhaseMatrix<T>,
    pub d: PhaseMatrix<T>,
}

impl<T: Scalar> BranchConstants<T> {
    pub fn for_branch(branch: &BranchElement<T>) -> Self {
        let mask = branch.phases;
        let z = branch.z_series().masked(mask);
        let y = branch.y_shunt().masked(mask);
        let eye = PhaseMatrix::identity(mask);
        let half_zy = (z * y).scale(T::lit(0.5));
        let a = eye + half_zy;
        BranchConstants {
            a,
            b: z,
            c: y + (y * z * y).scale(T::lit(0.25)),
            d: a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchCurrent<T> {
    /// Current drawn from the upstream bus (regulator primary side).
    pub upstream: PhaseVec<T>,
    /// Sending-end current of the line section.
    pub sending: PhaseVec<T>,
    pub receiving: PhaseVec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution<T> {
    pub voltages: Vec<PhaseVec<T>>,
    pub branch_currents: Vec<BranchCurrent<T>>,
    /// Total series loss, per unit.
    pub total_loss: T,
    pub total_loss_kw: T,
    /// Complex power delivered by the source, per unit.
    pub source_power: Complex<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Infinity norm of the voltage update, one entry per iteration.
    pub residuals: Vec<T>,
}

impl<T: Scalar> PowerFlowSolution<T> {
    /// |U| per bus and phase in bus order, absent phases 0.
    pub fn magnitudes(&self) -> Vec<[T; 3]> {
        self.voltages.iter().map(|v| v.0.map(|z| z.norm())).collect()
    }
}

/// ZIP load power at voltage magnitude `v` (per unit, U_0 = 1).
pub fn zip_power<T: Scalar>(load: &ZipLoad<T>, voltage_mag: T) -> Complex<T> {
    let poly = |k: &[T; 3]| k[0] * voltage_mag * voltage_mag + k[1] * voltage_mag + k[2];
    Complex::new(load.p0 * poly(&load.kp), load.q0 * poly(&load.kq))
}

/// Net complex demand per bus and phase (consumption positive): ZIP loads
/// minus DG output minus capacitor reactive support.
pub fn bus_demand<T: Scalar>(
    network: &FeederNetwork<T>,
    voltages: &[PhaseVec<T>],
    action: &JointAction,
    op: &OperatingPoint<T>,
) -> Result<Vec<PhaseVec<T>>, PowerFlowError> {
    if !action.matches(network) {
        return Err(DeviceError::ShapeMismatch.into());
    }
    op.check(network)?;
    let mut demand = vec![PhaseVec::zero(); network.buses.len()];
    for (load, &scale) in network.loads.iter().zip(&op.load_scale) {
        let v = voltages[load.bus][load.phase].norm();
        demand[load.bus][load.phase] += zip_power(load, v) * scale;
    }
    for (unit, (p_out, steps)) in network
        .dg_units
        .iter()
        .zip(op.dg_p.iter().zip(&action.inverters))
    {
        for (e, &p) in unit.entries.iter().zip(p_out) {
            let q = if unit.controllable {
                let ratio: T = steps[e.phase.index()].ratio();
                ratio * inverter_q_max(e.s_rated, p, op.inverter_min_pf)?
            } else {
                T::zero()
            };
            demand[unit.bus][e.phase] -= Complex::new(p, q);
        }
    }
    for (bank, status) in network.capacitors.iter().zip(&action.capacitors) {
        for e in &bank.entries {
            let v = voltages[bank.bus][e.phase].norm();
            let q = capacitor_q(status[e.phase.index()], v, e.rating);
            demand[bank.bus][e.phase] -= Complex::new(T::zero(), q);
        }
    }
    Ok(demand)
}

/// I_k = conj(S_k / U_k) per bus and phase.
pub fn injection_currents<T: Scalar>(
    network: &FeederNetwork<T>,
    voltages: &[PhaseVec<T>],
    action: &JointAction,
    op: &OperatingPoint<T>,
) -> Result<Vec<PhaseVec<T>>, PowerFlowError> {
    let demand = bus_demand(network, voltages, action, op)?;
    let mut out = vec![PhaseVec::zero(); network.buses.len()];
    for (k, (s, u)) in demand.iter().zip(voltages).enumerate() {
        for p in network.buses[k].phases.iter() {
            if s[p].is_zero() {
                continue;
            }
            if u[p].is_zero() {
                return Err(PowerFlowError::ZeroVoltage {
                    bus: network.buses[k].id.clone(),
                    phase: p,
                });
            }
            out[k][p] = (s[p] / u[p]).conj();
        }
    }
    Ok(out)
}

fn regulator_for<T: Scalar>(
    network: &FeederNetwork<T>,
    action: &JointAction,
    branch: usize,
) -> Option<(PhaseMatrix<T>, PhaseMatrix<T>)> {
    network.regulator_on(branch).map(|r| {
        let bank = &network.regulators[r];
        regulator_matrices(&action.taps[r], bank.phases, network.branches[branch].phases)
    })
}

/// Leaf-to-root current aggregation.
pub fn backward_sweep<T: Scalar>(
    network: &FeederNetwork<T>,
    constants: &[BranchConstants<T>],
    voltages: &[PhaseVec<T>],
    injections: &[PhaseVec<T>],
    action: &JointAction,
) -> Vec<BranchCurrent<T>> {
    let zero = BranchCurrent {
        upstream: PhaseVec::zero(),
        sending: PhaseVec::zero(),
        receiving: PhaseVec::zero(),
    };
    let mut currents = vec![zero; network.branches.len()];
    for k in network.backward_order() {
        let br = &network.branches[k];
        let mut receiving = injections[br.to];
        for &child in network.downstream_branches(br.to) {
            receiving = receiving + currents[child].upstream;
        }
        let receiving = receiving.masked(br.phases);
        let cst = &constants[k];
        let sending = cst.c.mul_vec(&voltages[br.to]) + cst.d.mul_vec(&receiving);
        let upstream = match regulator_for(network, action, k) {
            Some((a_r, _)) => a_r.mul_vec(&sending),
            None => sending,
        };
        currents[k] = BranchCurrent {
            upstream,
            sending,
            receiving,
        };
    }
    currents
}

/// Root-to-leaf voltage update.
pub fn forward_sweep<T: Scalar>(
    network: &FeederNetwork<T>,
    constants: &[BranchConstants<T>],
    source: PhaseVec<T>,
    currents: &[BranchCurrent<T>],
    action: &JointAction,
) -> Vec<PhaseVec<T>> {
    let mut voltages = vec![PhaseVec::zero(); network.buses.len()];
    voltages[network.root] = source.masked(network.buses[network.root].phases);
    for &k in network.forward_order() {
        let br = &network.branches[k];
        let u_from = voltages[br.from].masked(br.phases);
        let u_line = match regulator_for(network, action, k) {
            Some((a_r, _)) => a_r.mul_vec(&u_from),
            None => u_from,
        };
        let cst = &constants[k];
        voltages[br.to] = cst.a.mul_vec(&u_line) - cst.b.mul_vec(&currents[k].sending);
    }
    voltages
}

/// Precomputed per-branch data for repeated solves on one network.
#[derive(Debug, Clone)]
pub struct Solver<'a, T> {
    network: &'a FeederNetwork<T>,
    constants: Vec<BranchConstants<T>>,
    z_inverse: Vec<Option<PhaseMatrix<T>>>,
}

impl<'a, T: Scalar> Solver<'a, T> {
    pub fn new(network: &'a FeederNetwork<T>) -> Result<Self, PowerFlowError> {
        if !network.per_unit {
            return Err(PowerFlowError::NotPerUnit);
        }
        let constants = network.branches.iter().map(BranchConstants::for_branch).collect();
        let z_inverse = network
            .branches
            .iter()
            .enumerate()
            .map(|(k, br)| {
                if br.kind.has_impedance() {
                    br.z_series()
                        .inverse_on(br.phases)
                        .map(Some)
                        .ok_or(PowerFlowError::SingularImpedance(k))
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Solver {
            network,
            constants,
            z_inverse,
        })
    }

    pub fn network(&self) -> &'a FeederNetwork<T> {
        self.network
    }

    pub fn constants(&self) -> &[BranchConstants<T>] {
        &self.constants
    }

    pub fn solve(
        &self,
        action: &JointAction,
        op: &OperatingPoint<T>,
        config: &SolverConfig<T>,
    ) -> Result<PowerFlowSolution<T>, PowerFlowError> {
        config.validate()?;
        let net = self.network;
        if !action.matches(net) {
            return Err(DeviceError::ShapeMismatch.into());
        }
        op.check(net)?;
        let mag = config.source_voltage.unwrap_or(net.source_pu);
        let source = PhaseVec::balanced(mag, net.buses[net.root].phases);
        let nominal = T::one();
        let mut voltages: Vec<PhaseVec<T>> = net
            .buses
            .iter()
            .enumerate()
            .map(|(k, b)| {
                if k == net.root {
                    source
                } else {
                    PhaseVec::balanced(nominal, b.phases)
                }
            })
            .collect();
        let collapse = T::lit(COLLAPSE_PU);
        let mut residuals = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        while iterations < config.max_iterations {
            iterations += 1;
            let inj = injection_currents(net, &voltages, action, op)?;
            let currents = backward_sweep(net, &self.constants, &voltages, &inj, action);
            let updated = forward_sweep(net, &self.constants, source, &currents, action);
            let mut residual = T::zero();
            for (k, (new, old)) in updated.iter().zip(&voltages).enumerate() {
                for p in net.buses[k].phases.iter() {
                    let m = new[p].norm();
                    if !m.is_finite() || m < collapse {
                        return Err(PowerFlowError::Diverged {
                            iteration: iterations,
                            bus: net.buses[k].id.clone(),
                            phase: p,
                        });
                    }
                }
                residual = residual.max((*new - *old).norm_inf());
            }
            voltages = updated;
            residuals.push(residual);
            if residual < config.tolerance {
                converged = true;
                break;
            }
        }
        // Currents consistent with the final voltages.
        let inj = injection_currents(net, &voltages, action, op)?;
        let branch_currents = backward_sweep(net, &self.constants, &voltages, &inj, action);
        let source_power = net
            .downstream_branches(net.root)
            .iter()
            .fold(Complex::zero(), |acc, &k| {
                acc + voltages[net.root].dot_conj(&branch_currents[k].upstream)
            });
        let total_loss = self.series_loss(&voltages, action);
        Ok(PowerFlowSolution {
            total_loss_kw: total_loss * net.power_base_kw(),
            total_loss,
            voltages,
            branch_currents,
            source_power,
            iterations,
            converged,
            residuals,
        })
    }

    /// Σ over impedance branches of Re(ΔUᵀ·conj(Z⁻¹ΔU)), where ΔU is taken
    /// from the regulated sending end to the receiving end.
    pub fn series_loss(&self, voltages: &[PhaseVec<T>], action: &JointAction) -> T {
        let net = self.network;
        let mut loss = T::zero();
        for (k, br) in net.branches.iter().enumerate() {
            let Some(z_inv) = &self.z_inverse[k] else {
                continue;
            };
            let u_from = voltages[br.from].masked(br.phases);
            let u_line = match regulator_for(net, action, k) {
                Some((a_r, _)) => a_r.mul_vec(&u_from),
                None => u_from,
            };
            let drop = u_line - voltages[br.to].masked(br.phases);
            let current = z_inv.mul_vec(&drop);
            loss += drop.dot_conj(&current).re;
        }
        loss
    }
}

/// One power flow at the network's nominal operating point.
pub fn solve<T: Scalar>(
    network: &FeederNetwork<T>,
    action: &JointAction,
    config: &SolverConfig<T>,
) -> Result<PowerFlowSolution<T>, PowerFlowError> {
    Solver::new(network)?.solve(action, &OperatingPoint::nominal(network), config)
}

/// Total series loss (kW) recomputed from a solution's voltages.
pub fn total_loss<T: Scalar>(
    network: &FeederNetwork<T>,
    solution: &PowerFlowSolution<T>,
    action: &JointAction,
) -> Result<T, PowerFlowError> {
    let solver = Solver::new(network)?;
    Ok(solver.series_loss(&solution.voltages, action) * network.power_base_kw())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::Tap;
    use crate::network::Connection;
    use crate::phase::PhaseMask;

    fn load(p: f64, q: f64, kp: [f64; 3]) -> ZipLoad<f64> {
        ZipLoad {
            bus: 0,
            phase: Phase::A,
            connection: Connection::Wye,
            p0: p,
            q0: q,
            kp,
            kq: kp,
        }
    }

    #[test]
    fn zip_examples() {
        let l = load(2.0, 1.0, [0.0, 0.0, 1.0]);
        assert_eq!(zip_power(&l, 1.0), Complex::new(2.0, 1.0));
        let l = load(1.0, 1.0, [1.0, 0.0, 0.0]);
        assert!((zip_power(&l, 0.9).re - 0.81).abs() < 1e-15);
        // 0.4·1.1025 + 0.3·1.05 + 0.3 = 1.056
        let l = load(1.0, 1.0, [0.4, 0.3, 0.3]);
        assert!((zip_power(&l, 1.05).re - 1.056).abs() < 1e-14);
    }

    fn chain(n_buses: usize, z: (f64, f64), loads: &[(usize, f64, f64)]) -> FeederNetwork<f64> {
        // Single-phase chain on phase A, impedances already per unit.
        let buses: Vec<_> = (0..n_buses)
            .map(|i| serde_json::json!({"id": format!("b{i}"), "phases": "A", "kv_ll": 1.0}))
            .collect();
        let zb = (1.0_f64 / 3.0_f64.sqrt()).powi(2);
        let branches: Vec<_> = (1..n_buses)
            .map(|i| serde_json::json!({"from": format!("b{}", i - 1), "to": format!("b{i}"), "kind": "line",
                "phases": "A", "z_ohms_per_unit_length": [[[z.0 * zb, z.1 * zb]]],
                "y_shunt_siemens": [[[0.0, 0.0]]], "length": 1.0}))
            .collect();
        let loads: Vec<_> = loads
            .iter()
            .map(|&(b, p, q)| serde_json::json!({"bus": format!("b{b}"), "phase": "A", "p_kw": p * 1000.0, "q_kvar": q * 1000.0}))
            .collect();
        let v = serde_json::json!({"base": {"mva": 1.0, "kv_ll": 1.0}, "root": "b0",
            "buses": buses, "branches": branches, "loads": loads});
        FeederNetwork::from_json_str(&v.to_string()).unwrap().to_per_unit().unwrap()
    }

    #[test]
    fn injection_examples() {
        let net = chain(2, (0.01, 0.02), &[]);
        let action = JointAction::neutral(&net);
        let op = OperatingPoint::nominal(&net);
        let v = vec![PhaseVec::balanced(1.0, PhaseMask::single(Phase::A)); 2];
        let inj = injection_currents(&net, &v, &action, &op).unwrap();
        assert!(inj.iter().all(|i| i.norm_inf() == 0.0));

        let net = chain(2, (0.01, 0.02), &[(1, 1.0, 0.0)]);
        let inj = injection_currents(&net, &v, &action, &OperatingPoint::nominal(&net)).unwrap();
        assert_eq!(inj[1][Phase::A], Complex::new(1.0, 0.0));
    }

    #[test]
    fn capacitor_injection_sign() {
        let mut net = chain(2, (0.01, 0.02), &[]);
        net.capacitors.push(crate::devices::CapacitorBank {
            bus: 1,
            entries: vec![crate::devices::CapacitorPhase { phase: Phase::A, rating: 0.5 }],
        });
        let mut action = JointAction::neutral(&net);
        action.capacitors[0][0] = true;
        let v = vec![PhaseVec::balanced(1.0, PhaseMask::single(Phase::A)); 2];
        let op = OperatingPoint::nominal(&net);
        let s = bus_demand(&net, &v, &action, &op).unwrap();
        assert!((s[1][Phase::A] - Complex::new(0.0, -0.5)).norm() < 1e-15);
        let inj = injection_currents(&net, &v, &action, &op).unwrap();
        assert!((inj[1][Phase::A] - Complex::new(0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn sweeps_on_small_chains() {
        let net = chain(3, (0.01, 0.02), &[(1, 1.0, 0.0), (2, 1.0, 0.0)]);
        let action = JointAction::neutral(&net);
        let solver = Solver::new(&net).unwrap();
        let mask = PhaseMask::single(Phase::A);
        let v = vec![PhaseVec::balanced(1.0, mask); 3];
        let zero_inj = vec![PhaseVec::zero(); 3];
        let cur = backward_sweep(&net, solver.constants(), &v, &zero_inj, &action);
        assert!(cur.iter().all(|c| c.upstream.norm_inf() == 0.0));
        let fwd = forward_sweep(&net, solver.constants(), v[0], &cur, &action);
        assert!(fwd.iter().all(|u| (*u - v[0]).norm_inf() == 0.0));

        let inj = injection_currents(&net, &v, &action, &OperatingPoint::nominal(&net)).unwrap();
        let cur = backward_sweep(&net, solver.constants(), &v, &inj, &action);
        let root_branch = net.upstream_branch(1).unwrap();
        let leaf_branch = net.upstream_branch(2).unwrap();
        assert_eq!(cur[leaf_branch].sending, inj[2]);
        assert!((cur[root_branch].sending[Phase::A] - Complex::new(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_load_converges_flat() {
        let net = chain(4, (0.01, 0.02), &[]);
        let sol = solve(&net, &JointAction::neutral(&net), &SolverConfig::default()).unwrap();
        assert!(sol.converged && sol.iterations <= 2);
        assert!(sol.voltages.iter().all(|u| (u[Phase::A] - Complex::new(1.0, 0.0)).norm() < 1e-15));
        assert_eq!(sol.total_loss, 0.0);
    }

    #[test]
    fn regulator_scales_open_branch() {
        let mut net = chain(3, (0.01, 0.02), &[]);
        net = {
            let mut f = net.to_file();
            f.regulators.push(crate::network::schema::RegulatorFile {
                from: "b0".into(),
                to: "b1".into(),
                phases: PhaseMask::single(Phase::A),
            });
            FeederNetwork::from_file(&f).unwrap()
        };
        let mut action = JointAction::neutral(&net);
        action.taps[0] = [Tap::MAX; 3];
        let sol = solve(&net, &action, &SolverConfig::default()).unwrap();
        assert!((sol.voltages[1][Phase::A].norm() - 1.1).abs() < 1e-15);
        assert!((sol.voltages[2][Phase::A].norm() - 1.1).abs() < 1e-15);
    }

    #[test]
    fn single_branch_loss_is_i_squared_r() {
        let net = chain(2, (0.01, 0.0), &[]);
        let solver = Solver::new(&net).unwrap();
        // Drop of 0.01 p.u. across R = 0.01 → I = 1.0, loss = 0.01.
        let mut v = vec![PhaseVec::balanced(1.0, PhaseMask::single(Phase::A)); 2];
        v[1][Phase::A] = Complex::new(0.99, 0.0);
        let loss = solver.series_loss(&v, &JointAction::neutral(&net));
        assert!((loss - 0.01).abs() < 1e-14);
    }

    #[test]
    fn physical_network_is_rejected() {
        let net = FeederNetwork::<f64>::from_json_str(&chain(2, (0.01, 0.0), &[]).to_file().pipe_physical()).unwrap();
        assert_eq!(Solver::new(&net).unwrap_err(), PowerFlowError::NotPerUnit);
    }

    #[test]
    fn bad_config_is_rejected() {
        let net = chain(2, (0.01, 0.02), &[]);
        let cfg = SolverConfig { tolerance: 0.0, ..SolverConfig::default() };
        assert!(matches!(
            solve(&net, &JointAction::neutral(&net), &cfg),
            Err(PowerFlowError::InvalidConfig(_))
        ));
    }

    #[test]
    fn heavy_load_reports_divergence() {
        let net = chain(2, (0.1, 0.2), &[(1, 50.0, 20.0)]);
        let err = solve(&net, &JointAction::neutral(&net), &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, PowerFlowError::Diverged { .. }), "{err}");
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let net = chain(3, (0.02, 0.04), &[(2, 3.0, 1.0)]);
        let cfg = SolverConfig { max_iterations: 2, ..SolverConfig::default() };
        let sol = solve(&net, &JointAction::neutral(&net), &cfg).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 2);
    }

    trait PipePhysical {
        fn pipe_physical(self) -> String;
    }

    impl PipePhysical for crate::network::schema::FeederFile {
        fn pipe_physical(mut self) -> String {
            self.per_unit = false;
            serde_json::to_string(&self).unwrap()
        }
    }
}

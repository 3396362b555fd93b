//! Controllable devices and the discrete action encoding.
//!
//! Every device phase is one control slot: a regulator phase has 33 tap
//! positions, a capacitor phase is on/off, an inverter phase picks a
//! reactive-power ratio on the grid −1.0, −0.9, …, 1.0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::FeederNetwork;
use crate::phase::{Phase, PhaseMask, PhaseMatrix};
use crate::Scalar;

pub const TAP_POSITIONS: usize = 33;
pub const TAP_STEP: f64 = 0.00625;
pub const INVERTER_STEPS: usize = 21;

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("tap position {0} outside 1..=33")]
    TapOutOfRange(i64),
    #[error("inverter step {0} outside -10..=10")]
    InverterStepOutOfRange(i64),
    #[error("active power {p} exceeds inverter rating {s}")]
    InverterOverRated { p: f64, s: f64 },
    #[error("expected {expected} action indices, got {got}")]
    SlotCount { expected: usize, got: usize },
    #[error("index {index} out of range for slot {slot} (cardinality {cardinality})")]
    IndexOutOfRange {
        slot: usize,
        index: usize,
        cardinality: usize,
    },
    #[error("joint action does not match the network's device banks")]
    ShapeMismatch,
}

/// Regulator tap position, 1..=33. Position 17 is the unit ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Tap(u8);

impl Tap {
    pub const NEUTRAL: Tap = Tap(17);
    pub const MIN: Tap = Tap(1);
    pub const MAX: Tap = Tap(33);

    pub fn new(position: i64) -> Result<Self, DeviceError> {
        if (1..=TAP_POSITIONS as i64).contains(&position) {
            Ok(Tap(position as u8))
        } else {
            Err(DeviceError::TapOutOfRange(position))
        }
    }

    pub fn position(self) -> u8 {
        self.0
    }

    /// 0.9 + (position − 1)·0.00625, evaluated around the neutral tap so
    /// that position 17 is exactly 1.
    pub fn ratio<T: Scalar>(self) -> T {
        T::one() + T::lit((self.0 as f64 - 17.0) * TAP_STEP)
    }
}

impl TryFrom<u8> for Tap {
    type Error = DeviceError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Tap::new(v as i64)
    }
}

impl From<Tap> for u8 {
    fn from(t: Tap) -> u8 {
        t.0
    }
}

/// Inverter reactive-power ratio in tenths, −10..=10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub struct InverterStep(i8);

impl InverterStep {
    pub const ZERO: InverterStep = InverterStep(0);

    pub fn new(tenths: i64) -> Result<Self, DeviceError> {
        if (-10..=10).contains(&tenths) {
            Ok(InverterStep(tenths as i8))
        } else {
            Err(DeviceError::InverterStepOutOfRange(tenths))
        }
    }

    pub fn tenths(self) -> i8 {
        self.0
    }

    pub fn ratio<T: Scalar>(self) -> T {
        T::lit(self.0 as f64 / 10.0)
    }
}

impl TryFrom<i8> for InverterStep {
    type Error = DeviceError;
    fn try_from(v: i8) -> Result<Self, Self::Error> {
        InverterStep::new(v as i64)
    }
}

impl From<InverterStep> for i8 {
    fn from(s: InverterStep) -> i8 {
        s.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacitorPhase<T> {
    pub phase: Phase,
    /// Nameplate kvar at nominal voltage; in per-unit form this is the
    /// susceptance B (reactive p.u. at |U| = 1).
    pub rating: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacitorBank<T> {
    pub bus: usize,
    pub entries: Vec<CapacitorPhase<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulatorBank {
    pub branch: usize,
    pub phases: PhaseMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgPhase<T> {
    pub phase: Phase,
    pub s_rated: T,
    pub p_out: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgInverter<T> {
    pub bus: usize,
    pub controllable: bool,
    pub entries: Vec<DgPhase<T>>,
}

/// Reactive power of a switched capacitor phase: a_c·|U|²·B.
pub fn capacitor_q<T: Scalar>(on: bool, voltage_mag: T, susceptance: T) -> T {
    if on {
        voltage_mag * voltage_mag * susceptance
    } else {
        T::zero()
    }
}

/// Per-phase ratios of a regulator bank on a branch with phases `branch`.
/// Branch phases the bank does not regulate pass through at ratio 1.
pub fn regulator_ratios<T: Scalar>(taps: &[Tap; 3], regulated: PhaseMask, branch: PhaseMask) -> [T; 3] {
    std::array::from_fn(|i| {
        let p = Phase::ALL[i];
        match (branch.contains(p), regulated.contains(p)) {
            (true, true) => taps[i].ratio(),
            (true, false) => T::one(),
            _ => T::zero(),
        }
    })
}

/// (A_r, D_r) with U_out = A_r·U_in and D_r = A_r⁻¹ on the branch phases.
pub fn regulator_matrices<T: Scalar>(
    taps: &[Tap; 3],
    regulated: PhaseMask,
    branch: PhaseMask,
) -> (PhaseMatrix<T>, PhaseMatrix<T>) {
    let r = regulator_ratios::<T>(taps, regulated, branch);
    let inv = r.map(|x| if x.is_zero() { x } else { x.recip() });
    (PhaseMatrix::diagonal(r), PhaseMatrix::diagonal(inv))
}

/// Upper reactive limit √(S² − P²), optionally capped by a minimum power factor.
pub fn inverter_q_max<T: Scalar>(s_rated: T, p_out: T, min_pf: Option<T>) -> Result<T, DeviceError> {
    if p_out.abs() > s_rated {
        return Err(DeviceError::InverterOverRated {
            p: p_out.as_f64(),
            s: s_rated.as_f64(),
        });
    }
    let q_box = (s_rated * s_rated - p_out * p_out).max(T::zero()).sqrt();
    Ok(match min_pf {
        Some(pf) if pf > T::zero() && pf < T::one() => {
            let tan = (T::one() - pf * pf).sqrt() / pf;
            q_box.min(p_out.abs() * tan)
        }
        _ => q_box,
    })
}

/// Dispatched inverter reactive power: ratio·√(S² − P²).
pub fn inverter_q<T: Scalar>(ratio: T, s_rated: T, p_out: T) -> Result<T, DeviceError> {
    Ok(ratio * inverter_q_max(s_rated, p_out, None)?)
}

/// Decoded settings for every device bank of a network.
///
/// Each vector is indexed like the network's bank list; phase slots a bank
/// does not have are ignored (and hold neutral values).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointAction {
    pub taps: Vec<[Tap; 3]>,
    pub capacitors: Vec<[bool; 3]>,
    pub inverters: Vec<[InverterStep; 3]>,
}

impl JointAction {
    /// Caps off, taps neutral, inverters at unity power factor.
    pub fn neutral<T>(network: &FeederNetwork<T>) -> Self {
        JointAction {
            taps: vec![[Tap::NEUTRAL; 3]; network.regulators.len()],
            capacitors: vec![[false; 3]; network.capacitors.len()],
            inverters: vec![[InverterStep::ZERO; 3]; network.dg_units.len()],
        }
    }

    pub fn matches<T>(&self, network: &FeederNetwork<T>) -> bool {
        self.taps.len() == network.regulators.len()
            && self.capacitors.len() == network.capacitors.len()
            && self.inverters.len() == network.dg_units.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Regulator,
    Capacitor,
    Inverter,
}

impl DeviceKind {
    pub fn cardinality(self) -> usize {
        match self {
            DeviceKind::Regulator => TAP_POSITIONS,
            DeviceKind::Capacitor => 2,
            DeviceKind::Inverter => INVERTER_STEPS,
        }
    }
}

/// One agent's control slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSlot {
    pub kind: DeviceKind,
    /// Index into the network's bank list for `kind`.
    pub device: usize,
    /// Human-readable location: `from-to` for regulators, bus id otherwise.
    pub location: String,
    pub phase: Phase,
    pub cardinality: usize,
}

/// Ordered control slots: regulators, then capacitors, then controllable
/// inverters, each bank in file order and phases in a, b, c order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSpaceDescriptor {
    pub slots: Vec<ActionSlot>,
}

impl ActionSpaceDescriptor {
    pub fn for_network<T>(network: &FeederNetwork<T>) -> Self {
        let mut slots = Vec::new();
        for (i, reg) in network.regulators.iter().enumerate() {
            let br = &network.branches[reg.branch];
            let location = format!("{}-{}", network.buses[br.from].id, network.buses[br.to].id);
            for phase in reg.phases.iter() {
                slots.push(ActionSlot {
                    kind: DeviceKind::Regulator,
                    device: i,
                    location: location.clone(),
                    phase,
                    cardinality: TAP_POSITIONS,
                });
            }
        }
        for (i, cap) in network.capacitors.iter().enumerate() {
            for e in &cap.entries {
                slots.push(ActionSlot {
                    kind: DeviceKind::Capacitor,
                    device: i,
                    location: network.buses[cap.bus].id.clone(),
                    phase: e.phase,
                    cardinality: 2,
                });
            }
        }
        for (i, dg) in network.dg_units.iter().enumerate() {
            if !dg.controllable {
                continue;
            }
            for e in &dg.entries {
                slots.push(ActionSlot {
                    kind: DeviceKind::Inverter,
                    device: i,
                    location: network.buses[dg.bus].id.clone(),
                    phase: e.phase,
                    cardinality: INVERTER_STEPS,
                });
            }
        }
        ActionSpaceDescriptor { slots }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Template action with the right bank shapes, all settings neutral.
    fn neutral_template(&self) -> JointAction {
        let count = |k: DeviceKind| {
            self.slots
                .iter()
                .filter(|s| s.kind == k)
                .map(|s| s.device + 1)
                .max()
                .unwrap_or(0)
        };
        JointAction {
            taps: vec![[Tap::NEUTRAL; 3]; count(DeviceKind::Regulator)],
            capacitors: vec![[false; 3]; count(DeviceKind::Capacitor)],
            inverters: vec![[InverterStep::ZERO; 3]; count(DeviceKind::Inverter)],
        }
    }

    /// Index vector of the neutral settings (tap 17, off, ratio 0).
    pub fn neutral_indices(&self) -> Vec<usize> {
        self.slots
            .iter()
            .map(|s| match s.kind {
                DeviceKind::Regulator => Tap::NEUTRAL.position() as usize - 1,
                DeviceKind::Capacitor => 0,
                DeviceKind::Inverter => 10,
            })
            .collect()
    }

    /// Decode against a network so that bank vectors cover every bank,
    /// including uncontrollable inverters.
    pub fn decode_for<T>(
        &self,
        network: &FeederNetwork<T>,
        indices: &[usize],
    ) -> Result<JointAction, DeviceError> {
        let mut action = JointAction::neutral(network);
        self.write_into(&mut action, indices)?;
        Ok(action)
    }

    /// Decode with bank vectors sized by the descriptor alone.
    pub fn decode(&self, indices: &[usize]) -> Result<JointAction, DeviceError> {
        let mut action = self.neutral_template();
        self.write_into(&mut action, indices)?;
        Ok(action)
    }

    fn write_into(&self, action: &mut JointAction, indices: &[usize]) -> Result<(), DeviceError> {
        if indices.len() != self.slots.len() {
            return Err(DeviceError::SlotCount {
                expected: self.slots.len(),
                got: indices.len(),
            });
        }
        for (slot_no, (slot, &index)) in self.slots.iter().zip(indices).enumerate() {
            if index >= slot.cardinality {
                return Err(DeviceError::IndexOutOfRange {
                    slot: slot_no,
                    index,
                    cardinality: slot.cardinality,
                });
            }
            let p = slot.phase.index();
            let bank = slot.device;
            match slot.kind {
                DeviceKind::Regulator => {
                    *action
                        .taps
                        .get_mut(bank)
                        .ok_or(DeviceError::ShapeMismatch)?
                        .get_mut(p)
                        .expect("phase index < 3") = Tap::new(index as i64 + 1)?;
                }
                DeviceKind::Capacitor => {
                    action.capacitors.get_mut(bank).ok_or(DeviceError::ShapeMismatch)?[p] = index == 1;
                }
                DeviceKind::Inverter => {
                    action.inverters.get_mut(bank).ok_or(DeviceError::ShapeMismatch)?[p] =
                        InverterStep::new(index as i64 - 10)?;
                }
            }
        }
        Ok(())
    }

    /// Inverse of [`decode`](Self::decode) on the slots this descriptor owns.
    pub fn encode(&self, action: &JointAction) -> Result<Vec<usize>, DeviceError> {
        self.slots
            .iter()
            .map(|slot| {
                let p = slot.phase.index();
                let bank = slot.device;
                Ok(match slot.kind {
                    DeviceKind::Regulator => {
                        action.taps.get(bank).ok_or(DeviceError::ShapeMismatch)?[p].position() as usize - 1
                    }
                    DeviceKind::Capacitor => {
                        action.capacitors.get(bank).ok_or(DeviceError::ShapeMismatch)?[p] as usize
                    }
                    DeviceKind::Inverter => {
                        (action.inverters.get(bank).ok_or(DeviceError::ShapeMismatch)?[p].tenths() + 10) as usize
                    }
                })
            })
            .collect()
    }
}

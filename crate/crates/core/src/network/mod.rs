//! Radial feeder model: buses, branches, ZIP loads and device banks.

pub mod schema;

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::devices::{
    CapacitorBank, CapacitorPhase, DgInverter, DgPhase, RegulatorBank,
};
use crate::phase::{Phase, PhaseMask, PhaseMatrix};
use crate::Scalar;
use schema::{
    BaseFile, BranchFile, BusFile, CapacitorFile, DgFile, FeederFile, LoadFile, RegulatorFile,
};

const ZIP_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("reading feeder file: {0}")]
    Io(#[from] std::io::Error),
    #[error("feeder schema: {0}")]
    Json(#[from] serde_json::Error),
    #[error("feeder schema: {0}")]
    Schema(String),
    #[error("non-radial topology: {0}")]
    NonRadial(String),
    #[error("{what} on bus {bus} uses phase(s) {phases} not present on the bus")]
    PhaseNotOnBus {
        what: &'static str,
        bus: String,
        phases: String,
    },
    #[error("ZIP coefficients of load at bus {bus} do not sum to 1")]
    ZipCoefficients { bus: String },
    #[error("per-unit bases must be positive (mva = {mva}, kv = {kv})")]
    InvalidBase { mva: f64, kv: f64 },
}

fn schema_err(msg: impl Into<String>) -> NetworkError {
    NetworkError::Schema(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Line,
    Transformer,
    Switch,
    /// Ideal regulator position with no series impedance.
    Regulator,
}

impl BranchKind {
    /// Whether the branch carries a series impedance that dissipates power.
    pub fn has_impedance(self) -> bool {
        matches!(self, BranchKind::Line | BranchKind::Transformer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connection {
    #[default]
    Wye,
    Delta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus<T> {
    pub id: String,
    pub phases: PhaseMask,
    pub nominal_kv_ll: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchElement<T> {
    pub from: usize,
    pub to: usize,
    pub kind: BranchKind,
    pub phases: PhaseMask,
    pub z_per_length: PhaseMatrix<T>,
    pub y_per_length: PhaseMatrix<T>,
    pub length: T,
}

impl<T: Scalar> BranchElement<T> {
    pub fn z_series(&self) -> PhaseMatrix<T> {
        self.z_per_length.scale(self.length)
    }

    pub fn y_shunt(&self) -> PhaseMatrix<T> {
        self.y_per_length.scale(self.length)
    }
}

/// Single-phase wye ZIP load. Delta loads are split at ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipLoad<T> {
    pub bus: usize,
    pub phase: Phase,
    pub connection: Connection,
    pub p0: T,
    pub q0: T,
    pub kp: [T; 3],
    pub kq: [T; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Base<T> {
    /// Per-phase power base, MVA.
    pub mva: T,
    pub kv_ll: T,
}

/// Validated, immutable radial feeder.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederNetwork<T> {
    pub name: String,
    pub root: usize,
    pub source_pu: T,
    pub base: Base<T>,
    pub per_unit: bool,
    pub buses: Vec<Bus<T>>,
    pub branches: Vec<BranchElement<T>>,
    pub loads: Vec<ZipLoad<T>>,
    pub capacitors: Vec<CapacitorBank<T>>,
    pub regulators: Vec<RegulatorBank>,
    pub dg_units: Vec<DgInverter<T>>,
    order: Vec<usize>,
    upstream: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    regulator_on: Vec<Option<usize>>,
}

impl<T: Scalar> FeederNetwork<T> {
    /// Branches in root-to-leaf (breadth-first) order.
    pub fn forward_order(&self) -> &[usize] {
        &self.order
    }

    /// Branches in leaf-to-root order.
    pub fn backward_order(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().rev().copied()
    }

    /// The branch feeding `bus`; `None` for the root.
    pub fn upstream_branch(&self, bus: usize) -> Option<usize> {
        self.upstream[bus]
    }

    /// Branches leaving `bus` towards the leaves.
    pub fn downstream_branches(&self, bus: usize) -> &[usize] {
        &self.children[bus]
    }

    /// Regulator bank installed on `branch`, if any.
    pub fn regulator_on(&self, branch: usize) -> Option<usize> {
        self.regulator_on[branch]
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// kW per unit of power in per-unit form.
    pub fn power_base_kw(&self) -> T {
        self.base.mva * T::lit(1000.0)
    }

    /// Per-phase impedance base at `bus`, ohms.
    pub fn impedance_base(&self, bus: usize) -> T {
        let v_phase = self.buses[bus].nominal_kv_ll / T::lit(3.0).sqrt();
        v_phase * v_phase / self.base.mva
    }

    pub fn state_dim(&self) -> usize {
        3 * self.buses.len()
    }

    /// Everything expressed in per-unit, with U_0 = 1 p.u. at every bus.
    /// Idempotent.
    pub fn to_per_unit(&self) -> Result<Self, NetworkError> {
        check_base(self.base.mva.as_f64(), self.base.kv_ll.as_f64())?;
        if self.per_unit {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        let s_base = self.power_base_kw();
        for br in &mut out.branches {
            let zb = self.impedance_base(br.to);
            br.z_per_length = br.z_per_length.scale(zb.recip());
            br.y_per_length = br.y_per_length.scale(zb);
        }
        for load in &mut out.loads {
            load.p0 /= s_base;
            load.q0 /= s_base;
        }
        for cap in &mut out.capacitors {
            for e in &mut cap.entries {
                e.rating /= s_base;
            }
        }
        for dg in &mut out.dg_units {
            for e in &mut dg.entries {
                e.s_rated /= s_base;
                e.p_out /= s_base;
            }
        }
        out.per_unit = true;
        Ok(out)
    }

    /// Feeder description file equivalent to this network.
    pub fn to_file(&self) -> FeederFile {
        let id = |i: usize| self.buses[i].id.clone();
        let entries = |m: &PhaseMatrix<T>, mask: PhaseMask| -> Vec<Vec<[f64; 2]>> {
            mask.iter()
                .map(|i| {
                    mask.iter()
                        .map(|j| {
                            let z = m.0[i.index()][j.index()];
                            [z.re.as_f64(), z.im.as_f64()]
                        })
                        .collect()
                })
                .collect()
        };
        let mut capacitors = Vec::new();
        for cap in &self.capacitors {
            for e in &cap.entries {
                capacitors.push(CapacitorFile {
                    bus: id(cap.bus),
                    phase: e.phase,
                    kvar_nominal: e.rating.as_f64(),
                });
            }
        }
        let mut dg_units = Vec::new();
        for dg in &self.dg_units {
            for e in &dg.entries {
                dg_units.push(DgFile {
                    bus: id(dg.bus),
                    phase: e.phase,
                    s_kva: e.s_rated.as_f64(),
                    p_kw: e.p_out.as_f64(),
                    controllable: dg.controllable,
                });
            }
        }
        FeederFile {
            name: self.name.clone(),
            root: Some(id(self.root)),
            source_pu: self.source_pu.as_f64(),
            per_unit: self.per_unit,
            base: BaseFile {
                mva: self.base.mva.as_f64(),
                kv_ll: self.base.kv_ll.as_f64(),
            },
            buses: self
                .buses
                .iter()
                .map(|b| BusFile {
                    id: b.id.clone(),
                    phases: b.phases,
                    kv_ll: b.nominal_kv_ll.as_f64(),
                })
                .collect(),
            branches: self
                .branches
                .iter()
                .map(|br| BranchFile {
                    from: id(br.from),
                    to: id(br.to),
                    kind: br.kind,
                    phases: br.phases,
                    z_ohms_per_unit_length: entries(&br.z_per_length, br.phases),
                    y_shunt_siemens: entries(&br.y_per_length, br.phases),
                    length: br.length.as_f64(),
                })
                .collect(),
            loads: self
                .loads
                .iter()
                .map(|l| LoadFile {
                    bus: id(l.bus),
                    to: None,
                    phase: l.phase.to_string(),
                    connection: Connection::Wye,
                    p_kw: l.p0.as_f64(),
                    q_kvar: l.q0.as_f64(),
                    kp: l.kp.map(Scalar::as_f64),
                    kq: l.kq.map(Scalar::as_f64),
                })
                .collect(),
            capacitors,
            regulators: self
                .regulators
                .iter()
                .map(|r| {
                    let br = &self.branches[r.branch];
                    RegulatorFile {
                        from: id(br.from),
                        to: id(br.to),
                        phases: r.phases,
                    }
                })
                .collect(),
            dg_units,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("feeder file serializes")
    }

    /// Stable identity hash over the full network content.
    pub fn identity_hash(&self) -> String {
        let json = serde_json::to_string(&self.to_file()).expect("feeder file serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_json_str(text: &str) -> Result<Self, NetworkError> {
        let file: FeederFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn from_file(file: &FeederFile) -> Result<Self, NetworkError> {
        build(file)
    }
}

/// Reads, validates and indexes a feeder description file.
pub fn parse_feeder<T: Scalar>(path: impl AsRef<Path>) -> Result<FeederNetwork<T>, NetworkError> {
    let text = std::fs::read_to_string(path)?;
    FeederNetwork::from_json_str(&text)
}

fn check_base(mva: f64, kv: f64) -> Result<(), NetworkError> {
    if mva > 0.0 && kv > 0.0 && mva.is_finite() && kv.is_finite() {
        Ok(())
    } else {
        Err(NetworkError::InvalidBase { mva, kv })
    }
}

fn matrix_from_entries<T: Scalar>(
    rows: &[Vec<[f64; 2]>],
    mask: PhaseMask,
    what: &str,
) -> Result<PhaseMatrix<T>, NetworkError> {
    let n = mask.len();
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(schema_err(format!(
            "{what}: expected a {n}x{n} matrix for phases {mask}"
        )));
    }
    let idx: Vec<usize> = mask.iter().map(Phase::index).collect();
    let mut m = PhaseMatrix::zero();
    for (r, row) in rows.iter().enumerate() {
        for (c, e) in row.iter().enumerate() {
            if !(e[0].is_finite() && e[1].is_finite()) {
                return Err(schema_err(format!("{what}: non-finite entry")));
            }
            m.0[idx[r]][idx[c]] = Complex::new(T::lit(e[0]), T::lit(e[1]));
        }
    }
    Ok(m)
}

fn parse_load_phases(raw: &str, conn: Connection, bus: &str) -> Result<Vec<Phase>, NetworkError> {
    let mask: PhaseMask = raw
        .parse()
        .map_err(|e: String| schema_err(format!("load at bus {bus}: {e}")))?;
    let want = match conn {
        Connection::Wye => 1,
        Connection::Delta => 2,
    };
    if mask.len() != want {
        return Err(schema_err(format!(
            "load at bus {bus}: {conn:?} load needs {want} phase letter(s), got `{raw}`"
        )));
    }
    Ok(mask.iter().collect())
}

fn build<T: Scalar>(file: &FeederFile) -> Result<FeederNetwork<T>, NetworkError> {
    check_base(file.base.mva, file.base.kv_ll)?;
    if !(file.source_pu > 0.0 && file.source_pu.is_finite()) {
        return Err(schema_err("source_pu must be positive"));
    }

    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut buses = Vec::with_capacity(file.buses.len());
    for (i, b) in file.buses.iter().enumerate() {
        if index.insert(b.id.as_str(), i).is_some() {
            return Err(schema_err(format!("duplicate bus id {}", b.id)));
        }
        if b.phases.is_empty() {
            return Err(schema_err(format!("bus {} has no phases", b.id)));
        }
        if !(b.kv_ll > 0.0) {
            return Err(schema_err(format!("bus {} needs a positive kv_ll", b.id)));
        }
        buses.push(Bus {
            id: b.id.clone(),
            phases: b.phases,
            nominal_kv_ll: T::lit(b.kv_ll),
        });
    }
    if buses.is_empty() {
        return Err(schema_err("feeder has no buses"));
    }
    let lookup = |id: &str| -> Result<usize, NetworkError> {
        index
            .get(id)
            .copied()
            .ok_or_else(|| schema_err(format!("unknown bus {id}")))
    };

    let mut branches = Vec::with_capacity(file.branches.len());
    for br in &file.branches {
        let (from, to) = (lookup(&br.from)?, lookup(&br.to)?);
        let label = format!("branch {}-{}", br.from, br.to);
        if from == to {
            return Err(NetworkError::NonRadial(format!("{label} is a self-loop")));
        }
        if br.phases.is_empty() {
            return Err(schema_err(format!("{label} has no phases")));
        }
        for end in [from, to] {
            if !br.phases.is_subset_of(buses[end].phases) {
                return Err(NetworkError::PhaseNotOnBus {
                    what: "branch",
                    bus: buses[end].id.clone(),
                    phases: br.phases.to_string(),
                });
            }
        }
        if !(br.length >= 0.0 && br.length.is_finite()) {
            return Err(schema_err(format!("{label} has an invalid length")));
        }
        let z: PhaseMatrix<T> = matrix_from_entries(&br.z_ohms_per_unit_length, br.phases, &label)?;
        let y: PhaseMatrix<T> = matrix_from_entries(&br.y_shunt_siemens, br.phases, &label)?;
        let tol = T::lit(1e-12) * (T::one() + z.0.iter().flatten().map(|c| c.norm()).fold(T::zero(), T::max));
        if z.max_abs_diff(&z.transpose()) > tol {
            return Err(schema_err(format!("{label}: series impedance is not symmetric")));
        }
        let ideal = matches!(br.kind, BranchKind::Switch | BranchKind::Regulator);
        if ideal && !(z.is_zero_on(br.phases) || br.length == 0.0) {
            return Err(schema_err(format!("{label}: {:?} branches must have zero impedance", br.kind)));
        }
        if !ideal && z.scale(T::lit(br.length)).inverse_on(br.phases).is_none() {
            return Err(schema_err(format!("{label}: singular series impedance")));
        }
        branches.push(BranchElement {
            from,
            to,
            kind: br.kind,
            phases: br.phases,
            z_per_length: z,
            y_per_length: y,
            length: T::lit(br.length),
        });
    }

    // Radial structure.
    let root = match &file.root {
        Some(r) => lookup(r)?,
        None => {
            let mut fed = vec![false; buses.len()];
            for br in &branches {
                fed[br.to] = true;
            }
            let roots: Vec<usize> = (0..buses.len()).filter(|&i| !fed[i]).collect();
            match roots.as_slice() {
                [r] => *r,
                _ => return Err(schema_err("cannot infer a unique root bus; set `root`")),
            }
        }
    };
    if branches.len() + 1 != buses.len() {
        return Err(NetworkError::NonRadial(format!(
            "{} branches for {} buses (a tree needs {})",
            branches.len(),
            buses.len(),
            buses.len() - 1
        )));
    }
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); buses.len()];
    for (k, br) in branches.iter().enumerate() {
        adjacency[br.from].push(k);
        adjacency[br.to].push(k);
    }
    let mut upstream: Vec<Option<usize>> = vec![None; buses.len()];
    let mut visited = vec![false; buses.len()];
    let mut order = Vec::with_capacity(branches.len());
    let mut queue = VecDeque::from([root]);
    visited[root] = true;
    while let Some(bus) = queue.pop_front() {
        for &k in &adjacency[bus] {
            if Some(k) == upstream[bus] {
                continue;
            }
            let br = &mut branches[k];
            let other = if br.from == bus { br.to } else { br.from };
            if visited[other] {
                return Err(NetworkError::NonRadial(format!(
                    "cycle through bus {}",
                    buses[other].id
                )));
            }
            if br.from != bus {
                // orient away from the root
                std::mem::swap(&mut br.from, &mut br.to);
            }
            visited[other] = true;
            upstream[other] = Some(k);
            order.push(k);
            queue.push_back(other);
        }
    }
    if let Some(i) = visited.iter().position(|v| !v) {
        return Err(NetworkError::NonRadial(format!(
            "bus {} is not connected to the root",
            buses[i].id
        )));
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); buses.len()];
    for &k in &order {
        children[branches[k].from].push(k);
    }

    // Loads.
    let mut loads = Vec::new();
    for l in &file.loads {
        let check_zip = |k: &[f64; 3]| (k.iter().sum::<f64>() - 1.0).abs() <= ZIP_SUM_TOL;
        if !check_zip(&l.kp) || !check_zip(&l.kq) {
            return Err(NetworkError::ZipCoefficients { bus: l.bus.clone() });
        }
        if !(l.p_kw.is_finite() && l.q_kvar.is_finite()) {
            return Err(schema_err(format!("load at bus {}: non-finite power", l.bus)));
        }
        let phases = parse_load_phases(&l.phase, l.connection, &l.bus)?;
        let mut targets = vec![(lookup(&l.bus)?, T::one())];
        if let Some(to) = &l.to {
            let other = lookup(to)?;
            let adjacent = branches.iter().any(|b| {
                (b.from == targets[0].0 && b.to == other) || (b.to == targets[0].0 && b.from == other)
            });
            if !adjacent {
                return Err(schema_err(format!(
                    "distributed load {}-{to} does not follow a branch",
                    l.bus
                )));
            }
            targets = vec![(targets[0].0, T::lit(0.5)), (other, T::lit(0.5))];
        }
        let share = T::one() / T::lit(phases.len() as f64);
        for (bus, weight) in targets {
            for &phase in &phases {
                if !buses[bus].phases.contains(phase) {
                    return Err(NetworkError::PhaseNotOnBus {
                        what: "load",
                        bus: buses[bus].id.clone(),
                        phases: l.phase.clone(),
                    });
                }
                loads.push(ZipLoad {
                    bus,
                    phase,
                    connection: Connection::Wye,
                    p0: T::lit(l.p_kw) * weight * share,
                    q0: T::lit(l.q_kvar) * weight * share,
                    kp: l.kp.map(T::lit),
                    kq: l.kq.map(T::lit),
                });
            }
        }
    }

    // Capacitor banks, grouped by bus in first-appearance order.
    let mut capacitors: Vec<CapacitorBank<T>> = Vec::new();
    for c in &file.capacitors {
        let bus = lookup(&c.bus)?;
        if !buses[bus].phases.contains(c.phase) {
            return Err(NetworkError::PhaseNotOnBus {
                what: "capacitor",
                bus: c.bus.clone(),
                phases: c.phase.to_string(),
            });
        }
        if !(c.kvar_nominal >= 0.0) {
            return Err(schema_err(format!("capacitor at bus {}: negative rating", c.bus)));
        }
        let entry = CapacitorPhase {
            phase: c.phase,
            rating: T::lit(c.kvar_nominal),
        };
        match capacitors.iter_mut().find(|b| b.bus == bus) {
            Some(bank) if bank.entries.iter().any(|e| e.phase == c.phase) => {
                return Err(schema_err(format!("capacitor at bus {} phase {} listed twice", c.bus, c.phase)))
            }
            Some(bank) => {
                bank.entries.push(entry);
                bank.entries.sort_by_key(|e| e.phase);
            }
            None => capacitors.push(CapacitorBank {
                bus,
                entries: vec![entry],
            }),
        }
    }

    let mut regulators = Vec::new();
    let mut regulator_on = vec![None; branches.len()];
    for r in &file.regulators {
        let (from, to) = (lookup(&r.from)?, lookup(&r.to)?);
        let k = branches
            .iter()
            .position(|b| b.from == from && b.to == to)
            .ok_or_else(|| {
                schema_err(format!(
                    "regulator {}-{} does not match a branch oriented away from the root",
                    r.from, r.to
                ))
            })?;
        if r.phases.is_empty() || !r.phases.is_subset_of(branches[k].phases) {
            return Err(NetworkError::PhaseNotOnBus {
                what: "regulator",
                bus: r.from.clone(),
                phases: r.phases.to_string(),
            });
        }
        if regulator_on[k].is_some() {
            return Err(schema_err(format!("two regulators on branch {}-{}", r.from, r.to)));
        }
        regulator_on[k] = Some(regulators.len());
        regulators.push(RegulatorBank {
            branch: k,
            phases: r.phases,
        });
    }

    let mut dg_units: Vec<DgInverter<T>> = Vec::new();
    for d in &file.dg_units {
        let bus = lookup(&d.bus)?;
        if !buses[bus].phases.contains(d.phase) {
            return Err(NetworkError::PhaseNotOnBus {
                what: "dg unit",
                bus: d.bus.clone(),
                phases: d.phase.to_string(),
            });
        }
        if !(d.s_kva >= 0.0) || d.p_kw.abs() > d.s_kva {
            return Err(schema_err(format!(
                "dg unit at bus {}: active power exceeds rating",
                d.bus
            )));
        }
        let entry = DgPhase {
            phase: d.phase,
            s_rated: T::lit(d.s_kva),
            p_out: T::lit(d.p_kw),
        };
        match dg_units
            .iter_mut()
            .find(|u| u.bus == bus && u.controllable == d.controllable)
        {
            Some(unit) if unit.entries.iter().any(|e| e.phase == d.phase) => {
                return Err(schema_err(format!("dg unit at bus {} phase {} listed twice", d.bus, d.phase)))
            }
            Some(unit) => {
                unit.entries.push(entry);
                unit.entries.sort_by_key(|e| e.phase);
            }
            None => dg_units.push(DgInverter {
                bus,
                controllable: d.controllable,
                entries: vec![entry],
            }),
        }
    }

    Ok(FeederNetwork {
        name: file.name.clone(),
        root,
        source_pu: T::lit(file.source_pu),
        base: Base {
            mva: T::lit(file.base.mva),
            kv_ll: T::lit(file.base.kv_ll),
        },
        per_unit: file.per_unit,
        buses,
        branches,
        loads,
        capacitors,
        regulators,
        dg_units,
        order,
        upstream,
        children,
        regulator_on,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_bus_json() -> &'static str {
        r#"{
          "name": "two-bus",
          "root": "src",
          "base": {"mva": 1.0, "kv_ll": 4.16},
          "buses": [
            {"id": "src", "phases": "ABC", "kv_ll": 4.16},
            {"id": "load", "phases": "ABC", "kv_ll": 4.16}
          ],
          "branches": [
            {"from": "src", "to": "load", "kind": "line", "phases": "ABC",
             "z_ohms_per_unit_length": [[[0.3,0.6],[0.1,0.2],[0.1,0.2]],[[0.1,0.2],[0.3,0.6],[0.1,0.2]],[[0.1,0.2],[0.1,0.2],[0.3,0.6]]],
             "y_shunt_siemens": [[[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0]],[[0,0],[0,0],[0,0]]],
             "length": 1.0}
          ],
          "loads": [{"bus": "load", "phase": "A", "p_kw": 100, "q_kvar": 50}]
        }"#
    }

    #[test]
    fn minimal_feeder() {
        let net = FeederNetwork::<f64>::from_json_str(two_bus_json()).unwrap();
        assert_eq!(net.branches.len(), 1);
        assert_eq!(net.forward_order(), &[0]);
        assert_eq!(net.root, 0);
        assert_eq!(net.upstream_branch(1), Some(0));
        assert_eq!(net.loads[0].kp, [0.0, 0.0, 1.0]);
    }

    fn edit(f: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(two_bus_json()).unwrap();
        f(&mut v);
        v.to_string()
    }

    fn single_phase_line(from: &str, to: &str) -> serde_json::Value {
        serde_json::json!({"from": from, "to": to, "kind": "line", "phases": "A",
            "z_ohms_per_unit_length": [[[0.3, 0.6]]], "y_shunt_siemens": [[[0.0, 0.0]]], "length": 1.0})
    }

    #[test]
    fn cycle_is_rejected() {
        let text = edit(|v| {
            v["buses"].as_array_mut().unwrap().push(serde_json::json!({"id": "x", "phases": "ABC", "kv_ll": 4.16}));
            let br = v["branches"].as_array_mut().unwrap();
            br.push(single_phase_line("load", "x"));
            br.push(single_phase_line("x", "src"));
        });
        let err = FeederNetwork::<f64>::from_json_str(&text).unwrap_err();
        assert!(matches!(err, NetworkError::NonRadial(_)), "{err}");
    }

    #[test]
    fn cycle_with_correct_edge_count_is_rejected() {
        // 3 buses, 2 branches forming a double edge plus an isolated bus.
        let text = edit(|v| {
            v["buses"].as_array_mut().unwrap().push(serde_json::json!({"id": "x", "phases": "ABC", "kv_ll": 4.16}));
            v["branches"].as_array_mut().unwrap().push(single_phase_line("load", "src"));
        });
        let err = FeederNetwork::<f64>::from_json_str(&text).unwrap_err();
        assert!(matches!(err, NetworkError::NonRadial(_)), "{err}");
    }

    #[test]
    fn load_phase_must_exist_on_bus() {
        let text = edit(|v| {
            v["buses"][1]["phases"] = "AB".into();
            v["branches"][0] = single_phase_line("src", "load");
            v["loads"][0]["phase"] = "C".into();
        });
        let err = FeederNetwork::<f64>::from_json_str(&text).unwrap_err();
        assert!(matches!(err, NetworkError::PhaseNotOnBus { what: "load", .. }), "{err}");
    }

    #[test]
    fn zip_coefficients_must_sum_to_one() {
        let text = edit(|v| v["loads"][0]["kp"] = serde_json::json!([0.5, 0.4, 0.0]));
        let err = FeederNetwork::<f64>::from_json_str(&text).unwrap_err();
        assert!(matches!(err, NetworkError::ZipCoefficients { .. }));
    }

    #[test]
    fn schema_violation() {
        let text = edit(|v| v["branches"][0]["kind"] = "cable".into());
        assert!(matches!(
            FeederNetwork::<f64>::from_json_str(&text),
            Err(NetworkError::Json(_))
        ));
    }

    #[test]
    fn delta_load_is_split_between_its_phases() {
        let text = edit(|v| {
            v["loads"][0] = serde_json::json!({"bus": "load", "phase": "BC", "connection": "delta", "p_kw": 230, "q_kvar": 132});
        });
        let net = FeederNetwork::<f64>::from_json_str(&text).unwrap();
        assert_eq!(net.loads.len(), 2);
        assert_eq!((net.loads[0].phase, net.loads[0].p0, net.loads[0].q0), (Phase::B, 115.0, 66.0));
        assert_eq!((net.loads[1].phase, net.loads[1].p0), (Phase::C, 115.0));
    }

    #[test]
    fn distributed_load_goes_half_to_each_end() {
        let text = edit(|v| v["loads"][0]["to"] = "src".into());
        let net = FeederNetwork::<f64>::from_json_str(&text).unwrap();
        let at = |bus| net.loads.iter().filter(|l| l.bus == bus).map(|l| l.p0).sum::<f64>();
        assert_eq!((at(0), at(1)), (50.0, 50.0));
    }

    #[test]
    fn per_unit_definitions() {
        let net = FeederNetwork::<f64>::from_json_str(&edit(|v| {
            let zb = (4.16_f64 / 3f64.sqrt()).powi(2) / 1.0;
            v["branches"][0]["z_ohms_per_unit_length"][0][0] = serde_json::json!([zb, 0.0]);
            v["loads"][0]["p_kw"] = 1000.0.into();
        }))
        .unwrap();
        let pu = net.to_per_unit().unwrap();
        assert!((pu.branches[0].z_series().0[0][0].re - 1.0).abs() < 1e-12);
        assert_eq!(pu.loads[0].p0, 1.0);
        assert_eq!(pu.to_per_unit().unwrap(), pu);
        assert_ne!(pu, net);
    }

    #[test]
    fn bad_base_is_rejected() {
        let text = edit(|v| v["base"]["mva"] = 0.0.into());
        assert!(matches!(
            FeederNetwork::<f64>::from_json_str(&text),
            Err(NetworkError::InvalidBase { .. })
        ));
    }

    #[test]
    fn branch_is_reoriented_away_from_root() {
        let text = edit(|v| {
            v["root"] = "src".into();
            v["branches"][0]["from"] = "load".into();
            v["branches"][0]["to"] = "src".into();
        });
        let net = FeederNetwork::<f64>::from_json_str(&text).unwrap();
        assert_eq!((net.branches[0].from, net.branches[0].to), (0, 1));
    }
}

//! JSON feeder description file.
//!
//! Impedances and shunt admittances are given per unit length and are
//! multiplied by `length`; matrices are row-major over the branch's present
//! phases, entries as `[re, im]`. Powers are kW / kvar unless `per_unit` is set.

use serde::{Deserialize, Serialize};

use crate::network::{BranchKind, Connection};
use crate::phase::{Phase, PhaseMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederFile {
    #[serde(default)]
    pub name: String,
    /// Substation bus. Defaults to the only bus that is never a branch `to`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<String>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub source_pu: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub per_unit: bool,
    pub base: BaseFile,
    pub buses: Vec<BusFile>,
    pub branches: Vec<BranchFile>,
    #[serde(default)]
    pub loads: Vec<LoadFile>,
    #[serde(default)]
    pub capacitors: Vec<CapacitorFile>,
    #[serde(default)]
    pub regulators: Vec<RegulatorFile>,
    #[serde(default)]
    pub dg_units: Vec<DgFile>,
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

fn yes() -> bool {
    true
}

fn constant_power() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseFile {
    /// Per-phase power base.
    pub mva: f64,
    pub kv_ll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusFile {
    pub id: String,
    pub phases: PhaseMask,
    pub kv_ll: f64,
}

pub type ComplexEntry = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchFile {
    pub from: String,
    pub to: String,
    pub kind: BranchKind,
    pub phases: PhaseMask,
    pub z_ohms_per_unit_length: Vec<Vec<ComplexEntry>>,
    pub y_shunt_siemens: Vec<Vec<ComplexEntry>>,
    pub length: f64,
}

/// Wye loads name one phase (`"B"`); delta loads name the phase pair (`"BC"`).
/// A load with `to` set is distributed along the segment `bus`–`to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadFile {
    pub bus: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    pub phase: String,
    #[serde(default)]
    pub connection: Connection,
    pub p_kw: f64,
    pub q_kvar: f64,
    #[serde(default = "constant_power")]
    pub kp: [f64; 3],
    #[serde(default = "constant_power")]
    pub kq: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitorFile {
    pub bus: String,
    pub phase: Phase,
    pub kvar_nominal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegulatorFile {
    pub from: String,
    pub to: String,
    pub phases: PhaseMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgFile {
    pub bus: String,
    pub phase: Phase,
    pub s_kva: f64,
    pub p_kw: f64,
    #[serde(default = "yes")]
    pub controllable: bool,
}

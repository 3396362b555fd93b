#![allow(dead_code)]

pub mod oracle;

use rand::Rng;
use vvo_core::network::schema::*;
use vvo_core::network::{BranchKind, Connection, FeederNetwork};
use vvo_core::phase::{Phase, PhaseMask};

/// Random non-empty subset of `mask`, biased toward keeping all phases.
fn sub_mask<R: Rng>(mask: PhaseMask, rng: &mut R) -> PhaseMask {
    if rng.gen_bool(0.6) {
        return mask;
    }
    loop {
        let m = PhaseMask::from_phases(mask.iter().filter(|_| rng.gen_bool(0.5)));
        if !m.is_empty() {
            return m;
        }
    }
}

fn line_matrices<R: Rng>(n: usize, rng: &mut R) -> (Vec<Vec<ComplexEntry>>, Vec<Vec<ComplexEntry>>) {
    let mut z = vec![vec![[0.0, 0.0]; n]; n];
    let mut y = vec![vec![[0.0, 0.0]; n]; n];
    for i in 0..n {
        z[i][i] = [rng.gen_range(0.3..0.7), rng.gen_range(1.0..1.4)];
        y[i][i] = [0.0, rng.gen_range(4e-6..6.5e-6)];
        for j in 0..i {
            let off = [rng.gen_range(0.08..0.2), rng.gen_range(0.35..0.6)];
            z[i][j] = off;
            z[j][i] = off;
            let b = [0.0, -rng.gen_range(0.5e-6..2e-6)];
            y[i][j] = b;
            y[j][i] = b;
        }
    }
    (z, y)
}

/// Radial feeder with up to `max_buses` buses, random phasing, ZIP loads,
/// switches, capacitors, DG and (optionally) a regulator on a line.
pub fn random_feeder<R: Rng>(max_buses: usize, rng: &mut R, with_devices: bool) -> FeederFile {
    let n = rng.gen_range(2..=max_buses);
    let mut buses = vec![BusFile {
        id: "b0".into(),
        phases: PhaseMask::ABC,
        kv_ll: 4.16,
    }];
    let mut branches = Vec::new();
    let mut loads = Vec::new();
    let mut capacitors = Vec::new();
    let mut regulators = Vec::new();
    let mut dg_units = Vec::new();
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        let mask = sub_mask(buses[parent].phases, rng);
        let id = format!("b{i}");
        let k = mask.len();
        let kind = if i > 1 && rng.gen_bool(0.15) { BranchKind::Switch } else { BranchKind::Line };
        let (z, y) = if kind == BranchKind::Switch {
            (vec![vec![[0.0, 0.0]; k]; k], vec![vec![[0.0, 0.0]; k]; k])
        } else {
            line_matrices(k, rng)
        };
        branches.push(BranchFile {
            from: buses[parent].id.clone(),
            to: id.clone(),
            kind,
            phases: mask,
            z_ohms_per_unit_length: z,
            y_shunt_siemens: y,
            length: rng.gen_range(0.05..0.4),
        });
        if with_devices && kind == BranchKind::Line && regulators.is_empty() && rng.gen_bool(0.3) {
            regulators.push(RegulatorFile {
                from: buses[parent].id.clone(),
                to: id.clone(),
                phases: sub_mask(mask, rng),
            });
        }
        for p in mask.iter() {
            if rng.gen_bool(0.7) {
                let a: f64 = rng.gen_range(0.0..0.5);
                let b: f64 = rng.gen_range(0.0..0.5);
                let kp = [a, b, 1.0 - a - b];
                let c: f64 = rng.gen_range(0.0..0.5);
                loads.push(LoadFile {
                    bus: id.clone(),
                    to: None,
                    phase: p.letter().to_string(),
                    connection: Connection::Wye,
                    p_kw: rng.gen_range(10.0..150.0),
                    q_kvar: rng.gen_range(5.0..80.0),
                    kp,
                    kq: [c, 0.0, 1.0 - c],
                });
            }
        }
        if with_devices && rng.gen_bool(0.25) {
            for p in mask.iter() {
                capacitors.push(CapacitorFile {
                    bus: id.clone(),
                    phase: p,
                    kvar_nominal: rng.gen_range(20.0..150.0),
                });
            }
        }
        if with_devices && rng.gen_bool(0.2) {
            let p = mask.iter().next().unwrap();
            let s: f64 = rng.gen_range(50.0..200.0);
            dg_units.push(DgFile {
                bus: id.clone(),
                phase: p,
                s_kva: s,
                p_kw: 0.8 * s,
                controllable: rng.gen_bool(0.7),
            });
        }
        buses.push(BusFile {
            id,
            phases: mask,
            kv_ll: 4.16,
        });
    }
    FeederFile {
        name: "random".into(),
        root: Some("b0".into()),
        source_pu: 1.0,
        per_unit: false,
        base: BaseFile { mva: 1.0, kv_ll: 4.16 },
        buses,
        branches,
        loads,
        capacitors,
        regulators,
        dg_units,
    }
}

pub fn per_unit(file: &FeederFile) -> FeederNetwork<f64> {
    FeederNetwork::from_file(file)
        .expect("generated feeder is valid")
        .to_per_unit()
        .unwrap()
}

/// Largest magnitude difference over present phases.
pub fn max_mag_diff(net: &FeederNetwork<f64>, a: &[[num_complex::Complex64; 3]], b: &[[num_complex::Complex64; 3]]) -> f64 {
    let mut worst = 0.0f64;
    for (k, bus) in net.buses.iter().enumerate() {
        for p in Phase::ALL {
            if bus.phases.contains(p) {
                worst = worst.max((a[k][p.index()].norm() - b[k][p.index()].norm()).abs());
            }
        }
    }
    worst
}

pub fn complex_voltages(sol: &vvo_core::Solution) -> Vec<[num_complex::Complex64; 3]> {
    sol.voltages.iter().map(|v| v.0).collect()
}

//! Dense nodal-admittance power-flow oracle.
//!
//! Builds the full bus admittance matrix over (bus, phase) nodes, merges buses
//! joined by ideal switches, and iterates the implicit Z-bus fixed point
//! `V_L = Y_LL⁻¹ (I_L(V) − Y_LS V_S)` with node currents recomputed from
//! its own ZIP/device evaluation. Shares no code with the sweep solver.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;

use vvo_core::devices::JointAction;
use vvo_core::network::FeederNetwork;

pub struct OracleSolution {
    /// Complex voltage per bus, phase a/b/c; absent phases zero.
    pub voltages: Vec<[C; 3]>,
    pub iterations: usize,
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut c = i;
    while parent[c] != r {
        let next = parent[c];
        parent[c] = r;
        c = next;
    }
    r
}

fn present(net: &FeederNetwork<f64>, bus: usize) -> Vec<usize> {
    (0..3)
        .filter(|&p| net.buses[bus].phases.contains(vvo_core::phase::Phase::ALL[p]))
        .collect()
}

fn sub_matrix(m: &vvo_core::phase::PhaseMatrix<f64>, idx: &[usize]) -> DMatrix<C> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m.0[idx[r]][idx[c]])
}

fn tap_ratio(position: u8) -> f64 {
    0.9 + (position as f64 - 1.0) * 0.00625
}

/// Regulator ratio per branch phase index list.
fn ratios(net: &FeederNetwork<f64>, action: &JointAction, branch: usize, idx: &[usize]) -> Vec<f64> {
    let reg = net.regulators.iter().position(|r| r.branch == branch);
    idx.iter()
        .map(|&p| match reg {
            Some(r) if net.regulators[r].phases.contains(vvo_core::phase::Phase::ALL[p]) => {
                tap_ratio(action.taps[r][p].position())
            }
            _ => 1.0,
        })
        .collect()
}

/// Solves the network at its nominal operating point scaled by `load_scale`
/// (one multiplier per network load; `None` = all ones).
pub fn solve(net: &FeederNetwork<f64>, action: &JointAction, load_scale: Option<&[f64]>) -> OracleSolution {
    assert!(net.per_unit);
    let n_bus = net.buses.len();
    let mut parent: Vec<usize> = (0..n_bus).collect();
    for (k, br) in net.branches.iter().enumerate() {
        if !br.kind.has_impedance() {
            let idx: Vec<usize> = (0..3)
                .filter(|&p| br.phases.contains(vvo_core::phase::Phase::ALL[p]))
                .collect();
            assert!(
                ratios(net, action, k, &idx).iter().all(|&r| (r - 1.0).abs() < 1e-15),
                "oracle merges ideal branches; off-neutral regulators there are unsupported"
            );
            let (a, b) = (find(&mut parent, br.from), find(&mut parent, br.to));
            if a != b {
                parent[b] = a;
            }
        }
    }
    let root = find(&mut parent, net.root);
    let group: Vec<usize> = (0..n_bus).map(|i| find(&mut parent, i)).collect();

    // Node numbering over representative buses.
    let mut node: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut slack: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (b, &g) in group.iter().enumerate() {
        for p in present(net, b) {
            let key = (g, p);
            if g == root {
                let len = slack.len();
                slack.entry(key).or_insert(len);
            } else {
                let len = node.len();
                node.entry(key).or_insert(len);
            }
        }
    }
    let nl = node.len();
    let ns = slack.len();
    let mut y_ll = DMatrix::<C>::zeros(nl, nl);
    let mut y_ls = DMatrix::<C>::zeros(nl, ns);
    let mut stamp = |from: (usize, usize), to: (usize, usize), v: C,
                     node: &BTreeMap<(usize, usize), usize>, slack: &BTreeMap<(usize, usize), usize>| {
        if let Some(&i) = node.get(&from) {
            if let Some(&j) = node.get(&to) {
                y_ll[(i, j)] += v;
            } else if let Some(&j) = slack.get(&to) {
                y_ls[(i, j)] += v;
            }
        }
    };

    for (k, br) in net.branches.iter().enumerate() {
        if !br.kind.has_impedance() {
            continue;
        }
        let idx: Vec<usize> = (0..3)
            .filter(|&p| br.phases.contains(vvo_core::phase::Phase::ALL[p]))
            .collect();
        let z = sub_matrix(&br.z_series(), &idx);
        let ys = sub_matrix(&br.y_shunt(), &idx) * C::new(0.5, 0.0);
        let yl = z.try_inverse().expect("non-singular series impedance");
        let a = DMatrix::from_diagonal(&DVector::from_iterator(
            idx.len(),
            ratios(net, action, k, &idx).into_iter().map(|r| C::new(r, 0.0)),
        ));
        // Ideal ratio at the sending end: U' = A U_n, I_n = A I'.
        let nn = &a * (&yl + &ys) * &a;
        let nm = -(&a * &yl);
        let mn = -(&yl * &a);
        let mm = &yl + &ys;
        let (gn, gm) = (group[br.from], group[br.to]);
        for (r, &pr) in idx.iter().enumerate() {
            for (c, &pc) in idx.iter().enumerate() {
                stamp((gn, pr), (gn, pc), nn[(r, c)], &node, &slack);
                stamp((gn, pr), (gm, pc), nm[(r, c)], &node, &slack);
                stamp((gm, pr), (gn, pc), mn[(r, c)], &node, &slack);
                stamp((gm, pr), (gm, pc), mm[(r, c)], &node, &slack);
            }
        }
    }

    let deg = std::f64::consts::PI / 180.0;
    let angle = [0.0, -120.0 * deg, 120.0 * deg];
    let mut v_s = DVector::<C>::zeros(ns);
    for (&(_, p), &j) in &slack {
        v_s[j] = C::from_polar(net.source_pu, angle[p]);
    }
    let mut v_l = DVector::<C>::zeros(nl);
    for (&(_, p), &i) in &node {
        v_l[i] = C::from_polar(1.0, angle[p]);
    }
    let y_ls_vs = &y_ls * &v_s;
    let lu = y_ll.clone().lu();

    let scale = |i: usize| load_scale.map_or(1.0, |s| s[i]);
    let mut iterations = 0;
    loop {
        iterations += 1;
        // Net consumption per node at the present iterate.
        let mut s = DVector::<C>::zeros(nl);
        let mag = |key: (usize, usize), v_l: &DVector<C>| node.get(&key).map(|&i| v_l[i].norm());
        for (li, l) in net.loads.iter().enumerate() {
            let key = (group[l.bus], l.phase.index());
            if let (Some(&i), Some(v)) = (node.get(&key), mag(key, &v_l)) {
                let p = l.p0 * (l.kp[0] * v * v + l.kp[1] * v + l.kp[2]);
                let q = l.q0 * (l.kq[0] * v * v + l.kq[1] * v + l.kq[2]);
                s[i] += C::new(p, q) * scale(li);
            }
        }
        for (u, unit) in net.dg_units.iter().enumerate() {
            for e in &unit.entries {
                let key = (group[unit.bus], e.phase.index());
                if let Some(&i) = node.get(&key) {
                    let q = if unit.controllable {
                        action.inverters[u][e.phase.index()].tenths() as f64 / 10.0
                            * (e.s_rated * e.s_rated - e.p_out * e.p_out).sqrt()
                    } else {
                        0.0
                    };
                    s[i] -= C::new(e.p_out, q);
                }
            }
        }
        for (c, bank) in net.capacitors.iter().enumerate() {
            for e in &bank.entries {
                let key = (group[bank.bus], e.phase.index());
                if let (Some(&i), Some(v)) = (node.get(&key), mag(key, &v_l)) {
                    if action.capacitors[c][e.phase.index()] {
                        s[i] -= C::new(0.0, v * v * e.rating);
                    }
                }
            }
        }
        let i_inj = DVector::from_iterator(nl, (0..nl).map(|i| -(s[i] / v_l[i]).conj()));
        let rhs = i_inj - &y_ls_vs;
        let next = lu.solve(&rhs).expect("Y_LL is non-singular");
        let change = (&next - &v_l).iter().map(|d| d.norm()).fold(0.0, f64::max);
        v_l = next;
        if change < 1e-13 || iterations >= 1000 {
            break;
        }
    }
    assert!(iterations < 1000, "oracle did not converge");

    let mut voltages = vec![[C::new(0.0, 0.0); 3]; n_bus];
    for b in 0..n_bus {
        for p in present(net, b) {
            let key = (group[b], p);
            voltages[b][p] = match (node.get(&key), slack.get(&key)) {
                (Some(&i), _) => v_l[i],
                (_, Some(&j)) => v_s[j],
                _ => unreachable!(),
            };
        }
    }
    OracleSolution { voltages, iterations }
}

/// Σ over impedance branches of Iᴴ·R·I with I = Z⁻¹ΔU, from bus voltages.
pub fn resistive_loss(net: &FeederNetwork<f64>, action: &JointAction, voltages: &[[C; 3]]) -> f64 {
    let mut loss = 0.0;
    for (k, br) in net.branches.iter().enumerate() {
        if !br.kind.has_impedance() {
            continue;
        }
        let idx: Vec<usize> = (0..3)
            .filter(|&p| br.phases.contains(vvo_core::phase::Phase::ALL[p]))
            .collect();
        let z = sub_matrix(&br.z_series(), &idx);
        let r = z.map(|e| C::new(e.re, 0.0));
        let a = ratios(net, action, k, &idx);
        let drop = DVector::from_iterator(
            idx.len(),
            idx.iter()
                .zip(&a)
                .map(|(&p, &ratio)| voltages[br.from][p] * ratio - voltages[br.to][p]),
        );
        let i = z.lu().solve(&drop).expect("non-singular Z");
        loss += (i.adjoint() * &r * &i)[(0, 0)].re;
    }
    loss
}

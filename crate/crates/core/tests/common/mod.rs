#![allow(dead_code)]

use phaseflow::linearize::LinCoeffs;
use phaseflow::milp::LtupfSolution;
use phaseflow::model::{Assignment, Network, Phase, Phasor};
use phaseflow::sweep::SolveResult;

/// Closed-form receiving-end voltage of a single constant-power load fed
/// through impedance `r + jx` from a source `e`. `None` past the nose point.
///
/// From `E V* = |V|^2 + (r + jx)(p - jq)`, with `a = rp + xq`, `b = xp - rq`:
/// `v^4 + (2a - |E|^2) v^2 + a^2 + b^2 = 0`, high-voltage root.
pub fn two_bus_closed_form(e: Phasor, r: f64, x: f64, p: f64, q: f64) -> Option<Phasor> {
    let a = r * p + x * q;
    let b = x * p - r * q;
    let e2 = e.norm_sqr();
    let beta = e2 - 2.0 * a;
    let disc = beta * beta - 4.0 * (a * a + b * b);
    if disc < 0.0 {
        return None;
    }
    let v2 = (beta + disc.sqrt()) / 2.0;
    let theta = e.arg() + (-b).atan2(v2 + a);
    Some(Phasor::from_polar(v2.sqrt(), theta))
}

/// Largest violation of the network laws by a set of node voltages, branch
/// currents and customer quantities. The load law is supplied by the caller.
pub fn network_residual(
    net: &Network,
    asg: &Assignment,
    node_v: &std::collections::BTreeMap<(phaseflow::NodeId, Phase), Phasor>,
    seg_i: &std::collections::BTreeMap<(usize, Phase), Phasor>,
    cust_v: &std::collections::BTreeMap<phaseflow::CustomerId, Phasor>,
    cust_i: &std::collections::BTreeMap<phaseflow::CustomerId, Phasor>,
) -> f64 {
    let mut worst: f64 = 0.0;
    for ph in Phase::ALL {
        worst = worst.max((node_v[&(net.root(), ph)] - net.root_voltage()[ph.index()]).norm());
    }
    for (s, seg) in net.segments().iter().enumerate() {
        for ph in Phase::ALL {
            let drop: Phasor = Phase::ALL
                .iter()
                .map(|ps| seg.z[ph.index()][ps.index()] * seg_i[&(s, *ps)])
                .sum();
            let r = node_v[&(seg.from, ph)] - node_v[&(seg.to, ph)] - drop;
            worst = worst.max(r.norm());
        }
    }
    for &n in net.nodes() {
        if n == net.root() {
            continue;
        }
        for ph in Phase::ALL {
            let mut bal = Phasor::new(0.0, 0.0);
            for (s, seg) in net.segments().iter().enumerate() {
                if seg.to == n {
                    bal += seg_i[&(s, ph)];
                }
                if seg.from == n {
                    bal -= seg_i[&(s, ph)];
                }
            }
            for c in net.customers() {
                if c.node == n && asg.phase(c.id) == Some(ph) {
                    bal -= cust_i[&c.id];
                }
            }
            worst = worst.max(bal.norm());
        }
    }
    for c in net.customers() {
        let ph = asg.phase(c.id).unwrap();
        let r = node_v[&(c.node, ph)] - c.z_service * cust_i[&c.id] - cust_v[&c.id];
        worst = worst.max(r.norm());
    }
    worst
}

pub fn ntupf_residual(net: &Network, asg: &Assignment, res: &SolveResult) -> f64 {
    let laws = network_residual(
        net,
        asg,
        &res.node_voltage,
        &res.segment_current,
        &res.customer_voltage,
        &res.customer_current,
    );
    let load = net
        .customers()
        .iter()
        .map(|c| {
            let v = res.customer_voltage[&c.id];
            (v * res.customer_current[&c.id].conj() - Phasor::new(c.p, c.q)).norm()
        })
        .fold(0.0, f64::max);
    laws.max(load)
}

/// Network laws plus the linearized load law `I = (p - jq) f~(V)`.
pub fn ltupf_residual(
    net: &Network,
    asg: &Assignment,
    coeffs: &LinCoeffs,
    sol: &LtupfSolution,
) -> f64 {
    let laws = network_residual(
        net,
        asg,
        &sol.node_voltage,
        &sol.segment_current,
        &sol.customer_voltage,
        &sol.customer_current,
    );
    let load = net
        .customers()
        .iter()
        .map(|c| {
            let pc = coeffs.phase(asg.phase(c.id).unwrap());
            let v = sol.customer_voltage[&c.id];
            // Surrogate written out in components rather than via eval().
            let fx = pc.kx * v.re + pc.ky * v.im + pc.bx;
            let fy = pc.hx * v.re + pc.hy * v.im + pc.by;
            let want = Phasor::new(c.p * fx + c.q * fy, c.p * fy - c.q * fx);
            (sol.customer_current[&c.id] - want).norm()
        })
        .fold(0.0, f64::max);
    laws.max(load)
}

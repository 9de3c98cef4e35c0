//! Nonlinear three-phase power flow for a fixed phase assignment.
//!
//! Each iteration is a plain two-pass sweep: customer currents from the
//! current voltage estimate, leaf-to-root accumulation of branch currents,
//! then root-to-leaf voltage drops through the coupled line impedances.
//! Non-convergence is reported in the result, not as an error.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{Assignment, CustomerId, Network, NodeId, Phase, Phasor, Topology};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    /// Convergence threshold on the largest voltage change between iterations.
    pub tol: f64,
    pub max_iter: usize,
    /// Any voltage magnitude below this declares divergence.
    pub v_floor: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            v_floor: 0.3,
        }
    }
}

impl SweepOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidOptions(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidOptions("max_iter must be >= 1".into()));
        }
        if !(self.v_floor > 0.0 && self.v_floor < 1.0) {
            return Err(Error::InvalidOptions(format!(
                "v_floor must lie in (0, 1), got {}",
                self.v_floor
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub node_voltage: BTreeMap<(NodeId, Phase), Phasor>,
    /// Voltage at the customer end of the service drop.
    pub customer_voltage: BTreeMap<CustomerId, Phasor>,
    pub customer_current: BTreeMap<CustomerId, Phasor>,
    /// Keyed by segment index in `net.segments()`.
    pub segment_current: BTreeMap<(usize, Phase), Phasor>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest voltage change seen in each iteration.
    pub change_history: Vec<f64>,
}

/// Current drawn by a constant-power load: `(p - jq) / conj(v)`.
pub fn customer_injection(v_customer: Phasor, p: f64, q: f64) -> Result<Phasor> {
    if v_customer.norm_sqr() == 0.0 {
        return Err(Error::ZeroVoltage);
    }
    Ok(Phasor::new(p, -q) / v_customer.conj())
}

pub fn ntupf_solve(net: &Network, asg: &Assignment, opts: &SweepOptions) -> Result<SolveResult> {
    opts.validate()?;
    let topo = Topology::build(net)?;
    asg.check(net)?;

    let root_v = net.root_voltage();
    let n_nodes = topo.node_count();
    let segments = net.segments();

    // Customers in id order so floating-point accumulation does not depend on
    // the order they were listed in.
    let mut cust: Vec<usize> = (0..net.customers().len()).collect();
    cust.sort_by_key(|&i| net.customers()[i].id);
    let cust_node: Vec<usize> = cust
        .iter()
        .map(|&i| topo.index_of(net.customers()[i].node))
        .collect();
    let cust_phase: Vec<usize> = cust
        .iter()
        .map(|&i| asg.phase(net.customers()[i].id).expect("checked").index())
        .collect();

    let mut v_node = vec![root_v; n_nodes];
    let mut v_cust: Vec<Phasor> = cust_phase.iter().map(|&ph| root_v[ph]).collect();
    let mut i_cust = vec![Phasor::new(0.0, 0.0); cust.len()];
    let mut i_seg = vec![[Phasor::new(0.0, 0.0); 3]; segments.len()];

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    'outer: for iter in 1..=opts.max_iter {
        iterations = iter;
        let mut change: f64 = 0.0;

        // Customer currents, with the service-drop voltage lagging one iteration.
        let mut inj = vec![[Phasor::new(0.0, 0.0); 3]; n_nodes];
        for (k, &ci) in cust.iter().enumerate() {
            let c = &net.customers()[ci];
            let u = v_node[cust_node[k]][cust_phase[k]];
            let v = u - c.z_service * i_cust[k];
            if !v.re.is_finite() || !v.im.is_finite() || v.norm() < opts.v_floor {
                break 'outer;
            }
            change = change.max((v - v_cust[k]).norm());
            v_cust[k] = v;
            i_cust[k] = customer_injection(v, c.p, c.q)?;
            inj[cust_node[k]][cust_phase[k]] += i_cust[k];
        }

        // Backward: leaf-to-root branch currents.
        for &s in topo.order().iter().rev() {
            let (f, t) = (
                topo.index_of(segments[s].from),
                topo.index_of(segments[s].to),
            );
            i_seg[s] = inj[t];
            for ph in 0..3 {
                let add = inj[t][ph];
                inj[f][ph] += add;
            }
        }

        // Forward: root-to-leaf voltage drops.
        let mut diverged = false;
        for &s in topo.order() {
            let seg = &segments[s];
            let (f, t) = (topo.index_of(seg.from), topo.index_of(seg.to));
            for ph in 0..3 {
                let drop: Phasor = (0..3).map(|ps| seg.z[ph][ps] * i_seg[s][ps]).sum();
                let v = v_node[f][ph] - drop;
                change = change.max((v - v_node[t][ph]).norm());
                if !v.re.is_finite() || !v.im.is_finite() || v.norm() < opts.v_floor {
                    diverged = true;
                }
                v_node[t][ph] = v;
            }
        }
        history.push(change);
        if diverged {
            break;
        }
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    if converged {
        for (k, &ci) in cust.iter().enumerate() {
            let c = &net.customers()[ci];
            v_cust[k] = v_node[cust_node[k]][cust_phase[k]] - c.z_service * i_cust[k];
        }
    }

    let mut node_voltage = BTreeMap::new();
    for &n in net.nodes() {
        for ph in Phase::ALL {
            node_voltage.insert((n, ph), v_node[topo.index_of(n)][ph.index()]);
        }
    }
    let mut customer_voltage = BTreeMap::new();
    let mut customer_current = BTreeMap::new();
    for (k, &ci) in cust.iter().enumerate() {
        let id = net.customers()[ci].id;
        customer_voltage.insert(id, v_cust[k]);
        customer_current.insert(id, i_cust[k]);
    }
    let mut segment_current = BTreeMap::new();
    for (s, cur) in i_seg.iter().enumerate() {
        for ph in Phase::ALL {
            segment_current.insert((s, ph), cur[ph.index()]);
        }
    }

    Ok(SolveResult {
        node_voltage,
        customer_voltage,
        customer_current,
        segment_current,
        iterations,
        converged,
        change_history: history,
    })
}

/// Largest `|V * conj(I) - (p + jq)|` over customers.
pub fn power_balance_residual(net: &Network, res: &SolveResult) -> f64 {
    net.customers()
        .iter()
        .map(|c| {
            let v = res.customer_voltage[&c.id];
            let i = res.customer_current[&c.id];
            (v * i.conj() - Phasor::new(c.p, c.q)).norm()
        })
        .fold(0.0, f64::max)
}

/// Largest current mismatch at any non-root node and phase: inflow minus
/// outflow minus customer draw.
pub fn kcl_residual(net: &Network, asg: &Assignment, res: &SolveResult) -> f64 {
    let mut balance: BTreeMap<(NodeId, Phase), Phasor> = BTreeMap::new();
    for (s, seg) in net.segments().iter().enumerate() {
        for ph in Phase::ALL {
            let i = res.segment_current[&(s, ph)];
            *balance.entry((seg.to, ph)).or_default() += i;
            *balance.entry((seg.from, ph)).or_default() -= i;
        }
    }
    for c in net.customers() {
        if let Some(ph) = asg.phase(c.id) {
            *balance.entry((c.node, ph)).or_default() -= res.customer_current[&c.id];
        }
    }
    balance
        .iter()
        .filter(|((n, _), _)| *n != net.root())
        .map(|(_, v)| v.norm())
        .fold(0.0, f64::max)
}

/// Complex power leaving the root into the feeder.
pub fn root_power(net: &Network, res: &SolveResult) -> Phasor {
    let rv = net.root_voltage();
    net.segments()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.from == net.root())
        .map(|(s, _)| {
            Phase::ALL
                .iter()
                .map(|ph| rv[ph.index()] * res.segment_current[&(s, *ph)].conj())
                .sum::<Phasor>()
        })
        .sum()
}

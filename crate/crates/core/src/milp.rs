//! Linearized power flow (LTUPF) and the exact phase-assignment search.
//!
//! With every phase selection fixed, the binary-continuous products of the
//! mixed-integer model collapse to constants (the envelope in
//! [`rlp_reconstruct`](crate::linearize::rlp_reconstruct) admits only `z = x*y`),
//! and the model is a plain linear system. The search therefore walks
//! assignments in ascending imbalance `U_x` and stops at the first one whose
//! linear solution lies inside the voltage box. Because `U_x` depends only on
//! the assignment, that first hit is the optimum of the mixed-integer program.
//!
//! # Linear system
//!
//! The unknowns are the customer currents `I_c` (real and imaginary parts).
//! Branch currents are sums of downstream customer currents, and node voltages
//! follow from the root voltage minus the drops along the path, so
//!
//! ```text
//! U_c = V0[ph_c] - sum_d D[c][d] I_d,   D[c][d] = Zpath(lca(c, d))[ph_c][ph_d]
//! V_c = U_c - Zs_c I_c
//! I_c = (p_c - j q_c) * (K_c V_c + b_c)
//! ```
//!
//! where `K_c`, `b_c` are the surrogate coefficients of the customer's phase.
//! The surrogate is real-linear but not complex-linear, hence the real
//! `2C x 2C` formulation.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linearize::{FitRegion, LinCoeffs};
use crate::model::{
    resolve_assignment, wrap_angle, Assignment, CustomerId, Network, NodeId, Phase, PhaseMatrix,
    Phasor, Topology,
};

/// Slack on box comparisons so the root sitting exactly on `v_max` counts as inside.
const BOX_EPS: f64 = 1e-9;

/// Voltage magnitude and angle limits shared by every node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoltageBox {
    pub v_min: f64,
    pub v_max: f64,
    pub delta_center: [f64; 3],
    pub delta_halfwidth: f64,
}

impl VoltageBox {
    pub fn from_region(region: &FitRegion) -> VoltageBox {
        VoltageBox {
            v_min: region.v_min,
            v_max: region.v_max,
            delta_center: region.delta_center,
            delta_halfwidth: region.delta_halfwidth,
        }
    }

    pub fn contains(&self, phase: Phase, v: Phasor) -> bool {
        let m = v.norm();
        let off = wrap_angle(v.arg() - self.delta_center[phase.index()]);
        m >= self.v_min - BOX_EPS
            && m <= self.v_max + BOX_EPS
            && off.abs() <= self.delta_halfwidth + BOX_EPS
    }

    fn matches(&self, region: &FitRegion) -> bool {
        *self == VoltageBox::from_region(region)
    }
}

fn real_block(z: Phasor) -> [[f64; 2]; 2] {
    [[z.re, -z.im], [z.im, z.re]]
}

fn mul2(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Assignment-independent data: topology, cumulative path impedances and
/// common ancestors. Building it once lets a search assemble many systems.
pub struct LtupfModel<'a> {
    net: &'a Network,
    coeffs: &'a LinCoeffs,
    topo: Topology,
    /// Customer positions in `net.customers()`, ascending by id.
    order: Vec<usize>,
    cust_node: Vec<usize>,
    path_z: Vec<PhaseMatrix>,
    /// Common ancestor of each pair of customer nodes, indexed `[k][l]`.
    lca: Vec<Vec<usize>>,
}

impl<'a> LtupfModel<'a> {
    pub fn new(net: &'a Network, coeffs: &'a LinCoeffs) -> Result<Self> {
        let topo = Topology::build(net)?;
        let segs = net.segments();
        let zero = Phasor::new(0.0, 0.0);
        let mut path_z = vec![[[zero; 3]; 3]; topo.node_count()];
        let mut parent = vec![usize::MAX; topo.node_count()];
        for &s in topo.order() {
            let (f, t) = (topo.index_of(segs[s].from), topo.index_of(segs[s].to));
            parent[t] = f;
            for r in 0..3 {
                for c in 0..3 {
                    path_z[t][r][c] = path_z[f][r][c] + segs[s].z[r][c];
                }
            }
        }

        let mut order: Vec<usize> = (0..net.customers().len()).collect();
        order.sort_by_key(|&i| net.customers()[i].id);
        let cust_node: Vec<usize> = order
            .iter()
            .map(|&i| topo.index_of(net.customers()[i].node))
            .collect();

        let lca_of = |mut a: usize, mut b: usize| {
            while topo.depth(a) > topo.depth(b) {
                a = parent[a];
            }
            while topo.depth(b) > topo.depth(a) {
                b = parent[b];
            }
            while a != b {
                a = parent[a];
                b = parent[b];
            }
            a
        };
        let distinct: BTreeSet<usize> = cust_node.iter().copied().collect();
        let mut node_lca: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &a in &distinct {
            for &b in &distinct {
                if a <= b {
                    node_lca.insert((a, b), lca_of(a, b));
                }
            }
        }
        let lca = cust_node
            .iter()
            .map(|&a| {
                cust_node
                    .iter()
                    .map(|&b| node_lca[&(a.min(b), a.max(b))])
                    .collect()
            })
            .collect();

        Ok(LtupfModel {
            net,
            coeffs,
            topo,
            order,
            cust_node,
            path_z,
            lca,
        })
    }

    pub fn assemble(&self, asg: &Assignment) -> Result<LtupfSystem<'_>> {
        asg.check(self.net)?;
        let custs = self.net.customers();
        let n = self.order.len();
        let phases: Vec<Phase> = self
            .order
            .iter()
            .map(|&i| asg.phase(custs[i].id).expect("checked"))
            .collect();
        let rv = self.net.root_voltage();

        let mut a = DMatrix::<f64>::zeros(2 * n, 2 * n);
        let mut b = DVector::<f64>::zeros(2 * n);
        for k in 0..n {
            let c = &custs[self.order[k]];
            let pc = self.coeffs.phase(phases[k]);
            // (p - jq) as a real 2x2 operator, times the surrogate's linear part.
            let ms = [[c.p, c.q], [-c.q, c.p]];
            let kk = [[pc.kx, pc.ky], [pc.hx, pc.hy]];
            let ak = mul2(&ms, &kk);

            let v0 = rv[phases[k].index()];
            let rhs = [
                ak[0][0] * v0.re + ak[0][1] * v0.im + ms[0][0] * pc.bx + ms[0][1] * pc.by,
                ak[1][0] * v0.re + ak[1][1] * v0.im + ms[1][0] * pc.bx + ms[1][1] * pc.by,
            ];
            b[2 * k] = rhs[0];
            b[2 * k + 1] = rhs[1];

            for l in 0..n {
                let mut d = self.path_z[self.lca[k][l]][phases[k].index()][phases[l].index()];
                if k == l {
                    d += c.z_service;
                }
                let blk = mul2(&ak, &real_block(d));
                for i in 0..2 {
                    for j in 0..2 {
                        a[(2 * k + i, 2 * l + j)] =
                            blk[i][j] + if k == l && i == j { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        Ok(LtupfSystem {
            model: self,
            phases,
            matrix: a,
            rhs: b,
        })
    }
}

/// Linear system for one fixed assignment. Unknown pairs `(2k, 2k+1)` are the
/// real and imaginary current of the `k`-th customer in ascending id order.
pub struct LtupfSystem<'a> {
    model: &'a LtupfModel<'a>,
    phases: Vec<Phase>,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl LtupfSystem<'_> {
    /// Customer ids in unknown order.
    pub fn customers(&self) -> Vec<CustomerId> {
        self.model
            .order
            .iter()
            .map(|&i| self.model.net.customers()[i].id)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LtupfSolution {
    pub node_voltage: BTreeMap<(NodeId, Phase), Phasor>,
    pub customer_voltage: BTreeMap<CustomerId, Phasor>,
    pub customer_current: BTreeMap<CustomerId, Phasor>,
    pub segment_current: BTreeMap<(usize, Phase), Phasor>,
    /// `max |A x - b|` of the solved system.
    pub residual: f64,
    /// Every node voltage inside the box.
    pub feasible: bool,
}

/// Builds the linear system for a fixed assignment.
pub fn assemble_ltupf<'a>(model: &'a LtupfModel<'a>, asg: &Assignment) -> Result<LtupfSystem<'a>> {
    model.assemble(asg)
}

/// Dense LU with partial pivoting, then exact back-substitution of branch
/// currents, node voltages and customer voltages.
pub fn solve_ltupf(system: &LtupfSystem<'_>, vbox: &VoltageBox) -> Result<LtupfSolution> {
    let model = system.model;
    let net = model.net;
    let n = system.phases.len();
    let x = if n == 0 {
        DVector::zeros(0)
    } else {
        let x = system
            .matrix
            .clone()
            .lu()
            .solve(&system.rhs)
            .ok_or(Error::SingularSystem)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem);
        }
        x
    };
    let residual = (&system.matrix * &x - &system.rhs).amax();

    let currents: Vec<Phasor> = (0..n)
        .map(|k| Phasor::new(x[2 * k], x[2 * k + 1]))
        .collect();
    let topo = &model.topo;
    let segs = net.segments();
    let zero = Phasor::new(0.0, 0.0);

    let mut inj = vec![[zero; 3]; topo.node_count()];
    for k in 0..n {
        inj[model.cust_node[k]][system.phases[k].index()] += currents[k];
    }
    let mut i_seg = vec![[zero; 3]; segs.len()];
    for &s in topo.order().iter().rev() {
        let (f, t) = (topo.index_of(segs[s].from), topo.index_of(segs[s].to));
        i_seg[s] = inj[t];
        for ph in 0..3 {
            let add = inj[t][ph];
            inj[f][ph] += add;
        }
    }
    let mut v = vec![net.root_voltage(); topo.node_count()];
    for &s in topo.order() {
        let (f, t) = (topo.index_of(segs[s].from), topo.index_of(segs[s].to));
        for ph in 0..3 {
            let drop: Phasor = (0..3).map(|ps| segs[s].z[ph][ps] * i_seg[s][ps]).sum();
            v[t][ph] = v[f][ph] - drop;
        }
    }

    let mut node_voltage = BTreeMap::new();
    let mut feasible = true;
    for &node in net.nodes() {
        for ph in Phase::ALL {
            let val = v[topo.index_of(node)][ph.index()];
            feasible &= vbox.contains(ph, val);
            node_voltage.insert((node, ph), val);
        }
    }
    let mut customer_voltage = BTreeMap::new();
    let mut customer_current = BTreeMap::new();
    for k in 0..n {
        let c = &net.customers()[model.order[k]];
        let u = v[model.cust_node[k]][system.phases[k].index()];
        customer_voltage.insert(c.id, u - c.z_service * currents[k]);
        customer_current.insert(c.id, currents[k]);
    }
    let mut segment_current = BTreeMap::new();
    for (s, cur) in i_seg.iter().enumerate() {
        for ph in Phase::ALL {
            segment_current.insert((s, ph), cur[ph.index()]);
        }
    }
    Ok(LtupfSolution {
        node_voltage,
        customer_voltage,
        customer_current,
        segment_current,
        residual,
        feasible,
    })
}

/// Convenience: assemble and solve for one assignment.
pub fn ltupf(
    net: &Network,
    asg: &Assignment,
    coeffs: &LinCoeffs,
    vbox: &VoltageBox,
) -> Result<LtupfSolution> {
    let model = LtupfModel::new(net, coeffs)?;
    let sys = model.assemble(asg)?;
    solve_ltupf(&sys, vbox)
}

/// Largest pairwise gap in per-phase total active or reactive demand.
pub fn imbalance_objective(net: &Network, asg: &Assignment) -> f64 {
    let mut custs: Vec<_> = net.customers().iter().collect();
    custs.sort_by_key(|c| c.id);
    let mut p = [0.0; 3];
    let mut q = [0.0; 3];
    for c in custs {
        if let Some(ph) = asg.phase(c.id) {
            p[ph.index()] += c.p;
            q[ph.index()] += c.q;
        }
    }
    spread(&p).max(spread(&q))
}

fn spread(v: &[f64; 3]) -> f64 {
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    hi - lo
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchOptions {
    /// Upper bound on the number of flexible customers (3^F candidates).
    pub flex_cap: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { flex_cap: 16 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchStatus {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchBest {
    pub assignment: Assignment,
    pub objective: f64,
    pub solution: LtupfSolution,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub best: Option<SearchBest>,
    /// Candidates whose linear system was solved.
    pub explored: usize,
    pub status: SearchStatus,
    /// Worst linear-system residual seen over explored candidates.
    pub max_residual: f64,
}

/// Candidate phase vectors over `flex` (ascending id), in the order the
/// search visits them: ascending `U_x`, ties by lexicographic phase vector.
pub fn candidate_order(net: &Network, flex: &[CustomerId]) -> Vec<(f64, Vec<Phase>)> {
    let searched: BTreeSet<CustomerId> = flex.iter().copied().collect();
    let mut custs: Vec<_> = net.customers().iter().collect();
    custs.sort_by_key(|c| c.id);
    let mut base_p = [0.0; 3];
    let mut base_q = [0.0; 3];
    for c in custs.iter().filter(|c| !searched.contains(&c.id)) {
        base_p[c.initial_phase.index()] += c.p;
        base_q[c.initial_phase.index()] += c.q;
    }
    let loads: Vec<(f64, f64)> = flex
        .iter()
        .map(|id| {
            let c = net.customer(*id).expect("flexible id exists");
            (c.p, c.q)
        })
        .collect();

    let f = flex.len();
    let total = 3usize.pow(f as u32);
    let mut keyed: Vec<(f64, u64)> = Vec::with_capacity(total);
    let mut digits = vec![0usize; f];
    for code in 0..total as u64 {
        let (mut p, mut q) = (base_p, base_q);
        for (k, &d) in digits.iter().enumerate() {
            p[d] += loads[k].0;
            q[d] += loads[k].1;
        }
        keyed.push((spread(&p).max(spread(&q)), code));
        // Odometer with the first customer as the most significant digit, so
        // `code` order is lexicographic order on the phase vector.
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < 3 {
                break;
            }
            *d = 0;
        }
    }
    keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed
        .into_iter()
        .map(|(u, code)| {
            let mut phases = vec![Phase::A; f];
            let mut rest = code;
            for slot in phases.iter_mut().rev() {
                *slot = Phase::from_index((rest % 3) as usize);
                rest /= 3;
            }
            (u, phases)
        })
        .collect()
}

/// Minimum-imbalance assignment of the `flexible` customers whose
/// linearized power flow stays inside `vbox`. Customers outside `flexible`
/// keep their initial phase.
pub fn assignment_search(
    net: &Network,
    coeffs: &LinCoeffs,
    vbox: &VoltageBox,
    flexible: &[CustomerId],
    opts: &SearchOptions,
) -> Result<SearchOutcome> {
    if !vbox.matches(&coeffs.region) {
        return Err(Error::InvalidOptions(
            "voltage box differs from the surrogate's fit region".into(),
        ));
    }
    let flex: Vec<CustomerId> = flexible
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    for id in &flex {
        match net.customer(*id) {
            None => return Err(Error::UnknownCustomer(*id)),
            Some(c) if !c.flexible => return Err(Error::InflexibleCustomer(*id)),
            Some(_) => {}
        }
    }
    if flex.len() > opts.flex_cap {
        return Err(Error::FlexCapExceeded {
            count: flex.len(),
            cap: opts.flex_cap,
        });
    }

    let model = LtupfModel::new(net, coeffs)?;
    let mut explored = 0;
    let mut max_residual: f64 = 0.0;
    let mut last = f64::NEG_INFINITY;
    for (u, phases) in candidate_order(net, &flex) {
        debug_assert!(u >= last, "candidates must be visited in ascending U_x");
        last = u;
        let choice: BTreeMap<CustomerId, Phase> = flex.iter().copied().zip(phases).collect();
        let asg = resolve_assignment(net, &choice)?;
        let sol = solve_ltupf(&model.assemble(&asg)?, vbox)?;
        explored += 1;
        max_residual = max_residual.max(sol.residual);
        if sol.feasible {
            let objective = imbalance_objective(net, &asg);
            return Ok(SearchOutcome {
                best: Some(SearchBest {
                    assignment: asg,
                    objective,
                    solution: sol,
                }),
                explored,
                status: SearchStatus::Optimal,
                max_residual,
            });
        }
    }
    Ok(SearchOutcome {
        best: None,
        explored,
        status: SearchStatus::Infeasible,
        max_residual,
    })
}

//! Feeder, customer and phase-assignment types.
//!
//! All electrical quantities are per-unit on a common base. Line impedances are
//! 3x3 phase-frame matrices (neutral already eliminated). Customer ids are
//! globally unique; each customer records the node it hangs off.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex per-unit quantity (voltage, current or impedance).
pub type Phasor = Complex64;

/// Impedance matrix of a line segment, indexed `[from_phase][to_phase]`.
pub type PhaseMatrix = [[Phasor; 3]; 3];

pub fn polar_deg(magnitude: f64, degrees: f64) -> Phasor {
    Phasor::from_polar(magnitude, degrees.to_radians())
}

/// Angle in degrees, in (-180, 180].
pub fn angle_deg(v: Phasor) -> f64 {
    let a = v.arg().to_degrees();
    if a <= -180.0 {
        a + 360.0
    } else {
        a
    }
}

/// Wraps an angle difference in radians into (-pi, pi].
pub fn wrap_angle(mut a: f64) -> f64 {
    use std::f64::consts::PI;
    a %= 2.0 * PI;
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

fn is_finite(v: Phasor) -> bool {
    v.re.is_finite() && v.im.is_finite()
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Phase {
        Phase::ALL[i]
    }

    pub fn letter(self) -> char {
        match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "a" | "A" => Ok(Phase::A),
            "b" | "B" => Ok(Phase::B),
            "c" | "C" => Ok(Phase::C),
            other => Err(format!("unknown phase '{other}'")),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CustomerId(pub u32);

impl fmt::Display for CustomerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineSegment {
    pub from: NodeId,
    pub to: NodeId,
    pub z: PhaseMatrix,
}

impl LineSegment {
    pub fn new(from: NodeId, to: NodeId, z: PhaseMatrix) -> Self {
        Self { from, to, z }
    }

    /// Segment whose phases are uncoupled, each with impedance `z`.
    pub fn diagonal(from: NodeId, to: NodeId, z: Phasor) -> Self {
        let zero = Phasor::new(0.0, 0.0);
        let mut m = [[zero; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = z;
        }
        Self { from, to, z: m }
    }

    /// Symmetric segment with self impedance `zs` and mutual impedance `zm`.
    pub fn coupled(from: NodeId, to: NodeId, zs: Phasor, zm: Phasor) -> Self {
        let mut m = [[zm; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = zs;
        }
        Self { from, to, z: m }
    }
}

/// Single-phase PQ customer behind a service drop.
#[derive(Clone, Debug, PartialEq)]
pub struct Customer {
    pub id: CustomerId,
    pub node: NodeId,
    /// Net active demand; negative when exporting.
    pub p: f64,
    pub q: f64,
    pub z_service: Phasor,
    /// Fitted with a phase-switching device.
    pub flexible: bool,
    pub initial_phase: Phase,
}

/// A structural defect found by [`validate_network`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NonFinite(String),
    SelfLoop {
        segment: usize,
    },
    Cycle {
        segment: usize,
    },
    Disconnected(NodeId),
    Misoriented {
        segment: usize,
    },
    AsymmetricImpedance {
        segment: usize,
        row: Phase,
        col: Phase,
    },
    NonPositiveResistance {
        segment: usize,
        phase: Phase,
    },
    DuplicateCustomer(CustomerId),
    DanglingCustomer {
        customer: CustomerId,
        node: NodeId,
    },
    CustomerAtRoot(CustomerId),
    NegativeServiceResistance(CustomerId),
    ZeroRootVoltage(Phase),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Violation::SelfLoop { segment } => write!(f, "segment {segment} is a self-loop"),
            Violation::Cycle { segment } => write!(f, "segment {segment} closes a cycle"),
            Violation::Disconnected(n) => write!(f, "node {n} is not connected to the root"),
            Violation::Misoriented { segment } => {
                write!(f, "segment {segment} points towards the root")
            }
            Violation::AsymmetricImpedance { segment, row, col } => {
                write!(f, "segment {segment}: z[{row}{col}] != z[{col}{row}]")
            }
            Violation::NonPositiveResistance { segment, phase } => {
                write!(
                    f,
                    "segment {segment}: z[{phase}{phase}] has non-positive resistance"
                )
            }
            Violation::DuplicateCustomer(c) => write!(f, "customer id {c} is used twice"),
            Violation::DanglingCustomer { customer, node } => {
                write!(f, "customer {customer} references unknown node {node}")
            }
            Violation::CustomerAtRoot(c) => write!(f, "customer {c} is attached to the root"),
            Violation::NegativeServiceResistance(c) => {
                write!(f, "customer {c}: service drop has negative resistance")
            }
            Violation::ZeroRootVoltage(p) => write!(f, "root voltage of phase {p} is zero"),
        }
    }
}

/// Radial feeder. Immutable once built; use [`Network::with_customers`] to
/// derive load variants.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    nodes: Vec<NodeId>,
    segments: Vec<LineSegment>,
    root: NodeId,
    root_voltage: [Phasor; 3],
    customers: Vec<Customer>,
}

impl Network {
    /// The node set is the root plus every segment endpoint.
    pub fn new(
        root: NodeId,
        root_voltage: [Phasor; 3],
        segments: Vec<LineSegment>,
        customers: Vec<Customer>,
    ) -> Self {
        let mut nodes: BTreeSet<NodeId> = BTreeSet::new();
        nodes.insert(root);
        for s in &segments {
            nodes.insert(s.from);
            nodes.insert(s.to);
        }
        Self {
            nodes: nodes.into_iter().collect(),
            segments,
            root,
            root_voltage,
            customers,
        }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn segments(&self) -> &[LineSegment] {
        &self.segments
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn root_voltage(&self) -> [Phasor; 3] {
        self.root_voltage
    }

    pub fn customers(&self) -> &[Customer] {
        &self.customers
    }

    pub fn customer(&self, id: CustomerId) -> Option<&Customer> {
        self.customers.iter().find(|c| c.id == id)
    }

    pub fn with_customers(&self, customers: Vec<Customer>) -> Network {
        Network::new(
            self.root,
            self.root_voltage,
            self.segments.clone(),
            customers,
        )
    }

    /// Ids of customers fitted with a PSD, ascending.
    pub fn flexible_ids(&self) -> Vec<CustomerId> {
        let mut ids: Vec<_> = self
            .customers
            .iter()
            .filter(|c| c.flexible)
            .map(|c| c.id)
            .collect();
        ids.sort();
        ids
    }

    /// Same loads with every customer's initial phase replaced by its phase in `asg`.
    pub fn with_initial_phases(&self, asg: &Assignment) -> Network {
        let customers = self
            .customers
            .iter()
            .map(|c| Customer {
                initial_phase: asg.phase(c.id).unwrap_or(c.initial_phase),
                ..c.clone()
            })
            .collect();
        self.with_customers(customers)
    }
}

/// Returns every structural violation; empty means the network is a valid
/// radial feeder rooted at its root node.
pub fn validate_network(net: &Network) -> Vec<Violation> {
    let mut out = Vec::new();

    for (i, v) in net.root_voltage.iter().enumerate() {
        if !is_finite(*v) {
            out.push(Violation::NonFinite(format!(
                "root voltage {}",
                Phase::from_index(i)
            )));
        } else if v.norm() <= 0.0 {
            out.push(Violation::ZeroRootVoltage(Phase::from_index(i)));
        }
    }

    for (k, seg) in net.segments.iter().enumerate() {
        if seg.z.iter().flatten().any(|z| !is_finite(*z)) {
            out.push(Violation::NonFinite(format!("segment {k} impedance")));
            continue;
        }
        for r in 0..3 {
            for c in (r + 1)..3 {
                let (a, b) = (seg.z[r][c], seg.z[c][r]);
                if (a - b).norm() > 1e-12 * (a.norm() + b.norm()) {
                    out.push(Violation::AsymmetricImpedance {
                        segment: k,
                        row: Phase::from_index(r),
                        col: Phase::from_index(c),
                    });
                }
            }
            if seg.z[r][r].re <= 0.0 {
                out.push(Violation::NonPositiveResistance {
                    segment: k,
                    phase: Phase::from_index(r),
                });
            }
        }
    }

    // Union-find over nodes: any segment joining an already connected pair closes a cycle.
    let index: BTreeMap<NodeId, usize> =
        net.nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut parent: Vec<usize> = (0..net.nodes.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut tree_edges = Vec::new();
    for (k, seg) in net.segments.iter().enumerate() {
        if seg.from == seg.to {
            out.push(Violation::SelfLoop { segment: k });
            continue;
        }
        let (a, b) = (
            find(&mut parent, index[&seg.from]),
            find(&mut parent, index[&seg.to]),
        );
        if a == b {
            out.push(Violation::Cycle { segment: k });
        } else {
            parent[a] = b;
            tree_edges.push(k);
        }
    }

    // Undirected BFS from the root fixes which end of each segment is upstream.
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); net.nodes.len()];
    for &k in &tree_edges {
        let (f, t) = (index[&net.segments[k].from], index[&net.segments[k].to]);
        adj[f].push((t, k));
        adj[t].push((f, k));
    }
    let mut seen = vec![false; net.nodes.len()];
    let root = index[&net.root];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &(v, k) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                if index[&net.segments[k].from] != u {
                    out.push(Violation::Misoriented { segment: k });
                }
                queue.push_back(v);
            }
        }
    }
    for (i, s) in seen.iter().enumerate() {
        if !s {
            out.push(Violation::Disconnected(net.nodes[i]));
        }
    }

    let mut ids = BTreeSet::new();
    for c in &net.customers {
        if !ids.insert(c.id) {
            out.push(Violation::DuplicateCustomer(c.id));
        }
        if !c.p.is_finite() || !c.q.is_finite() || !is_finite(c.z_service) {
            out.push(Violation::NonFinite(format!("customer {}", c.id)));
        }
        if !index.contains_key(&c.node) {
            out.push(Violation::DanglingCustomer {
                customer: c.id,
                node: c.node,
            });
        } else if c.node == net.root {
            out.push(Violation::CustomerAtRoot(c.id));
        }
        if c.z_service.re < 0.0 {
            out.push(Violation::NegativeServiceResistance(c.id));
        }
    }

    out
}

fn ensure_valid(net: &Network) -> Result<()> {
    let v = validate_network(net);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidNetwork(v))
    }
}

/// Radial structure of a validated network, with nodes indexed densely in
/// `net.nodes()` order.
#[derive(Clone, Debug)]
pub struct Topology {
    order: Vec<usize>,
    node_index: BTreeMap<NodeId, usize>,
    parent_segment: Vec<Option<usize>>,
    depth: Vec<usize>,
}

impl Topology {
    pub fn build(net: &Network) -> Result<Topology> {
        ensure_valid(net)?;
        let node_index: BTreeMap<NodeId, usize> =
            net.nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); net.nodes.len()];
        for (k, seg) in net.segments.iter().enumerate() {
            outgoing[node_index[&seg.from]].push(k);
        }
        let mut order = Vec::with_capacity(net.segments.len());
        let mut parent_segment = vec![None; net.nodes.len()];
        let mut depth = vec![0; net.nodes.len()];
        let mut queue = VecDeque::from([node_index[&net.root]]);
        while let Some(u) = queue.pop_front() {
            for &k in &outgoing[u] {
                let v = node_index[&net.segments[k].to];
                parent_segment[v] = Some(k);
                depth[v] = depth[u] + 1;
                order.push(k);
                queue.push_back(v);
            }
        }
        Ok(Topology {
            order,
            node_index,
            parent_segment,
            depth,
        })
    }

    /// Segment indices, root-outward.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn index_of(&self, node: NodeId) -> usize {
        self.node_index[&node]
    }

    pub fn parent_segment(&self, node_idx: usize) -> Option<usize> {
        self.parent_segment[node_idx]
    }

    pub fn depth(&self, node_idx: usize) -> usize {
        self.depth[node_idx]
    }

    pub fn node_count(&self) -> usize {
        self.depth.len()
    }
}

/// Segments ordered so each one follows the segment feeding its `from` node.
/// Reversing the result gives a leaf-to-root order.
pub fn topological_order(net: &Network) -> Result<Vec<usize>> {
    Ok(Topology::build(net)?.order)
}

/// Phase of every customer. Inflexible customers always sit on their initial
/// phase.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    phase_of: BTreeMap<CustomerId, Phase>,
}

impl Assignment {
    /// Every customer on its initial phase.
    pub fn initial(net: &Network) -> Assignment {
        Assignment {
            phase_of: net
                .customers
                .iter()
                .map(|c| (c.id, c.initial_phase))
                .collect(),
        }
    }

    pub fn phase(&self, id: CustomerId) -> Option<Phase> {
        self.phase_of.get(&id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (CustomerId, Phase)> + '_ {
        self.phase_of.iter().map(|(c, p)| (*c, *p))
    }

    pub fn len(&self) -> usize {
        self.phase_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase_of.is_empty()
    }

    /// Checks the assignment is complete for `net` and keeps inflexible
    /// customers on their initial phase.
    pub fn check(&self, net: &Network) -> Result<()> {
        if self.phase_of.len() != net.customers.len() {
            return Err(Error::InvalidAssignment(format!(
                "{} entries for {} customers",
                self.phase_of.len(),
                net.customers.len()
            )));
        }
        for c in &net.customers {
            match self.phase(c.id) {
                None => {
                    return Err(Error::InvalidAssignment(format!(
                        "customer {} missing",
                        c.id
                    )))
                }
                Some(p) if !c.flexible && p != c.initial_phase => {
                    return Err(Error::InflexibleCustomer(c.id))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Customers whose phase differs from their initial phase:
    /// `(customer, from, to)`, ascending by id.
    pub fn switches(&self, net: &Network) -> Vec<(CustomerId, Phase, Phase)> {
        let mut out: Vec<_> = net
            .customers
            .iter()
            .filter_map(|c| {
                let p = self.phase(c.id)?;
                (p != c.initial_phase).then_some((c.id, c.initial_phase, p))
            })
            .collect();
        out.sort_by_key(|s| s.0);
        out
    }
}

/// Builds the assignment that moves flexible customers per `flexible_choice`
/// and leaves everyone else on their initial phase.
pub fn resolve_assignment(
    net: &Network,
    flexible_choice: &BTreeMap<CustomerId, Phase>,
) -> Result<Assignment> {
    for id in flexible_choice.keys() {
        match net.customer(*id) {
            None => return Err(Error::UnknownCustomer(*id)),
            Some(c) if !c.flexible => return Err(Error::InflexibleCustomer(*id)),
            Some(_) => {}
        }
    }
    let phase_of = net
        .customers
        .iter()
        .map(|c| {
            (
                c.id,
                flexible_choice
                    .get(&c.id)
                    .copied()
                    .unwrap_or(c.initial_phase),
            )
        })
        .collect();
    Ok(Assignment { phase_of })
}

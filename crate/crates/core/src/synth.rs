//! Seeded synthetic feeders.
//!
//! Real LV feeder data is rarely published with loads attached, so tests and
//! demos use random radial trees with Kron-reduced four-wire style impedances
//! (self impedance roughly twice the mutual term).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{polar_deg, Customer, CustomerId, LineSegment, Network, NodeId, Phase, Phasor};

/// Balanced 1.05 pu root with phase b leading by 120 degrees.
pub fn nominal_root_voltage() -> [Phasor; 3] {
    [
        polar_deg(1.05, 0.0),
        polar_deg(1.05, 120.0),
        polar_deg(1.05, -120.0),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeederSpec {
    /// Nodes including the root.
    pub nodes: usize,
    pub customers: usize,
    pub z_self: Phasor,
    pub z_mutual: Phasor,
    /// Relative spread applied to each segment's impedances.
    pub z_jitter: f64,
    /// Probability that a new node extends the previous one rather than
    /// branching from a random earlier node.
    pub chain_bias: f64,
    pub p_range: (f64, f64),
    /// Power factor range for `q = p * tan(acos(pf))`.
    pub pf_range: (f64, f64),
    pub z_service: Phasor,
    /// PSD-equipped customers are ids `1, 1 + k, 1 + 2k, ...`.
    pub psd_every: Option<usize>,
}

impl Default for FeederSpec {
    fn default() -> Self {
        FeederSpec {
            nodes: 31,
            customers: 77,
            z_self: Phasor::new(0.0040, 0.0016),
            z_mutual: Phasor::new(0.0018, 0.0007),
            z_jitter: 0.3,
            chain_bias: 0.7,
            p_range: (0.005, 0.02),
            pf_range: (0.92, 0.99),
            z_service: Phasor::new(0.002, 0.0004),
            psd_every: Some(8),
        }
    }
}

pub fn random_feeder(spec: &FeederSpec, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::with_capacity(spec.nodes.saturating_sub(1));
    for i in 1..spec.nodes {
        let parent = if i == 1 || rng.gen_bool(spec.chain_bias) {
            i - 1
        } else {
            rng.gen_range(1..i)
        };
        let s = 1.0 + spec.z_jitter * rng.gen_range(-1.0..1.0);
        segments.push(LineSegment::coupled(
            NodeId(parent as u32),
            NodeId(i as u32),
            spec.z_self * s,
            spec.z_mutual * s,
        ));
    }
    let customers = (1..=spec.customers)
        .map(|id| {
            let p = rng.gen_range(spec.p_range.0..=spec.p_range.1);
            let pf: f64 = rng.gen_range(spec.pf_range.0..=spec.pf_range.1);
            Customer {
                id: CustomerId(id as u32),
                node: NodeId(rng.gen_range(1..spec.nodes) as u32),
                p,
                q: p * pf.acos().tan(),
                z_service: spec.z_service * rng.gen_range(0.5..1.5),
                flexible: spec.psd_every.is_some_and(|k| (id - 1) % k == 0),
                initial_phase: Phase::from_index(rng.gen_range(0..3)),
            }
        })
        .collect();
    Network::new(NodeId(0), nominal_root_voltage(), segments, customers)
}

/// Knobs for [`case_study_feeder`].
#[derive(Clone, Debug, PartialEq)]
pub struct CaseStudySpec {
    /// Nodes on the main trunk, excluding the root.
    pub trunk: usize,
    /// Laterals hanging off the trunk, each `lateral_len` nodes long.
    pub laterals: usize,
    pub lateral_len: usize,
    pub customers: usize,
    pub z_self: Phasor,
    pub z_mutual: Phasor,
    /// Typical customer demand; ordinary customers draw 0.5x to 1.5x of it.
    pub p_base: f64,
    /// Demand of PSD-equipped customers relative to `p_base`.
    pub psd_load_factor: f64,
    pub psd_every: usize,
}

impl Default for CaseStudySpec {
    fn default() -> Self {
        CaseStudySpec {
            trunk: 18,
            laterals: 3,
            lateral_len: 4,
            customers: 77,
            z_self: Phasor::new(0.028, 0.0112),
            z_mutual: Phasor::new(0.0126, 0.0049),
            p_base: 0.02,
            psd_load_factor: 3.0,
            psd_every: 8,
        }
    }
}

/// Stand-in for a street-level feeder: a trunk with evenly spaced laterals,
/// customers spread along it in id order, PSDs on every `psd_every`-th
/// customer starting at id 1. PSD customers are the heavy loads and start on
/// phases b and c, so scaling phase c up concentrates the stress where
/// switching can relieve it.
pub fn case_study_feeder(spec: &CaseStudySpec, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::new();
    let mut next = 1u32;
    let mut trunk_nodes = Vec::new();
    let mut prev = 0u32;
    for _ in 0..spec.trunk {
        let s = 1.0 + 0.2 * rng.gen_range(-1.0..1.0);
        segments.push(LineSegment::coupled(
            NodeId(prev),
            NodeId(next),
            spec.z_self * s,
            spec.z_mutual * s,
        ));
        trunk_nodes.push(next);
        prev = next;
        next += 1;
    }
    for l in 0..spec.laterals {
        let mut from = trunk_nodes[(l + 1) * spec.trunk / (spec.laterals + 1)];
        for _ in 0..spec.lateral_len {
            let s = 1.0 + 0.2 * rng.gen_range(-1.0..1.0);
            segments.push(LineSegment::coupled(
                NodeId(from),
                NodeId(next),
                spec.z_self * s,
                spec.z_mutual * s,
            ));
            from = next;
            next += 1;
        }
    }
    let n_nodes = (next - 1) as usize;
    let mut psd_seen = 0usize;
    let customers = (1..=spec.customers)
        .map(|id| {
            let flexible = (id - 1) % spec.psd_every == 0;
            let node = NodeId(1 + ((id - 1) * n_nodes / spec.customers) as u32);
            let pf: f64 = rng.gen_range(0.92..=0.99);
            let (p, phase) = if flexible {
                psd_seen += 1;
                let ph = if psd_seen % 5 == 2 || psd_seen % 5 == 4 {
                    Phase::B
                } else {
                    Phase::C
                };
                (spec.p_base * spec.psd_load_factor, ph)
            } else {
                (
                    spec.p_base * rng.gen_range(0.5..1.5),
                    Phase::from_index(rng.gen_range(0..3)),
                )
            };
            Customer {
                id: CustomerId(id as u32),
                node,
                p,
                q: p * pf.acos().tan(),
                z_service: Phasor::new(0.002, 0.0004) * rng.gen_range(0.5..1.5),
                flexible,
                initial_phase: phase,
            }
        })
        .collect();
    Network::new(NodeId(0), nominal_root_voltage(), segments, customers)
}

/// Root, one uncoupled segment of impedance `z`, one customer on `phase`.
pub fn two_bus(z: Phasor, z_service: Phasor, p: f64, q: f64, phase: Phase) -> Network {
    Network::new(
        NodeId(0),
        nominal_root_voltage(),
        vec![LineSegment::diagonal(NodeId(0), NodeId(1), z)],
        vec![Customer {
            id: CustomerId(1),
            node: NodeId(1),
            p,
            q,
            z_service,
            flexible: false,
            initial_phase: phase,
        }],
    )
}

/// Multiplies the demand of every customer initially on `phase`.
pub fn scale_phase_loads(net: &Network, phase: Phase, factor: f64) -> Network {
    let customers = net
        .customers()
        .iter()
        .map(|c| {
            if c.initial_phase == phase {
                Customer {
                    p: c.p * factor,
                    q: c.q * factor,
                    ..c.clone()
                }
            } else {
                c.clone()
            }
        })
        .collect();
    net.with_customers(customers)
}

/// Same network with the flexibility flag replaced per customer.
pub fn with_flexible(net: &Network, flexible: impl Fn(CustomerId) -> bool) -> Network {
    let customers = net
        .customers()
        .iter()
        .map(|c| Customer {
            flexible: flexible(c.id),
            ..c.clone()
        })
        .collect();
    net.with_customers(customers)
}

/// Random permutation of the customer list.
pub fn shuffle_customers(net: &Network, seed: u64) -> Network {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut customers = net.customers().to_vec();
    customers.shuffle(&mut rng);
    net.with_customers(customers)
}

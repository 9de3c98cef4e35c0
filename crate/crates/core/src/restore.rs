//! Feasibility restoration by phase switching, and NTUPF/LTUPF comparison.
//!
//! 1. Solve the nonlinear power flow with every customer on its initial phase.
//!    If the sweep converges the network is feasible as-is.
//! 2. Otherwise search PSD assignments on the linearized model for the
//!    minimum-imbalance one inside the voltage box.
//! 3. Re-solve the nonlinear power flow under that assignment. Convergence
//!    means restored; anything else is reported infeasible. There is no
//!    fallback to the next-best candidate.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linearize::LinCoeffs;
use crate::milp::{assignment_search, ltupf, LtupfSolution, SearchOptions, VoltageBox};
use crate::model::{wrap_angle, Assignment, CustomerId, Network, NodeId, Phase};
use crate::sweep::{ntupf_solve, SolveResult, SweepOptions};

/// Nominal angle of each phase; angles are reported relative to these.
pub const NOMINAL_CENTERS: [f64; 3] = [
    0.0,
    2.0 * std::f64::consts::FRAC_PI_3,
    -2.0 * std::f64::consts::FRAC_PI_3,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    FeasibleInitial,
    Restored,
    Infeasible,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::FeasibleInitial => "feasible_initial",
            Outcome::Restored => "restored",
            Outcome::Infeasible => "infeasible",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RestoreOptions {
    pub sweep: SweepOptions,
    pub search: SearchOptions,
}

/// Per node and phase deviation of a linearized solution from the nonlinear one.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    /// `||V_nt| - |V_lt||`, per-unit.
    pub vm_error: BTreeMap<(NodeId, Phase), f64>,
    /// Wrapped angle difference, radians.
    pub va_error: BTreeMap<(NodeId, Phase), f64>,
    /// Per-phase `(min, max)` of the nonlinear angles relative to the
    /// phase's nominal center, radians.
    pub va_spread: [(f64, f64); 3],
}

impl Comparison {
    pub fn max_vm_error(&self) -> f64 {
        self.vm_error.values().cloned().fold(0.0, f64::max)
    }

    pub fn max_va_error(&self) -> f64 {
        self.va_error.values().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

pub fn compare_solutions(ntupf: &SolveResult, ltupf: &LtupfSolution) -> Result<Comparison> {
    if !ntupf.node_voltage.keys().eq(ltupf.node_voltage.keys()) {
        return Err(Error::MismatchedNodes);
    }
    let mut vm_error = BTreeMap::new();
    let mut va_error = BTreeMap::new();
    let mut va_spread = [(f64::INFINITY, f64::NEG_INFINITY); 3];
    for (key, vn) in &ntupf.node_voltage {
        let vl = ltupf.node_voltage[key];
        vm_error.insert(*key, (vn.norm() - vl.norm()).abs());
        va_error.insert(*key, wrap_angle(vn.arg() - vl.arg()));
        let rel = wrap_angle(vn.arg() - NOMINAL_CENTERS[key.1.index()]);
        let s = &mut va_spread[key.1.index()];
        *s = (s.0.min(rel), s.1.max(rel));
    }
    Ok(Comparison {
        vm_error,
        va_error,
        va_spread,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestoreReport {
    pub outcome: Outcome,
    /// `(customer, from, to)` for every switched PSD, ascending by id.
    pub switch_plan: Vec<(CustomerId, Phase, Phase)>,
    /// The assignment the outcome refers to: the initial one unless restored
    /// or an LTUPF candidate was rejected.
    pub assignment: Assignment,
    /// Imbalance of `assignment`.
    pub objective: f64,
    /// Step 1 sweep at the initial assignment.
    pub initial: SolveResult,
    /// Converged sweep backing a feasible outcome.
    pub ntupf: Option<SolveResult>,
    pub ltupf: Option<LtupfSolution>,
    pub comparison: Option<Comparison>,
    /// Candidates solved by the assignment search (0 if it did not run).
    pub explored: usize,
}

pub fn restore_feasibility(
    net: &Network,
    opts: &RestoreOptions,
    coeffs: &LinCoeffs,
    vbox: &VoltageBox,
) -> Result<RestoreReport> {
    let initial_asg = Assignment::initial(net);
    let initial = ntupf_solve(net, &initial_asg, &opts.sweep)?;

    if initial.converged {
        let lt = ltupf(net, &initial_asg, coeffs, vbox).ok();
        let comparison = lt
            .as_ref()
            .map(|l| compare_solutions(&initial, l))
            .transpose()?;
        return Ok(RestoreReport {
            outcome: Outcome::FeasibleInitial,
            switch_plan: Vec::new(),
            objective: crate::milp::imbalance_objective(net, &initial_asg),
            assignment: initial_asg,
            ntupf: Some(initial.clone()),
            initial,
            ltupf: lt,
            comparison,
            explored: 0,
        });
    }

    let search = assignment_search(net, coeffs, vbox, &net.flexible_ids(), &opts.search)?;
    let Some(best) = search.best else {
        return Ok(RestoreReport {
            outcome: Outcome::Infeasible,
            switch_plan: Vec::new(),
            objective: crate::milp::imbalance_objective(net, &initial_asg),
            assignment: initial_asg,
            initial,
            ntupf: None,
            ltupf: None,
            comparison: None,
            explored: search.explored,
        });
    };

    let verify = ntupf_solve(net, &best.assignment, &opts.sweep)?;
    let plan = best.assignment.switches(net);
    if verify.converged {
        let comparison = compare_solutions(&verify, &best.solution)?;
        Ok(RestoreReport {
            outcome: Outcome::Restored,
            switch_plan: plan,
            assignment: best.assignment,
            objective: best.objective,
            initial,
            ntupf: Some(verify),
            ltupf: Some(best.solution),
            comparison: Some(comparison),
            explored: search.explored,
        })
    } else {
        Ok(RestoreReport {
            outcome: Outcome::Infeasible,
            switch_plan: Vec::new(),
            assignment: best.assignment,
            objective: best.objective,
            initial,
            ntupf: None,
            ltupf: Some(best.solution),
            comparison: None,
            explored: search.explored,
        })
    }
}

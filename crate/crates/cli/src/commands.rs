use phaseflow::linearize::{fit_report, FitRegion, LinCoeffs};
use phaseflow::milp::{imbalance_objective, ltupf, LtupfSolution, SearchOptions, VoltageBox};
use phaseflow::model::{validate_network, wrap_angle, Assignment, Network};
use phaseflow::restore::{
    compare_solutions, restore_feasibility, Comparison, Outcome, RestoreOptions, NOMINAL_CENTERS,
};
use phaseflow::sweep::{ntupf_solve, SolveResult, SweepOptions};
use phaseflow::{NodeId, Phase, Phasor};

use crate::format::parse_network;
use crate::report::{fixed, sci, Report, Table};
use crate::{CliError, EXIT_INFEASIBLE, EXIT_OK, EXIT_RESTORED};

/// Dense grid used for the fit report's validation column.
const VALIDATION_GRID: usize = 101;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RunOptions {
    pub sweep: SweepOptions,
    /// Fit region of the surrogate; doubles as the voltage box.
    pub region: FitRegion,
    pub search: SearchOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommandOutput {
    pub report: Report,
    pub exit: i32,
}

fn load(text: &str) -> Result<Network, CliError> {
    let net = parse_network(text)?.network;
    let violations = validate_network(&net);
    if violations.is_empty() {
        Ok(net)
    } else {
        Err(CliError::Invalid(violations))
    }
}

fn deg(v: Phasor) -> f64 {
    v.arg().to_degrees()
}

fn rotated_deg(ph: Phase, v: Phasor) -> f64 {
    wrap_angle(v.arg() - NOMINAL_CENTERS[ph.index()]).to_degrees()
}

fn node_table(res: &std::collections::BTreeMap<(NodeId, Phase), Phasor>) -> Table {
    let mut t = Table::new("nodes", &["node", "phase", "vm_pu", "va_deg", "va_rot_deg"]);
    for ((n, ph), v) in res {
        t.push(vec![
            n.to_string(),
            ph.to_string(),
            fixed(v.norm(), 10),
            fixed(deg(*v), 8),
            fixed(rotated_deg(*ph, *v), 8),
        ]);
    }
    t
}

fn customer_table(net: &Network, asg: &Assignment, v: Option<&SolveResult>) -> Table {
    let mut t = Table::new(
        "customers",
        &[
            "customer", "node", "flexible", "phase", "p", "q", "vm_pu", "va_deg",
        ],
    );
    let mut custs: Vec<_> = net.customers().iter().collect();
    custs.sort_by_key(|c| c.id);
    for c in custs {
        let (vm, va) = match v.and_then(|r| r.customer_voltage.get(&c.id)) {
            Some(u) => (fixed(u.norm(), 10), fixed(deg(*u), 8)),
            None => ("-".to_string(), "-".to_string()),
        };
        t.push(vec![
            c.id.to_string(),
            c.node.to_string(),
            if c.flexible { "yes" } else { "no" }.to_string(),
            asg.phase(c.id).expect("complete assignment").to_string(),
            c.p.to_string(),
            c.q.to_string(),
            vm,
            va,
        ]);
    }
    t
}

fn comparison_section(rep: &mut Report, nt: &SolveResult, lt: &LtupfSolution, cmp: &Comparison) {
    rep.set("max_vm_error_pu", sci(cmp.max_vm_error()));
    rep.set("max_va_error_deg", sci(cmp.max_va_error().to_degrees()));
    for ph in Phase::ALL {
        let (lo, hi) = cmp.va_spread[ph.index()];
        rep.set(
            &format!("va_rot_range_{ph}_deg"),
            format!(
                "{} {}",
                fixed(lo.to_degrees(), 6),
                fixed(hi.to_degrees(), 6)
            ),
        );
    }
    rep.set("ltupf_in_box", lt.feasible);
    let mut t = Table::new(
        "comparison",
        &[
            "node",
            "phase",
            "vm_ntupf",
            "vm_ltupf",
            "vm_err",
            "va_rot_ntupf_deg",
            "va_rot_ltupf_deg",
            "va_err_deg",
        ],
    );
    for (key, vn) in &nt.node_voltage {
        let vl = lt.node_voltage[key];
        t.push(vec![
            key.0.to_string(),
            key.1.to_string(),
            fixed(vn.norm(), 10),
            fixed(vl.norm(), 10),
            sci(cmp.vm_error[key]),
            fixed(rotated_deg(key.1, *vn), 8),
            fixed(rotated_deg(key.1, vl), 8),
            sci(cmp.va_error[key].to_degrees()),
        ]);
    }
    rep.tables.push(t);
}

fn surrogate(opts: &RunOptions) -> Result<(LinCoeffs, VoltageBox), CliError> {
    let coeffs = LinCoeffs::lsm(&opts.region)?;
    let vbox = VoltageBox::from_region(&opts.region);
    Ok((coeffs, vbox))
}

/// Nonlinear power flow at the initial assignment.
pub fn cmd_solve(text: &str, opts: &RunOptions) -> Result<CommandOutput, CliError> {
    let net = load(text)?;
    let asg = Assignment::initial(&net);
    let res = ntupf_solve(&net, &asg, &opts.sweep)?;
    let mut rep = Report::default();
    rep.set("command", "solve");
    rep.set(
        "status",
        if res.converged {
            "converged"
        } else {
            "not_converged"
        },
    );
    rep.set("iterations", res.iterations);
    rep.set(
        "last_change_pu",
        sci(res.change_history.last().copied().unwrap_or(0.0)),
    );
    rep.set("objective_ux", fixed(imbalance_objective(&net, &asg), 12));
    rep.tables.push(node_table(&res.node_voltage));
    rep.tables.push(customer_table(&net, &asg, Some(&res)));
    Ok(CommandOutput {
        report: rep,
        exit: if res.converged {
            EXIT_OK
        } else {
            EXIT_INFEASIBLE
        },
    })
}

/// LSM and CBM coefficients with their errors over the region.
pub fn cmd_fit(opts: &RunOptions) -> Result<CommandOutput, CliError> {
    let rows = fit_report(&opts.region, VALIDATION_GRID)?;
    let r = &opts.region;
    let mut rep = Report::default();
    rep.set("command", "fit");
    rep.set("v_min", r.v_min);
    rep.set("v_max", r.v_max);
    rep.set(
        "delta_halfwidth_deg",
        fixed(r.delta_halfwidth.to_degrees(), 6),
    );
    rep.set("grid", format!("{}x{}", r.m, r.n));
    rep.set(
        "validation_grid",
        format!("{VALIDATION_GRID}x{VALIDATION_GRID}"),
    );
    let mut t = Table::new(
        "fit",
        &[
            "phase",
            "method",
            "kx",
            "ky",
            "bx",
            "hx",
            "hy",
            "by",
            "max_fit_error",
            "validation_error",
            "unit_slice_error",
        ],
    );
    for row in rows {
        let c = row.coeffs;
        let mut cells = vec![row.phase.to_string(), row.method.to_string()];
        cells.extend(
            [c.kx, c.ky, c.bx, c.hx, c.hy, c.by]
                .iter()
                .map(|v| fixed(*v, 12)),
        );
        cells.extend(
            [
                row.max_fit_error,
                row.validation_error,
                row.unit_slice_error,
            ]
            .iter()
            .map(|v| sci(*v)),
        );
        t.push(cells);
    }
    rep.tables.push(t);
    Ok(CommandOutput {
        report: rep,
        exit: EXIT_OK,
    })
}

/// Phase-switching feasibility restoration.
pub fn cmd_restore(text: &str, opts: &RunOptions) -> Result<CommandOutput, CliError> {
    let net = load(text)?;
    let (coeffs, vbox) = surrogate(opts)?;
    let ropts = RestoreOptions {
        sweep: opts.sweep,
        search: opts.search,
    };
    let r = restore_feasibility(&net, &ropts, &coeffs, &vbox)?;
    let mut rep = Report::default();
    rep.set("command", "restore");
    rep.set("outcome", r.outcome);
    rep.set("initial_converged", r.initial.converged);
    rep.set("initial_iterations", r.initial.iterations);
    rep.set("explored", r.explored);
    rep.set("switches", r.switch_plan.len());
    rep.set("objective_ux", fixed(r.objective, 12));
    if let Some(nt) = &r.ntupf {
        rep.set("final_iterations", nt.iterations);
    }
    let mut plan = Table::new("switch_plan", &["customer", "from", "to"]);
    for (id, from, to) in &r.switch_plan {
        plan.push(vec![id.to_string(), from.to_string(), to.to_string()]);
    }
    rep.tables.push(plan);
    if let Some(nt) = &r.ntupf {
        rep.tables.push(node_table(&nt.node_voltage));
    }
    rep.tables
        .push(customer_table(&net, &r.assignment, r.ntupf.as_ref()));
    if let (Some(nt), Some(lt), Some(cmp)) = (&r.ntupf, &r.ltupf, &r.comparison) {
        comparison_section(&mut rep, nt, lt, cmp);
    }
    let exit = match r.outcome {
        Outcome::FeasibleInitial => EXIT_OK,
        Outcome::Restored => EXIT_RESTORED,
        Outcome::Infeasible => EXIT_INFEASIBLE,
    };
    Ok(CommandOutput { report: rep, exit })
}

/// NTUPF against LTUPF at the initial assignment.
pub fn cmd_compare(text: &str, opts: &RunOptions) -> Result<CommandOutput, CliError> {
    let net = load(text)?;
    let (coeffs, vbox) = surrogate(opts)?;
    let asg = Assignment::initial(&net);
    let nt = ntupf_solve(&net, &asg, &opts.sweep)?;
    let lt = ltupf(&net, &asg, &coeffs, &vbox)?;
    let mut rep = Report::default();
    rep.set("command", "compare");
    rep.set(
        "status",
        if nt.converged {
            "converged"
        } else {
            "not_converged"
        },
    );
    rep.set("iterations", nt.iterations);
    rep.set("ltupf_residual", sci(lt.residual));
    if nt.converged {
        let cmp = compare_solutions(&nt, &lt)?;
        comparison_section(&mut rep, &nt, &lt, &cmp);
    } else {
        rep.set("ltupf_in_box", lt.feasible);
        rep.tables.push(node_table(&lt.node_voltage));
    }
    Ok(CommandOutput {
        report: rep,
        exit: if nt.converged {
            EXIT_OK
        } else {
            EXIT_INFEASIBLE
        },
    })
}

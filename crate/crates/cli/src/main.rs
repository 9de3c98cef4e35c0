use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phaseflow::linearize::FitRegion;
use phaseflow::milp::SearchOptions;
use phaseflow::sweep::SweepOptions;
use phaseflow::synth::{
    case_study_feeder, random_feeder, scale_phase_loads, CaseStudySpec, FeederSpec,
};
use phaseflow::Phase;
use phaseflow_cli::{
    cmd_compare, cmd_fit, cmd_restore, cmd_solve, emit_network, CliError, CommandOutput,
    NetworkFile, RunOptions, EXIT_INPUT,
};

/// Three-phase unbalanced power flow and PSD feasibility restoration for
/// radial LV feeders.
#[derive(Parser)]
#[command(name = "phaseflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Nonlinear power flow at the initial phase assignment.
    Solve(FileArgs),
    /// Fit the LSM and CBM surrogates and report their errors.
    Fit(Common),
    /// Restore feasibility by switching phase-switching devices.
    Restore(FileArgs),
    /// Compare nonlinear and linearized power flow.
    Compare(FileArgs),
    /// Write a synthetic feeder in network file format.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct FileArgs {
    /// Network file.
    network: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Sweep convergence tolerance (pu).
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Voltage magnitude that counts as divergence (pu).
    #[arg(long, default_value_t = 0.3)]
    vfloor: f64,
    /// Lower voltage bound of the fit region and box (pu).
    #[arg(long, default_value_t = 0.95)]
    vmin: f64,
    /// Upper voltage bound of the fit region and box (pu).
    #[arg(long, default_value_t = 1.05)]
    vmax: f64,
    /// Angle half-width around each phase center (degrees).
    #[arg(long, default_value_t = 10.0)]
    ddelta: f64,
    /// Fit grid points per axis.
    #[arg(long, default_value_t = 21)]
    grid: usize,
    /// Most flexible customers the search will enumerate.
    #[arg(long, default_value_t = 16)]
    flex_cap: usize,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trunk-and-laterals feeder with heavy PSD loads instead of a random tree.
    #[arg(long)]
    case_study: bool,
    /// Multiply the demand of every customer initially on phase c.
    #[arg(long, default_value_t = 1.0)]
    scale_phase_c: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions {
            sweep: SweepOptions {
                tol: self.tol,
                max_iter: self.max_iter,
                v_floor: self.vfloor,
            },
            region: FitRegion {
                v_min: self.vmin,
                v_max: self.vmax,
                delta_halfwidth: self.ddelta.to_radians(),
                m: self.grid,
                n: self.grid,
                ..FitRegion::default()
            },
            search: SearchOptions {
                flex_cap: self.flex_cap,
            },
        }
    }
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|source| CliError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let (output, out): (CommandOutput, &Option<PathBuf>) = match &cli.command {
        Command::Solve(a) => (
            cmd_solve(&read(&a.network)?, &a.common.options())?,
            &a.common.out,
        ),
        Command::Fit(c) => (cmd_fit(&c.options())?, &c.out),
        Command::Restore(a) => (
            cmd_restore(&read(&a.network)?, &a.common.options())?,
            &a.common.out,
        ),
        Command::Compare(a) => (
            cmd_compare(&read(&a.network)?, &a.common.options())?,
            &a.common.out,
        ),
        Command::Generate(g) => {
            let net = if g.case_study {
                case_study_feeder(&CaseStudySpec::default(), g.seed)
            } else {
                random_feeder(&FeederSpec::default(), g.seed)
            };
            let net = scale_phase_loads(&net, Phase::C, g.scale_phase_c);
            let mut file = NetworkFile::new(net);
            let kind = if g.case_study { "case-study" } else { "random" };
            file.metadata.insert(
                "description".into(),
                format!(
                    "synthetic {kind} feeder, seed {}, phase c x{}",
                    g.seed, g.scale_phase_c
                ),
            );
            write(&g.out, &emit_network(&file))?;
            return Ok(0);
        }
    };
    write(out, &output.report.render())?;
    Ok(output.exit)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT as u8)
        }
    }
}

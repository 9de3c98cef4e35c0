//! File formats, reports and command implementations behind the `phaseflow`
//! binary. Commands take the network file text and return a [`Report`] plus
//! the process exit status, so they can be driven from tests without
//! touching the filesystem.

pub mod commands;
pub mod format;
pub mod report;

use phaseflow::model::Violation;
use thiserror::Error;

pub use commands::{cmd_compare, cmd_fit, cmd_restore, cmd_solve, CommandOutput, RunOptions};
pub use format::{emit_network, parse_network, NetworkFile};
pub use report::{Report, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RESTORED: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_INPUT: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid network:\n{}", list(.0))]
    Invalid(Vec<Violation>),

    #[error(transparent)]
    Core(#[from] phaseflow::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn list(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("  - {x}"))
        .collect::<Vec<_>>()
        .join("\n")
}

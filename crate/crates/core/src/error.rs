use thiserror::Error;

use crate::model::{CustomerId, Violation};

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {}", join_violations(.0))]
    InvalidNetwork(Vec<Violation>),

    #[error("customer {0} is not part of the network")]
    UnknownCustomer(CustomerId),

    #[error("customer {0} has no phase-switching device")]
    InflexibleCustomer(CustomerId),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("zero-magnitude voltage")]
    ZeroVoltage,

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("rank-deficient sample set ({0} samples)")]
    RankDeficient(usize),

    #[error("singular linear system")]
    SingularSystem,

    #[error("value {y} outside its box [{min}, {max}]")]
    OutOfBox { y: f64, min: f64, max: f64 },

    #[error("{count} flexible customers exceed the enumeration cap of {cap}")]
    FlexCapExceeded { count: usize, cap: usize },

    #[error("solutions cover different node sets")]
    MismatchedNodes,
}

pub type Result<T> = std::result::Result<T, Error>;

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

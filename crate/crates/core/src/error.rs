// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {msg}")]
    Syntax {
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("dangling reference: {0}")]
    Dangling(String),

    #[error("overlapping placement: {a} and {b} share row {row}")]
    Overlap { a: String, b: String, row: u32 },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("infeasible profile: {quantity} target {target:.3} outside reachable range [{min:.3}, {max:.3}]")]
    InfeasibleProfile {
        quantity: &'static str,
        target: f64,
        min: f64,
        max: f64,
    },

    #[error("combinational cycle through {0:?}")]
    CombinationalCycle(Vec<String>),

    #[error("no register group of width {n_key}; best candidates: {candidates:?}")]
    KeyGroupNotFound {
        n_key: usize,
        candidates: Vec<(Vec<String>, f64)>,
    },

    #[error("calibration infeasible: {0}")]
    CalibrationInfeasible(String),

    #[error("no feasible ring oscillator: {constraint} constraint is violated ({detail})")]
    NoFeasibleRo {
        constraint: &'static str,
        detail: String,
    },

    #[error("insufficient free area: short by {shortfall_sites} sites")]
    InsufficientArea { shortfall_sites: u64 },

    #[error("patch does not match design: {0}")]
    PatchMismatch(String),

    #[error("trigger not found in trace")]
    TriggerNotFound,

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

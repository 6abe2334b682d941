use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("cone-boundary return mapping failed: residual {residual:e}")]
    ConeSolve { residual: f64 },

    #[error("displacement solve did not converge after {iterations} iterations: gradient norm {grad_norm:e}")]
    Displacement { iterations: usize, grad_norm: f64 },

    #[error("damage solve did not converge after {iterations} iterations: projected-gradient residual {residual:e}")]
    Damage { iterations: usize, residual: f64 },

    #[error("alternating minimization increased the objective by {increase:e} in sweep {sweep}")]
    NonMonotoneSweep { sweep: usize, increase: f64 },

    #[error("incremental objective {objective:e} exceeds warm-start value {warm_start:e}")]
    WarmStartBeaten { objective: f64, warm_start: f64 },

    #[error("plastic increment outside the dissipation cone in element {element}")]
    OutsideCone { element: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("step {step} (t = {t}): {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: Box<SolverError>,
    },
}

/// Every problem found while validating a scenario, not just the first.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid scenario:\n  {}", .issues.join("\n  "))]
pub struct ValidationError {
    pub issues: Vec<String>,
}

impl ValidationError {
    pub fn single(msg: impl Into<String>) -> Self {
        Self {
            issues: vec![msg.into()],
        }
    }

    pub fn mentions(&self, field: &str) -> bool {
        self.issues.iter().any(|i| i.contains(field))
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Validation(#[from] ValidationError),

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", .path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {source}", .path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{0}")]
    Format(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

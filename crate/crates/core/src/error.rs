//! Error types shared across the simulation pipeline.

use thiserror::Error;

/// A single failed invariant found during configuration validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Dotted path of the offending field, e.g. `grid.dt`.
    pub field: String,
    pub reason: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("failed to parse config: {0}")]
    Parse(String),
    #[error("field `{field}`: {message}")]
    Unit { field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FieldError {
    #[error("potential solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: u32, residual: f64 },
    #[error("conductivity is zero over the whole domain; the operator is singular")]
    SingularSystem,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("stability violation at t = {time} s: concentration reached {min_value:.3e}")]
    StabilityViolation { time: f64, min_value: f64 },
    #[error("snapshot time {requested} s lies beyond the total simulated time {total} s")]
    SnapshotTimeOutOfRange { requested: f64, total: f64 },
    #[error("probe point ({x}, {y}) mm lies outside the domain")]
    OutOfDomain { x: f64, y: f64 },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("field mean is zero; coefficient of variation is undefined")]
    DegenerateField,
}

/// Any failure a single simulation run can produce.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

impl SimError {
    /// True when the failure is a rejected configuration rather than a
    /// runtime breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(self, SimError::Config(e) if !matches!(e, ConfigError::Io(_)))
            || matches!(self, SimError::Transport(TransportError::SnapshotTimeOutOfRange { .. }))
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep requires at least one axis value")]
    EmptyValues,
    #[error("{} sweep member(s) failed:\n{}", .0.len(), format_members(.0))]
    Members(Vec<(f64, SimError)>),
}

fn format_members(failures: &[(f64, SimError)]) -> String {
    failures
        .iter()
        .map(|(v, e)| format!("  - value {v}: {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

//! Error types shared across the toolkit.

use std::fmt;

use thiserror::Error;

/// A single invariant violation found while validating a game description.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    /// A transition row does not sum to 1 (or has entries outside [0, 1]).
    RowNotStochastic { stage: usize, row: usize, sum: f64 },
    /// The initial error distribution does not sum to 1 or has bad entries.
    BadInitialDist { sum: f64 },
    /// cMax < bMax + dMax, so the undominated action c = b + d can be infeasible.
    CapViolation { user: usize },
    /// predicted[t] + errorSupport[j] < 0, which breaks the price denominators.
    NegativePublicState { stage: usize, index: usize, value: f64 },
    /// initialStorage[i] outside [0, bMax_i].
    BadInitialStorage { user: usize },
    /// Utility table has the wrong length or is decreasing somewhere.
    BadUtilityTable { user: usize },
    /// A user must carry exactly one of theta / utilityTable.
    BadUtilitySpec { user: usize },
    /// A parameter required to be strictly positive is not.
    NonPositiveParam { name: &'static str },
    /// Structural problem (wrong vector/matrix dimensions, empty lists, ...).
    Shape(String),
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::RowNotStochastic { stage, row, sum } => {
                write!(f, "transition row {row} at stage {stage} is not stochastic (sum {sum})")
            }
            ValidationIssue::BadInitialDist { sum } => {
                write!(f, "initialDist is not a probability vector (sum {sum})")
            }
            ValidationIssue::CapViolation { user } => {
                write!(f, "user {user}: cMax < bMax + dMax")
            }
            ValidationIssue::NegativePublicState { stage, index, value } => {
                write!(f, "public state at stage {stage}, error index {index} is negative ({value})")
            }
            ValidationIssue::BadInitialStorage { user } => {
                write!(f, "user {user}: initial storage outside [0, bMax]")
            }
            ValidationIssue::BadUtilityTable { user } => {
                write!(f, "user {user}: utility table must have length cMax+1 and be nondecreasing")
            }
            ValidationIssue::BadUtilitySpec { user } => {
                write!(f, "user {user}: exactly one of theta / utilityTable must be given")
            }
            ValidationIssue::NonPositiveParam { name } => {
                write!(f, "parameter {name} must be strictly positive")
            }
            ValidationIssue::Shape(msg) => write!(f, "{msg}"),
        }
    }
}

/// Errors raised by model construction and validation.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid game: {}", format_issues(.0))]
    Invalid(Vec<ValidationIssue>),
    /// The demand-only reduction needs a linear consumption benefit.
    #[error("user {0} has a tabulated utility; the demand-only reduction needs linear benefits")]
    UtilityNotLinear(usize),
}

fn format_issues(issues: &[ValidationIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

/// Errors raised while evaluating rewards and transitions.
#[derive(Debug, Error, PartialEq)]
pub enum PayoffError {
    #[error("user {user}: action (d={d}, c={c}) infeasible at storage {storage}")]
    InfeasibleAction { user: usize, d: u32, c: u32, storage: u32 },
    #[error("stage {0} has no successor stage")]
    NoSuccessorStage(usize),
}

/// Errors raised by the finite-horizon MDP machinery.
#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("joint state space has {size} states per stage, above the cap {cap}")]
    StateSpaceTooLarge { size: usize, cap: usize },
    #[error("invalid MDP: {0}")]
    Invalid(String),
}

/// Errors raised by the generation-panel ingestion.
#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("panel incomplete: missing record for month {month}, day {day}")]
    IncompletePanel { month: usize, day: usize },
    #[error("duplicate record for month {month}, day {day}")]
    DuplicateRecord { month: usize, day: usize },
    #[error("support levels must be nonempty and distinct")]
    EmptySupport,
    #[error("bad record: {0}")]
    BadRecord(String),
}

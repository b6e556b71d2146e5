use thiserror::Error;

/// Every failure mode of the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmmError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `α·n + θ` is within the tolerance of 1/2 (mod 1), so `tan π(α·n+θ)` is singular.
    #[error("phase singularity at n = {site:?}: distance to 1/2 is {distance:e}")]
    PhaseSingularity { site: Vec<i64>, distance: f64 },

    /// The fiber energy `w` is on, or too close to, the cut `[-2, 2]`.
    #[error("branch point: fiber energy w = {re} + {im}i is within {tol:e} of the cut [-2, 2]")]
    BranchPoint { re: f64, im: f64, tol: f64 },

    #[error("argument unwrap failed at node {node}: jump {jump} (grid too coarse)")]
    UnwrapFailure { node: usize, jump: f64 },

    #[error("Neumann series diverges: measured sup|C| = {norm}")]
    SeriesDiverges { norm: f64 },

    #[error("precision exhausted after {depth} certified partial quotients")]
    PrecisionExhausted { depth: usize },

    #[error("rational frequency {p}/{q} detected after {depth} partial quotients")]
    RationalTermination { depth: usize, p: String, q: String },

    #[error("integer budget of {budget_bits} bits exceeded at partial quotient {index}")]
    OverflowBudget { index: usize, budget_bits: u64 },

    #[error("no index n satisfies q_(n+1) >= exp(3/4 beta q_n) within depth {depth}")]
    NoQualifyingIndex { depth: usize },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl SmmError {
    /// Variant name, as reported on stderr and across the C boundary.
    pub fn kind(&self) -> &'static str {
        match self {
            SmmError::InvalidParameter(_) => "InvalidParameter",
            SmmError::PhaseSingularity { .. } => "PhaseSingularity",
            SmmError::BranchPoint { .. } => "BranchPoint",
            SmmError::UnwrapFailure { .. } => "UnwrapFailure",
            SmmError::SeriesDiverges { .. } => "SeriesDiverges",
            SmmError::PrecisionExhausted { .. } => "PrecisionExhausted",
            SmmError::RationalTermination { .. } => "RationalTermination",
            SmmError::OverflowBudget { .. } => "OverflowBudget",
            SmmError::NoQualifyingIndex { .. } => "NoQualifyingIndex",
            SmmError::SolverFailure(_) => "SolverFailure",
            SmmError::Io(_) => "Io",
        }
    }

    /// Process exit code: 2 for domain errors, 4 when a computation or write fails.
    pub fn exit_code(&self) -> i32 {
        match self {
            SmmError::SolverFailure(_) | SmmError::Io(_) => 4,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for SmmError {
    fn from(e: std::io::Error) -> Self {
        SmmError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for SmmError {
    fn from(e: serde_json::Error) -> Self {
        SmmError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SmmError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_and_exit_codes() {
        let e = SmmError::OverflowBudget {
            index: 5,
            budget_bits: 4096,
        };
        assert_eq!(e.kind(), "OverflowBudget");
        assert_eq!(e.exit_code(), 2);
        assert_eq!(SmmError::SolverFailure("x".into()).exit_code(), 4);
        assert_eq!(SmmError::Io("x".into()).exit_code(), 4);
        assert!(SmmError::SeriesDiverges { norm: 1.2 }.to_string().contains("1.2"));
    }
}

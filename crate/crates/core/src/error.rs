use thiserror::Error;

/// Errors surfaced by counting and sampling operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The finite Kotecký–Preiss check failed for an enumerated polymer.
    #[error("Kotecký–Preiss condition violated: {0}")]
    KpViolation(String),

    /// A computed contour weight exceeded the configured decay envelope.
    #[error("contour weight decay violated: {0}")]
    DecayViolation(String),

    /// The requested (regime, label) combination is not supported.
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("region is not simply connected: {0}")]
    NotSimplyConnected(String),

    /// An exhaustive enumeration would exceed its configured budget.
    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("missing constant: {0}")]
    MissingConstant(String),

    /// Free-energy separation was not detected within the volume cap.
    #[error("no free-energy separation found: {0}")]
    Timeout(String),

    /// A matching collection failed its compatibility or label checks.
    #[error("invalid matching collection: {0}")]
    InvalidCollection(String),

    #[error("Ursell cap exceeded: graph has {0} vertices (cap {1})")]
    UrsellCap(usize, usize),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) => 2,
            Error::KpViolation(_)
            | Error::DecayViolation(_)
            | Error::RegimeMismatch(_)
            | Error::NotSimplyConnected(_)
            | Error::InvalidCollection(_)
            | Error::MissingConstant(_) => 3,
            Error::BudgetExceeded(_) | Error::Timeout(_) | Error::UrsellCap(..) => 4,
        }
    }
}

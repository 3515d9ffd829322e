use thiserror::Error;

pub type Result<T> = std::result::Result<T, CrError>;

#[derive(Debug, Error)]
pub enum CrError {
    #[error("point outside bounding lattice: {0}")]
    OutOfDomain(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("grid too coarse: {0}")]
    Resolution(String),

    #[error("mollifier support leaves the domain: {0}")]
    SupportViolation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("solver failed to converge: {0}")]
    SolverDiverged(String),

    #[error("schedule infeasible under supplied constants")]
    Infeasible,

    #[error("inadmissible schedule parameters: {0}")]
    Inadmissible(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

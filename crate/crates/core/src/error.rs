use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter shape mismatch: expected {expected} values, got {got}")]
    ParamShape { expected: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rollout diverged at step {step}: non-finite state")]
    RolloutDivergence { step: usize },

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("specification contains a disjunction and has no product form; use the scenario path")]
    NotProductForm,

    #[error("specification uses ball atoms, which only the scenario path supports")]
    BallAtom,

    #[error("input constraints are not supported by the exact linear path; use the scenario path")]
    InputConstraintsUnsupported,

    #[error("vertex oracle too large: n*N = {0} exceeds 12")]
    OracleTooLarge(usize),

    #[error("risk bound root not bracketed for k={k}, M={m}, beta={beta}")]
    RootNotBracketed { k: usize, m: usize, beta: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown dynamics map `{0}`")]
    UnknownDynamics(String),

    #[error("solver is not deterministic: re-solving the full scenario set changed the solution")]
    DeterminismViolation,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("slot index {slot} out of range (instance has {slots} slots)")]
    SlotOutOfRange { slot: usize, slots: usize },

    #[error("user index {user} out of range (instance has {users} users)")]
    UserOutOfRange { user: usize, users: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("dual point outside the dual domain: {0}")]
    DualInfeasible(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

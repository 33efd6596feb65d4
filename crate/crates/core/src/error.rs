use thiserror::Error;

/// Errors raised while configuring, building or solving a scenario.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing capacity for technology `{0}`")]
    MissingCapacity(String),

    #[error("unknown technology `{0}`")]
    UnknownTechnology(String),

    #[error("problem has no constraint tagged {0}")]
    MissingTag(String),

    #[error("solution is not optimal (status {0:?})")]
    NotOptimal(crate::solver::SolveStatus),

    #[error("scenario `{scenario}`: solver failed with status {status:?}")]
    Solve {
        scenario: String,
        status: crate::solver::SolveStatus,
        diagnostics: String,
    },

    #[error("myopic window {window} (start {start}) is infeasible; carried state of charge {soc:?}")]
    InfeasibleWindow {
        window: usize,
        start: usize,
        soc: Vec<(String, f64)>,
    },

    #[error("weather data: {0}")]
    Weather(String),

    #[error("concavity guard failed: smallest Hessian eigenvalue {0}")]
    NotConcave(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A value fell outside its declared bounds.
    #[error("{field} = {value} outside bounds [{min}, {max}]")]
    OutOfBounds {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    /// A design violates a feasibility constraint.
    #[error("infeasible design: {0}")]
    Infeasible(String),

    /// Vector/matrix dimensions disagree.
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// An operation received an empty input it cannot handle.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A fit cannot proceed (rank deficiency, degenerate spread, too few points).
    #[error("fit failure: {0}")]
    FitFailure(String),

    /// A config value is invalid.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A map or scenario file violates an invariant.
    #[error("invalid file {path}: {reason}")]
    InvalidFile { path: String, reason: String },

    /// Simulator rejected an action or state transition.
    #[error("simulation error: {0}")]
    Sim(String),

    /// Every action is masked; the policy has nothing to choose.
    #[error("all actions masked for the acting platoon")]
    AllActionsMasked,

    /// Optimization terminated without any feasible candidate.
    #[error("no feasible candidate found: {0}")]
    NoFeasible(String),

    /// A checkpoint's shape manifest does not match the policy configuration.
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    /// A loss or gradient became non-finite during training.
    #[error("non-finite value during training: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("toml parse error in {path}: {source}")]
    TomlParse {
        path: String,
        #[source]
        source: toml::de::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

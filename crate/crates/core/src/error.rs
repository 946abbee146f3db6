use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("negative internal energy {0}")]
    NegativeInternalEnergy(f64),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("collision parameters (r, R) are required for the polyatomic channel")]
    MissingRr,

    #[error("{operation} is defined for the {expected} channel only")]
    WrongChannel {
        operation: &'static str,
        expected: &'static str,
    },

    #[error("Povzner order k = {0} must be > 2")]
    PovznerOrder(f64),

    #[error("k* beyond grid: C_k never dropped below {lb_integral:.6e} (last k = {last_k}, C_k = {last_constant:.6e}); extend the grid")]
    KStarBeyondGrid {
        lb_integral: f64,
        last_k: f64,
        last_constant: f64,
    },

    #[error("Povzner constant C_k = {c_k} is not below ||b|| = {norm_b}; A~_k = ||b|| - C_k must be positive")]
    NonPositiveDrift { c_k: f64, norm_b: f64 },

    #[error("moment {name} must be finite and positive, got {value}")]
    DegenerateMoment { name: &'static str, value: f64 },

    #[error("envelope {kind} does not apply: {reason}")]
    EnvelopeMismatch { kind: String, reason: String },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("non-finite moment {what} at t = {time} (step {step})")]
    NonFinite { what: String, time: f64, step: u64 },

    #[error("config error at line {line}: {message}")]
    ConfigAt { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

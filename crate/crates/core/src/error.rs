use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("factor dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid factor index set: {0}")]
    InvalidIndexSet(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not Hermitian (asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPositive { eigenvalue: f64 },

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal {off:e})")]
    NoConvergence { sweeps: usize, off: f64 },

    #[error("state of {entries} entries exceeds the size cap of {cap}")]
    SizeCapExceeded { entries: u128, cap: usize },

    #[error("hidden matrix at site {site} is not unitary (deviation {deviation:e})")]
    NotUnitary { site: usize, deviation: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("requested {requested} sites but only {available} are defined")]
    SitesExhausted { requested: usize, available: usize },

    #[error("initial distribution has zero weight at hidden index {index}")]
    ZeroPrior { index: usize },

    #[error("invalid site range: {0}")]
    InvalidRange(String),

    #[error("symbol {symbol} out of range for physical dimension {d}")]
    SymbolOutOfRange { symbol: usize, d: usize },

    #[error("gauge condition violated at site {site} (deviation {deviation:e})")]
    GaugeViolation { site: usize, deviation: f64 },

    #[error("unknown catalog entry `{0}`")]
    UnknownEntry(String),

    #[error("bad catalog parameters: {0}")]
    BadParameters(String),

    #[error("malformed document: {0}")]
    Schema(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

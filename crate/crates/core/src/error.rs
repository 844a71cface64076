use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("dimension {dim} exceeds the configured cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("invalid site subset: {0}")]
    InvalidSubset(String),

    #[error(
        "operator couples local up-count {from} to {to} (|element| = {magnitude:.3e}); not embeddable in a sector basis"
    )]
    SectorViolation {
        from: u32,
        to: u32,
        magnitude: f64,
    },

    #[error("basis mismatch: expected {expected}, found {found}")]
    BasisMismatch { expected: String, found: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("target energy {energy} lies outside the open spectral interval ({min}, {max})")]
    EnergyOutOfRange { energy: f64, min: f64, max: f64 },

    #[error("degenerate spectrum: all eigenvalues equal and no bandwidth given")]
    DegenerateSpectrum,

    #[error("probability {0} outside [0, 1]")]
    Probability(f64),

    #[error("Kraus completeness violated: ||sum K^dag K - I|| = {residual:.3e}")]
    Completeness { residual: f64 },

    #[error("channel string violates the conserved quantity: {0}")]
    NonConserving(String),

    #[error("support violation: {weight:.3e} of rho's weight lies outside the support of sigma")]
    SupportViolation { weight: f64 },

    #[error("eigendecomposition failed to converge")]
    Eigen,

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

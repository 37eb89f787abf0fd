use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function (e.g. a
    /// non-positive transmittance passed to the lognormal density).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The effective sample `N * p_i * p_j` is zero, so no confidence
    /// interval can be formed.
    #[error("degenerate statistics: effective sample size is zero ({0})")]
    DegenerateStatistics(String),

    #[error("degenerate decoy intensities: mu ({mu}) must differ from nu ({nu})")]
    DegenerateDecoy { mu: f64, nu: f64 },

    #[error("lower bound on the single-photon-pair yield is zero")]
    ZeroYield,

    #[error("attenuation table is empty")]
    EmptyTable,

    #[error("parameter fingerprint mismatch: table {found}, configuration {expected}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("infeasible optimisation problem: {0}")]
    Infeasible(String),

    #[error("unsupported format version {found} (supported major version {supported})")]
    UnsupportedVersion { found: String, supported: u32 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

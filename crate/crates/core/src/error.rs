//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {details}")]
    Dimension {
        context: &'static str,
        details: String,
    },

    #[error("resolvent (e^(j*theta) I - A) is singular at theta = {theta}")]
    SingularResolvent { theta: f64 },

    #[error("system is not Schur-stable (spectral radius {rho})")]
    Unstable { rho: f64 },

    #[error("discrete Lyapunov equation has no unique solution")]
    LyapunovSingular,

    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("no qualifying constant-velocity segments found for phase calibration")]
    NoSegments,

    #[error("empty episode list")]
    EmptyEpisodes,

    #[error("no alpha <= {alpha_max} stabilizes every model (worst spectral radius {worst_rho} at alpha_max)")]
    AlphaMaxInsufficient { alpha_max: f64, worst_rho: f64 },

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: usize },

    #[error("frequency grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {details}")]
    MalformedFile {
        path: String,
        line: usize,
        details: String,
    },

    #[error("invalid JSON in {path}: {details}")]
    MalformedJson { path: String, details: String },

    #[error("SDP solver error: {0}")]
    Sdp(String),

    #[error("synthesis infeasible (solver status: {status})")]
    Infeasible { status: String },

    #[error(
        "controller reconstruction ill-conditioned (cond {cond:.3e}); consider rescaling weights"
    )]
    Reconstruction { cond: f64 },

    #[error("trajectory infeasible: {0}")]
    Trajectory(String),

    #[error("missing upstream artifact {artifact}: run `{stage}` first")]
    MissingArtifact { artifact: String, stage: String },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn dim(context: &'static str, details: impl Into<String>) -> Self {
        Error::Dimension {
            context,
            details: details.into(),
        }
    }
}

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("axis mismatch: {0}")]
    AxisMismatch(String),

    #[error("velocity {velocity:.1} m/s at cell ({ix}, {iz}) outside bounds [{vmin}, {vmax}]")]
    VelocityBounds { ix: usize, iz: usize, velocity: f64, vmin: f64, vmax: f64 },

    #[error("unstable simulation: {0}")]
    Unstable(String),

    #[error("checkpoint schedule infeasible: {0}")]
    Schedule(String),

    #[error("conjugate gradient diverged: residual grew to {ratio:.3e} times its initial value")]
    CgDiverged { ratio: f64 },

    #[error("malformed SGF file {path}: {msg}")]
    Sgf { path: PathBuf, msg: String },

    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), cause: source }
    }

    /// True for failures of the numerical model (bounds, instability, CG).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::VelocityBounds { .. } | Error::Unstable(_) | Error::CgDiverged { .. } | Error::Schedule(_)
        )
    }
}

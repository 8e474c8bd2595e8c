use thiserror::Error;

/// Errors surfaced by the core pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad input data or arguments (CSV parse problems, invalid configs, ...).
    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Fewer than two distinct values; the caller is expected to skip the feature.
    #[error("fewer than 2 distinct values")]
    DegenerateValues,

    /// The fitted boundary has an empty interior (h(x) < 0 everywhere).
    #[error("boundary describes an empty ellipsoid (scale {scale:.3e})")]
    EmptyEllipsoid { scale: f64 },

    /// The LP solve did not reach a verified optimum for this grid cell.
    #[error("boundary solve failed at alpha={alpha:.1e} lambda={lambda:.1e}: {detail}")]
    Solver {
        alpha: f64,
        lambda: f64,
        detail: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}

use thiserror::Error;

/// Errors raised by the simulation and reconstruction routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("propagation step too coarse: dt*omega' = {product:.3} rad (limit {limit} rad)")]
    StepTooCoarse { product: f64, limit: f64 },

    #[error("bad grid: {0}")]
    BadGrid(String),

    #[error("stimulus outside linear regime: halving the area changed the kernel by {relative_change:.4} of its peak")]
    NonlinearStimulus { relative_change: f64 },

    #[error("degenerate kernel: {0}")]
    Degenerate(String),

    #[error("measured impulse response missing or empty")]
    BadImpulse,

    #[error("quadrature grid too coarse: refinement changed the field by {relative_change:.4} of its peak")]
    GridTooCoarse { relative_change: f64 },

    #[error("reference counts C0 = {c0:.1} below the floor {floor}")]
    InvalidCounts { c0: f64, floor: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("kernel transfer function vanishes")]
    ZeroKernel,

    #[error("no delay peak found (peak SNR {snr:.2} < 3)")]
    NoPeak { snr: f64 },

    #[error("degenerate rotation angle {alpha} rad (sin or 1-cos vanishes)")]
    DegenerateAngle { alpha: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

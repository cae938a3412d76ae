use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("singular spectral mode ({m}, {n}): denominator {denominator:e}")]
    SingularMode { m: usize, n: usize, denominator: f64 },

    #[error("solver diverged at iteration {iteration}: {what}")]
    Divergence { iteration: usize, what: String },

    #[error("inner solver did not converge in {iterations} iterations (residual {residual:e}, failing monitor: {reason})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("structure-preservation violation at step {step} (t = {t}): {what}")]
    StructureViolation { step: usize, t: f64, what: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

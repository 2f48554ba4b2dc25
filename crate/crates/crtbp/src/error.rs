use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid physical inputs (masses, mass ratio, step size, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Trajectory passed within the collision guard radius of a primary.
    #[error("collision: distance to primary {primary} is {distance:.3e} (guard {guard:.1e})")]
    Collision {
        primary: u8,
        distance: f64,
        guard: f64,
    },

    /// Collision raised while propagating; carries the offending step index.
    #[error("collision at step {step}: {source}")]
    CollisionAtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// Root bracketing or other numerical procedure failed.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Gauss-Jordan elimination hit a vanishing pivot.
    #[error("elimination error: vanishing pivot {pivot} = {value:.3e}")]
    Elimination { pivot: &'static str, value: f64 },

    /// Newton-type corrector or shooting solver failed to converge.
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Configuration parse / validation failure.
    #[error("config error: {0}")]
    Config(String),

    /// Requested geometric construction does not exist (e.g. no intersection).
    #[error("{0}")]
    Geometry(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

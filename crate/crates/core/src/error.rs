use thiserror::Error;

/// Errors raised by schedule, bridge, solver and harness operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain on which the quantity is defined.
    #[error("domain error in {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    /// A bridge quantity was evaluated where it diverges (typically t = T).
    #[error("singularity in {what} at t = {t}")]
    Singularity { what: &'static str, t: f64 },

    /// Step endpoints in the wrong order.
    #[error("ordering error in {what}: expected t <= s, got s = {s}, t = {t}")]
    Ordering { what: &'static str, s: f64, t: f64 },

    /// Order above what has an elementary closed form.
    #[error("unsupported order {order} in {what}: non-elementary antiderivative")]
    UnsupportedOrder { what: &'static str, order: usize },

    /// Invalid configuration (grid, solver, prior, budget).
    #[error("configuration error: {0}")]
    Config(String),

    /// A requested NFE budget cannot be met exactly by the solver's step pattern.
    #[error("NFE budget {budget} is not reachable by {solver}; nearest reachable budgets: {nearest:?}")]
    Budget {
        solver: String,
        budget: usize,
        nearest: Vec<usize>,
    },

    /// Vectors of incompatible dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A verification oracle failed to converge.
    #[error("oracle error: {0}")]
    Oracle(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        what,
        detail: detail.into(),
    }
}

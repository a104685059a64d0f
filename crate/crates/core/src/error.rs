use thiserror::Error;

/// Errors raised by the solver, the oracle and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter or argument is outside the domain of the operation.
    #[error("{0}")]
    Domain(String),

    /// Adaptive quadrature hit its depth cap before meeting the tolerance.
    #[error("quadrature did not converge on [{a}, {b}]: estimated error {achieved:e} > requested {requested:e}")]
    Quadrature {
        a: f64,
        b: f64,
        achieved: f64,
        requested: f64,
    },

    /// The breakpoint ladder did not reach the cutoff within the cap.
    #[error("breakpoint ladder truncated after {count} points at {last} (cutoff 1 - {eta:e})")]
    Truncation { count: usize, last: f64, eta: f64 },

    /// A point lies past the last breakpoint of a truncated ladder.
    #[error("probability {pi} lies beyond the breakpoint ladder (last breakpoint {last})")]
    OutOfLadder { pi: f64, last: f64 },

    /// The free-boundary equation did not change sign on the search interval.
    #[error("no sign change of the boundary equation on [{lo}, {hi}]: F(lo) = {f_lo}, F(hi) = {f_hi}")]
    Bracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    /// An iterative scheme stopped before reaching its tolerance.
    #[error("{what} did not converge after {iterations} iterations (last change {last_change:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        last_change: f64,
    },

    /// Too many simulated paths reached the time cap before detection.
    #[error("{censored} of {paths} paths were censored at the time cap (limit {limit})")]
    Censored {
        censored: usize,
        paths: usize,
        limit: f64,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

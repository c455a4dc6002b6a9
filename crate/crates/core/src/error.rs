use alloc::string::String;

/// Errors raised by the simulation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Invalid configuration: divisibility, ranges, scheme constraints.
    #[error("configuration error: {0}")]
    Config(String),
    /// A function was called with arguments violating its contract.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Scheduler or aggregation state is inconsistent.
    #[error("state error: {0}")]
    State(String),
    /// An iterative numerical routine gave up. `estimate` carries the last
    /// value it had when stopping.
    #[error("numerical error: {message} (last estimate {estimate})")]
    Numerical { message: String, estimate: f64 },
    /// Loss or iterate became NaN or infinite during a run.
    #[error("divergence at iteration {iteration}: loss {loss}")]
    Divergence { iteration: usize, loss: f64 },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A covariance factorization failed even after the jitter ladder was exhausted.
    #[error("factorization failed at step {step} ({context}) after jitter escalation to {jitter:e}")]
    Factorization {
        step: usize,
        context: &'static str,
        jitter: f64,
    },

    #[error("non-finite gradient at grid step {step} for theta = {theta:?}")]
    NonFiniteGradient { step: usize, theta: Vec<f64> },

    #[error("non-finite observation mean or variance at slot {slot} (unit {unit}, channel {channel})")]
    NonFiniteObservation {
        slot: usize,
        unit: usize,
        channel: usize,
    },

    #[error("importance weights underflowed for outer sample {sample}")]
    WeightUnderflow { sample: usize },

    #[error("empty feasible set for design coordinate {coord}")]
    EmptyFeasibleSet { coord: usize },

    #[error("infeasible design: {}", .0.join("; "))]
    InfeasibleDesign(Vec<String>),

    #[error("forcing function evaluated at t = {t} outside [{lo}, {hi}]")]
    ForcingDomain { t: f64, lo: f64, hi: f64 },

    // Not marked as a source: the message already includes the inner error,
    // and chain printers would repeat it.
    #[error("{context}: {inner}")]
    Context { context: String, inner: Box<Error> },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            inner: Box::new(self),
        }
    }

    /// Walks the context chain down to the originating error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { inner, .. } => inner.root(),
            other => other,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::Factorization { .. }
                | Error::NonFiniteGradient { .. }
                | Error::NonFiniteObservation { .. }
                | Error::WeightUnderflow { .. }
        )
    }
}

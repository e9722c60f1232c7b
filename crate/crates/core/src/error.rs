use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("all weights are zero; the population is degenerate")]
    AllZeroWeights,

    #[error("non-finite weight {value} at index {index}")]
    NonFiniteWeight { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("uniform kernels cannot be used for perturbation")]
    UnsupportedKind,

    #[error("every dimension of the population has zero spread")]
    DegeneratePopulation,

    #[error("invalid population: {0}")]
    InvalidPopulation(String),

    #[error("invalid threshold schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),

    #[error("particle {particle} exceeded {attempts} attempts without acceptance")]
    AttemptCapExceeded { particle: usize, attempts: u64 },

    #[error("inconsistent traces: {0}")]
    SchemaMismatch(String),

    #[error("simulation produced a non-finite state")]
    NonFiniteState,

    #[error("model error: {0}")]
    Model(String),

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ Error::Step { .. } => e,
            e => Error::Step {
                step,
                source: Box::new(e),
            },
        }
    }
}

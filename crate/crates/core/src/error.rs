use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("notch inclination {0}° outside the admissible range (-60°, 60°)")]
    InclinationOutOfRange(f64),

    #[error("reference coordinate {0} outside [-1, 1]")]
    OutsideReference(f64),

    #[error("phase field value {0} outside [0, 1]")]
    PhaseFieldOutOfRange(f64),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("linear solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("non-finite energy in staggered iteration {iteration}")]
    NonFiniteEnergy { iteration: usize },

    #[error("energy blow-up at time step {step}: {energy:e} exceeds {limit:e}")]
    Unstable { step: usize, energy: f64, limit: f64 },

    #[error("empty point set")]
    EmptyPointSet,

    #[error("no failure detected")]
    NoFailure,

    #[error("insufficient surface data: {0}")]
    InsufficientData(String),

    #[error("load step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed {format} data: {message}")]
    Format { format: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step { step, source: Box::new(self) }
    }

    pub(crate) fn format(format: &'static str, message: impl Into<String>) -> Self {
        Error::Format { format, message: message.into() }
    }
}

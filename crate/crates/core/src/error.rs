use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for {num_qubits} qubits")]
    QubitOutOfRange { index: usize, num_qubits: usize },

    #[error("invalid Pauli term: {0}")]
    InvalidTerm(String),

    #[error("matrix is not Hermitian (relative deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("inverse temperature must be positive and finite, got {0}")]
    InvalidBeta(f64),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("natural parameters not normalizable at unit {unit}: quadratic coefficient {value} must be negative")]
    NonNormalizable { unit: usize, value: f64 },

    #[error("visible qubit {qubit} carries a non-Z Pauli factor")]
    NonZVisibleTerm { qubit: usize },

    #[error("hidden term {index} is not diagonal in the coupling basis {basis:?} (strict sampler)")]
    NonDiagonalHidden { index: usize, basis: crate::quantum::PauliOp },

    #[error("invalid spin value {0}; spins must be -1 or +1")]
    InvalidSpin(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("environment episode already finished; call reset first")]
    EpisodeDone,

    #[error("non-finite TD residual at batch index {index}")]
    NonFiniteResidual { index: usize },

    #[error("training diverged: mean |td| above {ceiling} for {steps} consecutive steps")]
    Diverged { ceiling: f64, steps: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

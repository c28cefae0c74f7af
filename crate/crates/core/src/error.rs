use thiserror::Error;

/// Failures raised anywhere in the pipeline.
///
/// Every variant maps to a module-qualified code (see [`Error::code`]) so the
/// command-line harness can report where a run stopped.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite: smallest eigenvalue {min_eigenvalue:e} <= floor {floor:e}")]
    NonPositiveMatrix { min_eigenvalue: f64, floor: f64 },

    #[error("non-finite entries produced by {context}")]
    NonFiniteEntries { context: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model has no jump operators; the generator cannot have a unique faithful steady state")]
    NoJumpOperators,

    #[error("operator is not Hermitian (residual {residual:e})")]
    NotHermitian { residual: f64 },

    #[error("generator has {count} eigenvalues with |Re| <= {tol:e}; steady state is not unique")]
    DegenerateSteadyState { count: usize, tol: f64 },

    #[error("steady state is not faithful: smallest population {min_population:e} < {floor:e}")]
    NonFaithful { min_population: f64, floor: f64 },

    #[error("restricted generator is singular or ill-conditioned (estimate {condition:e})")]
    SingularRestriction { condition: f64 },

    #[error("no privileged representation: jump '{label}' has conjugation residual {residual:e}")]
    NotPrivileged { label: String, residual: f64 },

    #[error("detailed balance violated (residual {residual:e}); pass the override flag to proceed")]
    DetailedBalanceViolated { residual: f64 },

    #[error("protocol violates a precondition: {0}")]
    Protocol(String),

    #[error("state norm left the first-order window at step {step} (branch weight {weight})")]
    NormCollapse { step: usize, weight: f64 },

    #[error("time-step too large: dt * jump rate = {product} exceeds {limit}")]
    StepTooLarge { product: f64, limit: f64 },

    #[error("integrator did not reach tolerance {tol:e} (last change {achieved:e})")]
    NoConvergence { tol: f64, achieved: f64 },

    #[error("Richardson stencils disagree by {disagreement:e} (tolerance {tol:e})")]
    StencilUnstable { disagreement: f64, tol: f64 },

    #[error("zero dissipation: (<w> - W)^2 = {value:e}; TUR ratio undefined")]
    ZeroDissipation { value: f64 },

    #[error("quadrature failed to converge ({0})")]
    QuadratureFailure(String),

    #[error("Fock truncation inadequate: tail population {tail:e} >= {limit:e}")]
    TruncationInadequate { tail: f64, limit: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Module-qualified error code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "operator_core::DimensionMismatch",
            Error::NonPositiveMatrix { .. } => "operator_core::NonPositiveMatrix",
            Error::NonFiniteEntries { .. } => "operator_core::NonFiniteEntries",
            Error::InvalidArgument(_) => "operator_core::InvalidArgument",
            Error::NoJumpOperators => "lindblad_engine::NoJumpOperators",
            Error::NotHermitian { .. } => "lindblad_engine::NotHermitian",
            Error::DegenerateSteadyState { .. } => "lindblad_engine::DegenerateSteadyState",
            Error::NonFaithful { .. } => "lindblad_engine::NonFaithful",
            Error::SingularRestriction { .. } => "lindblad_engine::SingularRestriction",
            Error::NotPrivileged { .. } => "lindblad_engine::NotPrivileged",
            Error::DetailedBalanceViolated { .. } => "slow_driving::DetailedBalanceViolated",
            Error::Protocol(_) => "trajectory_sampler::Protocol",
            Error::NormCollapse { .. } => "trajectory_sampler::NormCollapse",
            Error::StepTooLarge { .. } => "trajectory_sampler::StepTooLarge",
            Error::NoConvergence { .. } => "tilted_propagator::NoConvergence",
            Error::StencilUnstable { .. } => "tilted_propagator::StencilUnstable",
            Error::ZeroDissipation { .. } => "slow_driving::ZeroDissipation",
            Error::QuadratureFailure(_) => "ion_engine::QuadratureFailure",
            Error::TruncationInadequate { .. } => "ion_engine::TruncationInadequate",
            Error::Config(_) => "cli_harness::Config",
            Error::Io(_) => "cli_harness::Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

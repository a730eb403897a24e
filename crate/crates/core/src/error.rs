use thiserror::Error;

/// Errors raised anywhere in the simulation and estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix exponential overflowed (norm {norm:.3e})")]
    Overflow { norm: f64 },

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("riccati iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    DareNoConvergence { iterations: usize, residual: f64 },

    #[error("innovation covariance C Omega C^T is numerically singular")]
    SingularInnovation,

    #[error("closed-loop matrix is not stable (spectral radius {spectral_radius:.6})")]
    UnstableFilter { spectral_radius: f64 },

    #[error("matrix is rank deficient: expected rank {expected}, found {found}")]
    RankDeficient { expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parameter {index} = {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("assumption {name} violated: {detail}")]
    Assumption { name: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("every start point was infeasible")]
    AllStartsInfeasible,

    #[error("series too short: n = {n}, need at least {needed}")]
    SeriesTooShort { n: usize, needed: usize },

    #[error("estimate lies on the boundary of the parameter box (coordinate {0})")]
    BoundaryEstimate(usize),

    #[error("hessian of the likelihood is numerically singular")]
    SingularHessian,

    #[error("likelihood is infeasible at this parameter: {0}")]
    Infeasible(String),

    #[error("no data: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("toml parse error: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("toml write error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

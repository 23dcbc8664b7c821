use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("integration diverged at t = {time:e} s (non-finite state)")]
    Divergence { time: f64 },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stationary field variance is undefined for gamma_b = 0")]
    UndefinedStationaryVariance,

    #[error("no steady state exists: {0}")]
    NoSteadyState(&'static str),

    #[error("unsupported case: {0}")]
    Unsupported(&'static str),

    #[error("numerical instability at t = {time:e} s: {detail}; try a smaller step")]
    NumericalInstability { time: f64, detail: String },

    #[error("matrix is singular: {0}")]
    Singular(&'static str),

    #[error("controller returned a non-finite value at t = {time:e} s")]
    ControllerFault { time: f64 },

    #[error("filter estimate diverged at t = {time:e} s")]
    FilterDivergence { time: f64 },

    #[error("line fit needs at least 3 samples, got {0}")]
    Fit(usize),

    #[error("outside the validity domain: {0}")]
    OutOfValidity(String),

    #[error("approximation regime violated: {0}")]
    OutOfRegime(String),

    #[error("infeasible design: {0}")]
    InfeasibleDesign(String),

    #[error("closed loop is unstable: {0}")]
    Unstable(String),

    #[error("posterior weights underflowed on every grid point")]
    DegeneratePosterior,

    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("Riccati solver failed: {0}")]
    SolverFailure(&'static str),

    #[error("acceptance failure: {0}")]
    Acceptance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("scenario parse error: {0}")]
    Scenario(#[from] toml::de::Error),
}

impl Error {
    /// Process exit code: 2 configuration, 3 numerical, 4 acceptance.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. }
            | Error::Config(_)
            | Error::Scenario(_)
            | Error::UndefinedStationaryVariance
            | Error::NoSteadyState(_)
            | Error::Unsupported(_)
            | Error::OutOfValidity(_)
            | Error::OutOfRegime(_)
            | Error::Dimension { .. }
            | Error::StepSize(_)
            | Error::Io(_)
            | Error::Csv(_) => 2,
            Error::Divergence { .. }
            | Error::NumericalInstability { .. }
            | Error::Singular(_)
            | Error::ControllerFault { .. }
            | Error::FilterDivergence { .. }
            | Error::Fit(_)
            | Error::DegeneratePosterior
            | Error::SolverFailure(_) => 3,
            Error::InfeasibleDesign(_) | Error::Unstable(_) | Error::Acceptance(_) => 4,
        }
    }
}

//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A shape parameter lies outside the penalty's domain.
    #[error("shape domain violation for {penalty}: {detail}")]
    DomainViolation { penalty: &'static str, detail: String },

    /// Gradient requested for a penalty that is nonsmooth in the residual.
    #[error("{penalty} is nonsmooth in r: gradient unavailable; use the IP solver")]
    GradientUnavailable { penalty: &'static str },

    /// Conjugate PLQ description requested for an entry that has none.
    #[error("{penalty} has no conjugate PLQ representation with affine theta dependence")]
    AtomUnavailable { penalty: &'static str },

    /// The conjugate-sup oracle only enumerates KKT cases for k_u <= 2.
    #[error("conjugate sup oracle supports k_u <= 2, got {k_u}")]
    AtomTooLarge { k_u: usize },

    /// The conjugate sup is +infinity: exp(-rho) is not a density at this theta.
    #[error("conjugate sup unbounded: penalty not integrable at this theta ({detail})")]
    UnboundedConjugate { detail: String },

    /// The normalization integral diverges.
    #[error("normalization integral diverges: {detail}")]
    Divergent { detail: String },

    /// Adaptive quadrature could not meet the requested tolerance.
    #[error("quadrature tolerance not met: estimate {estimate}, error {error} > tol {tol}")]
    ToleranceNotMet { estimate: f64, error: f64, tol: f64 },

    /// Closed-form normalization requested where none is known.
    #[error("no closed-form normalization for {penalty}")]
    NoClosedForm { penalty: &'static str },

    /// Inner Newton iteration of a prox subproblem failed to converge.
    #[error("prox subproblem failed: {detail}")]
    ProxFailure { detail: String },

    /// A solver step could not decrease the objective after max backtracks.
    #[error("step failure after {backtracks} backtracks: {detail}")]
    StepFailure { backtracks: usize, detail: String },

    /// A block of the interior-point Newton system is singular.
    #[error("singular {block} block in Newton system (violates: {condition})")]
    SingularBlock { block: &'static str, condition: &'static str },

    /// Interior-point line search stalled.
    #[error("line search stalled: alpha {alpha} below 1e-12 at iteration {iter}")]
    LineSearchStall { alpha: f64, iter: usize },

    /// Iteration cap reached before the stopping test was satisfied.
    #[error("{solver} did not converge in {iters} iterations (residual {residual})")]
    NonConvergence { solver: &'static str, iters: usize, residual: f64 },

    /// Input data is unusable (degenerate, wrong shape, unreadable).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Residuals have (numerically) zero variance; distribution fits degenerate.
    #[error("zero-variance residuals: cannot fit a scale family")]
    ZeroVariance,

    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the CLI: input problems are 2, everything else 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Io { .. } | Error::Config(_) => 2,
            _ => 1,
        }
    }
}

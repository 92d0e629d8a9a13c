use thiserror::Error;

use crate::paramdesign::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix entries must be finite")]
    NonFinite,

    #[error("Lyapunov equation not uniquely solvable")]
    LyapunovSingular,

    #[error("linear system is singular")]
    Singular,

    #[error("symmetric eigensolver requires symmetric matrix")]
    NotSymmetric,

    #[error("{0}")]
    InvalidParameter(String),

    #[error("derivative order exceeds funnel smoothness budget (requested {requested}, budget {budget})")]
    FunnelOrder { requested: usize, budget: usize },

    #[error("Lyapunov solution must be positive definite")]
    NotPositiveDefinite,

    #[error("design rejected:\n{0}")]
    DesignRejected(Box<ValidationReport>),

    #[error("no well-defined relative degree")]
    NoRelativeDegree,

    #[error("Γ singular")]
    HighGainSingular,

    #[error("system not minimum phase (internal dynamics not Hurwitz)")]
    NotMinimumPhase,

    #[error("transformation matrix U is singular")]
    TransformSingular,

    #[error("funnel constraint violated (gain singularity) at cascade level {level}: φ‖e‖ = {scaled_error}")]
    GainSingularity { level: usize, scaled_error: f64 },

    #[error("derivative recursion requested unavailable y derivative (order {order})")]
    UnavailableDerivative { order: usize },

    #[error("error vector outside controller domain 𝒟_{level}: intermediate norm {norm}")]
    ControllerDomain { level: usize, norm: f64 },

    #[error("step size underflow at t = {t}, funnel margin = {margin}")]
    StepUnderflow { t: f64, margin: f64 },

    #[error("step budget of {steps} exhausted at t = {t}")]
    StepLimit { t: f64, steps: usize },

    #[error("initial values violate a funnel constraint: {0}")]
    InitialCondition(String),

    #[error("white-box diagnostics require integrator-chain states")]
    MissingInternals,

    #[error("{0}")]
    Config(String),

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// Errors raised when a state leaves one of the funnels; the integrator
    /// treats these as step rejections rather than hard failures.
    pub fn is_guard_violation(&self) -> bool {
        matches!(
            self,
            Error::GainSingularity { .. } | Error::ControllerDomain { .. }
        )
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the solver stack can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("scale function is not strictly increasing near {at} (S={left} then S={right})")]
    NonMonotoneScale { at: f64, left: f64, right: f64 },

    #[error("could not determine endpoint limit: {0}")]
    LimitUndetermined(String),

    #[error("exit law puts positive mass on an infinite endpoint")]
    Unbounded,

    #[error("start point {x} lies above the greatest maximizer {z_hi}")]
    StartAboveMaximizer { x: f64, z_hi: f64 },

    #[error("concave majorant still changing at the grid ceiling {ceiling}")]
    Truncation { ceiling: f64 },

    #[error("ratio supremum is only attained at the upper boundary")]
    NoMaximizer,

    #[error("could not bracket root: {0}")]
    Bracket(String),

    #[error("start point {x} is outside the randomization region ({lo}, {hi})")]
    OutOfRegion { x: f64, lo: f64, hi: f64 },

    #[error(
        "unsupported regime: marginal transient case with a tie center c={center} violating the \
         mean-ordering assumption"
    )]
    UnsupportedMarginal { center: f64 },

    #[error("dual solve not applicable: {0}")]
    AssumptionViolated(String),

    #[error("no essential strategy found at c*={0}")]
    EmptyEssentialSet(f64),

    #[error("essential strategies do not straddle c*={0}")]
    NoSignChange(f64),

    #[error("rule cannot be sampled: {0}")]
    UnsupportedRule(String),

    #[error("time step too coarse: halving moved the estimate from {coarse} to {fine}")]
    StepTooCoarse { coarse: f64, fine: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("curve sample {index} coincides with the origin")]
    OriginHit { index: usize },
    #[error("argument jump of {jump:.3} rad between samples {index} and {next} exceeds pi/2")]
    UndersampledCurve { index: usize, next: usize, jump: f64 },
    #[error("point ({x}, {y}) lies on the curve")]
    PointOnCurve { x: f64, y: f64 },
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("orientation mismatch at r = {r}: sign(k) * cumulative = {value:e}")]
    OrientationMismatch { r: f64, value: f64 },
    #[error("map cannot be evaluated at ({x}, {y})")]
    EvaluationFailure { x: f64, y: f64 },
    #[error("radius {0} lies on a smoothness break of the map")]
    BreakRadius(f64),
    #[error("jacobian residual {residual:e} exceeds {tolerance:e}")]
    JacobianMismatch { residual: f64, tolerance: f64 },
    #[error("{masked} of {total} winding-field samples are masked")]
    ExcessiveMasking { masked: usize, total: usize },
    #[error("eta is not differentiable at the origin")]
    OriginEvaluation,
    #[error("point ({x}, {y}) is outside the wedge")]
    OutsideWedge { x: f64, y: f64 },
    #[error("axis traces disagree by {0:e}")]
    IncompatibleTrace(f64),
    #[error("glued branches disagree by {0:e}")]
    GluingMismatch(f64),
    #[error("corrector residual increased twice in a row (best {best:e})")]
    CorrectorDiverged { best: f64 },
    #[error("datum constraints cannot be satisfied: {0}")]
    ConstraintInfeasible(String),
    #[error("density deficit has mean {0:e}, expected zero")]
    NonZeroMean(f64),
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),
    #[error("flow left the domain by {0:e}")]
    FlowEscapedDomain(f64),
    #[error("density must be positive, found {0}")]
    NonPositiveDensity(f64),
    #[error("invalid datum: {0}")]
    InvalidDatum(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the pricing, boundary, duality and calibration routines.
///
/// Numerical failures always name the invariant or side condition that broke,
/// together with the location where it was detected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("point (x={x}, y={y}) lies outside the payoff support")]
    OutsideSupport { x: f64, y: f64 },

    #[error("query {value} outside span [{lo}, {hi}]")]
    OutOfSpan { value: f64, lo: f64, hi: f64 },

    #[error("smooth-fit bracket [{lo}, {hi}] does not straddle a sign change ({detail})")]
    NotBracketed { lo: f64, hi: f64, detail: String },

    #[error("Riccati integration blew up near x={at}")]
    IntegrationBlowUp { at: f64 },

    #[error("{what} residual {residual:e} exceeds tolerance {tol:e} at x={at}")]
    ResidualViolation {
        what: &'static str,
        residual: f64,
        tol: f64,
        at: f64,
    },

    #[error("sign condition violated: {condition} = {value:e} at ({x}, {y})")]
    SignCondition {
        condition: &'static str,
        value: f64,
        x: f64,
        y: f64,
    },

    #[error("admissibility violated: {0}")]
    Inadmissible(String),

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("{what} is ill-conditioned: perturbations grow by a factor {growth:e} before {at}")]
    IllConditioned {
        what: &'static str,
        growth: f64,
        at: f64,
    },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("Y not bracketed: {0}")]
    ExerciseStrikeNotFound(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{name}={v}")))
    }
}

pub(crate) fn ensure_positive(name: &str, v: f64) -> Result<f64> {
    ensure_finite(name, v)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be > 0, got {v}"
        )))
    }
}

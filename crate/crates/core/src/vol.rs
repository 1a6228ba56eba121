//! Local volatility curves `x ↦ σ(x)`.

use crate::duality::analytic::{GammaExample, PsiPowerExample};
use crate::error::{ensure_positive, Error, Result};
use crate::numerics::grid::log_space;
use crate::numerics::interp::{spline_slopes, Hermite};

/// Relative headroom applied to a sampled supremum.
const SAMPLED_BOUND_MARGIN: f64 = 1e-3;
const TABULATED_SCAN: usize = 16;
const TABULATED_BOUND_MARGIN: f64 = 1e-6;
/// Relative headroom applied to an exact supremum.
const EXACT_BOUND_MARGIN: f64 = 1e-12;
/// Smallest admissible `min σ / σ̄` on a window.
pub const MIN_VOL_RATIO: f64 = 1e-4;

/// A positive bounded local volatility function.
#[derive(Debug, Clone, PartialEq)]
pub enum VolCurve {
    Constant(f64),
    ClosedForm(ClosedFormVol),
    Tabulated(TabulatedVol),
}

/// Volatility functions given by formulas.
#[derive(Debug, Clone, PartialEq)]
pub enum ClosedFormVol {
    /// Primal volatility of the `(α y − x^γ)^+` analytic pair.
    PsiPowerSigma(PsiPowerExample),
    /// Dual volatility of the `(α y − x^γ)^+` analytic pair.
    PsiPowerEta(PsiPowerExample),
    /// Primal volatility of the `((y − x)^+)^γ` analytic pair.
    GammaSigma(GammaExample),
    /// Dual volatility of the `((y − x)^+)^γ` analytic pair.
    GammaEta(GammaExample),
    /// Smoothed step from `low` (x → 0) to `high` (x → ∞), centred at
    /// `center` with log-width `width`.
    LogisticStep {
        low: f64,
        high: f64,
        center: f64,
        width: f64,
    },
    Scaled {
        base: Box<VolCurve>,
        factor: f64,
    },
    /// `base(x) · Π (1 + amplitude · bump(x))` with smooth compactly supported bumps.
    Bumped {
        base: Box<VolCurve>,
        bumps: Vec<Bump>,
    },
}

/// Smooth bump supported on `(lo, hi)` (in `x`), peaking at 1 at the
/// geometric midpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub lo: f64,
    pub hi: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn shape(&self, x: f64) -> f64 {
        if x <= self.lo || x >= self.hi {
            return 0.0;
        }
        let (a, b) = (self.lo.ln(), self.hi.ln());
        let s = (2.0 * x.ln() - a - b) / (b - a);
        let q = 1.0 - s * s;
        if q <= 0.0 {
            0.0
        } else {
            (1.0 - 1.0 / q).exp()
        }
    }
}

/// Knot table interpolated by a C² cubic spline of `ln σ` in `ln x`, so the
/// interpolant stays positive; clamped to the edge values outside the knot
/// range, where the slope jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedVol {
    interp: Hermite,
    sigmas: Vec<f64>,
    bound: f64,
}

/// Slope of the parabola through the three end knots, at the end knot.
fn end_slope(t: &[f64], v: &[f64], right: bool) -> f64 {
    let n = t.len();
    if n < 3 {
        return (v[n - 1] - v[0]) / (t[n - 1] - t[0]);
    }
    let (t0, t1, t2, v0, v1, v2) = if right {
        (t[n - 1], t[n - 2], t[n - 3], v[n - 1], v[n - 2], v[n - 3])
    } else {
        (t[0], t[1], t[2], v[0], v[1], v[2])
    };
    let (h1, h2) = (t1 - t0, t2 - t0);
    let (d1, d2) = ((v1 - v0) / h1, (v2 - v0) / h2);
    (d1 * h2 - d2 * h1) / (h2 - h1)
}

impl TabulatedVol {
    pub fn new(xs: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != sigmas.len() {
            return Err(Error::InvalidParameter(format!(
                "tabulated vol needs >= 2 matching knots, got {} and {}",
                xs.len(),
                sigmas.len()
            )));
        }
        for (&x, &s) in xs.iter().zip(&sigmas) {
            ensure_positive("tabulated abscissa", x)?;
            ensure_positive("tabulated volatility", s)?;
        }
        if !xs.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter(
                "tabulated abscissae must be strictly increasing".into(),
            ));
        }
        let logs: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let lv: Vec<f64> = sigmas.iter().map(|s| s.ln()).collect();
        let slopes = spline_slopes(
            &logs,
            &lv,
            end_slope(&logs, &lv, false),
            end_slope(&logs, &lv, true),
        );
        let interp = Hermite::new(logs, lv, slopes);
        // The spline may overshoot between knots: scan every cell.
        let mut max = f64::NEG_INFINITY;
        let t = interp.knots();
        for w in t.windows(2) {
            for k in 0..=TABULATED_SCAN {
                max = max.max(interp.eval(w[0] + (w[1] - w[0]) * k as f64 / TABULATED_SCAN as f64));
            }
        }
        Ok(Self {
            interp,
            sigmas,
            bound: max.exp() * (1.0 + TABULATED_BOUND_MARGIN),
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = x.ln();
        if t <= self.interp.lo() {
            self.sigmas[0]
        } else if t >= self.interp.hi() {
            *self.sigmas.last().unwrap()
        } else {
            self.interp.eval(t).exp()
        }
    }

    pub fn knots(&self) -> Vec<f64> {
        self.interp.knots().iter().map(|t| t.exp()).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn span(&self) -> (f64, f64) {
        (self.interp.lo().exp(), self.interp.hi().exp())
    }
}

impl VolCurve {
    pub fn constant(value: f64) -> Result<Self> {
        ensure_positive("constant volatility", value)?;
        Ok(VolCurve::Constant(value))
    }

    pub fn tabulated(xs: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        Ok(VolCurve::Tabulated(TabulatedVol::new(xs, sigmas)?))
    }

    pub fn logistic_step(low: f64, high: f64, center: f64, width: f64) -> Result<Self> {
        ensure_positive("low", low)?;
        ensure_positive("high", high)?;
        ensure_positive("center", center)?;
        ensure_positive("width", width)?;
        Ok(VolCurve::ClosedForm(ClosedFormVol::LogisticStep {
            low,
            high,
            center,
            width,
        }))
    }

    pub fn scaled(self, factor: f64) -> Result<Self> {
        ensure_positive("scale factor", factor)?;
        Ok(VolCurve::ClosedForm(ClosedFormVol::Scaled {
            base: Box::new(self),
            factor,
        }))
    }

    pub fn bumped(self, bumps: Vec<Bump>) -> Result<Self> {
        for b in &bumps {
            ensure_positive("bump lo", b.lo)?;
            if !(b.hi > b.lo) || !(b.amplitude > -1.0) || !b.amplitude.is_finite() {
                return Err(Error::InvalidParameter(format!("invalid bump {b:?}")));
            }
        }
        Ok(VolCurve::ClosedForm(ClosedFormVol::Bumped {
            base: Box::new(self),
            bumps,
        }))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            VolCurve::Constant(v) => *v,
            VolCurve::Tabulated(t) => t.eval(x),
            VolCurve::ClosedForm(c) => match c {
                ClosedFormVol::PsiPowerSigma(e) => e.sigma(x),
                ClosedFormVol::PsiPowerEta(e) => e.eta(x),
                ClosedFormVol::GammaSigma(e) => e.sigma(x),
                ClosedFormVol::GammaEta(e) => e.eta(x),
                ClosedFormVol::LogisticStep {
                    low,
                    high,
                    center,
                    width,
                } => {
                    let s = (x / center).ln() / width;
                    low + (high - low) * 0.5 * (1.0 + s.tanh())
                }
                ClosedFormVol::Scaled { base, factor } => factor * base.eval(x),
                ClosedFormVol::Bumped { base, bumps } => {
                    bumps.iter().fold(base.eval(x), |acc, b| {
                        acc * (1.0 + b.amplitude * b.shape(x))
                    })
                }
            },
        }
    }

    /// An upper bound `σ̄` of the curve over `(0, ∞)`.
    /// Points where the slope of the curve jumps: the edges of tabulated
    /// spans, where the spline meets its flat extension.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            VolCurve::Tabulated(t) => {
                let (a, b) = t.span();
                vec![a, b]
            }
            VolCurve::ClosedForm(ClosedFormVol::Scaled { base, .. })
            | VolCurve::ClosedForm(ClosedFormVol::Bumped { base, .. }) => base.kinks(),
            _ => Vec::new(),
        }
    }

    pub fn upper_bound(&self) -> f64 {
        match self {
            VolCurve::Constant(v) => v * (1.0 + EXACT_BOUND_MARGIN),
            VolCurve::Tabulated(t) => t.bound,
            VolCurve::ClosedForm(ClosedFormVol::LogisticStep { low, high, .. }) => {
                low.max(*high) * (1.0 + EXACT_BOUND_MARGIN)
            }
            VolCurve::ClosedForm(ClosedFormVol::Scaled { base, factor }) => {
                factor * base.upper_bound()
            }
            VolCurve::ClosedForm(_) => {
                let max = log_space(1e-8, 1e8, 4001)
                    .into_iter()
                    .map(|x| self.eval(x))
                    .fold(0.0, f64::max);
                max * (1.0 + SAMPLED_BOUND_MARGIN)
            }
        }
    }

    /// Checks positivity and the `min σ ≥ 1e-4 σ̄` floor on a log grid over
    /// `[lo, hi]`.
    pub fn validate_on(&self, lo: f64, hi: f64) -> Result<()> {
        let bound = self.upper_bound();
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "volatility upper bound {bound} is not finite and positive"
            )));
        }
        for x in log_space(lo, hi, 1024) {
            let s = self.eval(x);
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "volatility {s} at x={x} is not positive"
                )));
            }
            if s < MIN_VOL_RATIO * bound {
                return Err(Error::InvalidParameter(format!(
                    "volatility {s:e} at x={x} is below {MIN_VOL_RATIO:e} x upper bound {bound}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_constant(&self) -> Option<f64> {
        match self {
            VolCurve::Constant(v) => Some(*v),
            _ => None,
        }
    }
}

//! Payoff families `φ(x, y)`, their partial derivatives and support geometry.
//!
//! Every family is decreasing and concave in the spot-like variable `x`,
//! increasing and concave in the strike-like variable `y` on its support
//! `Φ = {φ > 0} = {x < X(y)} = {y > Y(x)}`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::numerics::grid::log_space;

pub const DEFAULT_WINDOW: (f64, f64) = (1e-4, 1e4);
pub const DEFAULT_SAMPLES_PER_AXIS: usize = 256;

/// Closed-form scalar monotone function used as a building block of
/// `φ(x, y) = (ψ_y(y) − ψ_x(x))^+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFn {
    /// `scale · s^exponent`
    Power { scale: f64, exponent: f64 },
    /// `scale · (exp(rate · s) − 1)`
    ExpM1 { scale: f64, rate: f64 },
    /// `scale · ln(1 + rate · s)`
    Log1p { scale: f64, rate: f64 },
    /// `scale · (1 − exp(−rate · s))`, bounded above by `scale`.
    Saturating { scale: f64, rate: f64 },
}

impl ScalarFn {
    pub fn identity() -> Self {
        ScalarFn::Power {
            scale: 1.0,
            exponent: 1.0,
        }
    }

    fn params(&self) -> (f64, f64) {
        match *self {
            ScalarFn::Power { scale, exponent } => (scale, exponent),
            ScalarFn::ExpM1 { scale, rate }
            | ScalarFn::Log1p { scale, rate }
            | ScalarFn::Saturating { scale, rate } => (scale, rate),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.params();
        ensure_positive("scalar function scale", a)?;
        ensure_positive("scalar function shape parameter", b)?;
        Ok(())
    }

    pub fn value(&self, s: f64) -> f64 {
        match *self {
            ScalarFn::Power { scale, exponent } => scale * s.powf(exponent),
            ScalarFn::ExpM1 { scale, rate } => scale * (rate * s).exp_m1(),
            ScalarFn::Log1p { scale, rate } => scale * (rate * s).ln_1p(),
            ScalarFn::Saturating { scale, rate } => -scale * (-rate * s).exp_m1(),
        }
    }

    pub fn d1(&self, s: f64) -> f64 {
        match *self {
            ScalarFn::Power { scale, exponent } => scale * exponent * s.powf(exponent - 1.0),
            ScalarFn::ExpM1 { scale, rate } => scale * rate * (rate * s).exp(),
            ScalarFn::Log1p { scale, rate } => scale * rate / (1.0 + rate * s),
            ScalarFn::Saturating { scale, rate } => scale * rate * (-rate * s).exp(),
        }
    }

    pub fn d2(&self, s: f64) -> f64 {
        match *self {
            ScalarFn::Power { scale, exponent } => {
                if exponent == 1.0 {
                    0.0
                } else {
                    scale * exponent * (exponent - 1.0) * s.powf(exponent - 2.0)
                }
            }
            ScalarFn::ExpM1 { scale, rate } => scale * rate * rate * (rate * s).exp(),
            ScalarFn::Log1p { scale, rate } => {
                let q = 1.0 + rate * s;
                -scale * rate * rate / (q * q)
            }
            ScalarFn::Saturating { scale, rate } => -scale * rate * rate * (-rate * s).exp(),
        }
    }

    /// Inverse on the range of the function; `+∞` above a finite supremum.
    pub fn inverse(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        match *self {
            ScalarFn::Power { scale, exponent } => (v / scale).powf(1.0 / exponent),
            ScalarFn::ExpM1 { scale, rate } => (v / scale).ln_1p() / rate,
            ScalarFn::Log1p { scale, rate } => (v / scale).exp_m1() / rate,
            ScalarFn::Saturating { scale, rate } => {
                if v >= scale {
                    f64::INFINITY
                } else {
                    -(-v / scale).ln_1p() / rate
                }
            }
        }
    }

    pub fn is_convex(&self) -> bool {
        match *self {
            ScalarFn::Power { exponent, .. } => exponent >= 1.0,
            ScalarFn::ExpM1 { .. } => true,
            ScalarFn::Log1p { .. } | ScalarFn::Saturating { .. } => false,
        }
    }

    pub fn is_concave(&self) -> bool {
        match *self {
            ScalarFn::Power { exponent, .. } => exponent <= 1.0,
            ScalarFn::ExpM1 { .. } => false,
            ScalarFn::Log1p { .. } | ScalarFn::Saturating { .. } => true,
        }
    }

    /// Whether `ψ(+∞) = +∞`.
    pub fn is_unbounded(&self) -> bool {
        !matches!(self, ScalarFn::Saturating { .. })
    }

    /// Structural check of `∀α∈(0,1) ∃C_α>0 ∀s>0: ψ(αs) ≥ C_α ψ(s)`.
    /// Holds for convex powers (`C_α = α^p`) and fails for exponential growth.
    pub fn satisfies_scaling_bound(&self) -> bool {
        matches!(self, ScalarFn::Power { exponent, .. } if *exponent >= 1.0)
    }
}

/// The supported payoff families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PayoffFamily {
    /// `(y − x)^+`
    #[serde(alias = "call_put")]
    CallPut,
    /// `((y − x)^+)^γ`, `γ ∈ (0, 1]`
    PowerGamma { gamma: f64 },
    /// `(α y^γ′ − x^γ)^+`, `α > 0`, `γ ≥ 1`, `γ′ ∈ (0, 1]`
    PowerPair {
        alpha: f64,
        gamma: f64,
        gamma_prime: f64,
    },
    /// `(ψ_y(y) − ψ_x(x))^+` with `ψ_x` convex and `ψ_y` concave.
    PsiDifference { psi_x: ScalarFn, psi_y: ScalarFn },
}

/// Partial derivatives of `φ` at a point of the support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dyy: f64,
    pub dxy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Payoff {
    pub family: PayoffFamily,
    #[serde(default = "default_window")]
    pub window: (f64, f64),
}

fn default_window() -> (f64, f64) {
    DEFAULT_WINDOW
}

impl Payoff {
    pub fn new(family: PayoffFamily) -> Result<Self> {
        let p = Self {
            family,
            window: DEFAULT_WINDOW,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn call_put() -> Self {
        Self {
            family: PayoffFamily::CallPut,
            window: DEFAULT_WINDOW,
        }
    }

    pub fn power_gamma(gamma: f64) -> Result<Self> {
        Self::new(PayoffFamily::PowerGamma { gamma })
    }

    pub fn power_pair(alpha: f64, gamma: f64, gamma_prime: f64) -> Result<Self> {
        Self::new(PayoffFamily::PowerPair {
            alpha,
            gamma,
            gamma_prime,
        })
    }

    pub fn psi_difference(psi_x: ScalarFn, psi_y: ScalarFn) -> Result<Self> {
        Self::new(PayoffFamily::PsiDifference { psi_x, psi_y })
    }

    pub fn with_window(mut self, lo: f64, hi: f64) -> Result<Self> {
        ensure_positive("window lower edge", lo)?;
        ensure_finite("window upper edge", hi)?;
        if hi <= lo {
            return Err(Error::InvalidParameter(format!(
                "empty window [{lo}, {hi}]"
            )));
        }
        self.window = (lo, hi);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            PayoffFamily::CallPut => {}
            PayoffFamily::PowerGamma { gamma } => {
                ensure_finite("gamma", gamma)?;
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "gamma must lie in (0, 1], got {gamma}"
                    )));
                }
            }
            PayoffFamily::PowerPair {
                alpha,
                gamma,
                gamma_prime,
            } => {
                ensure_positive("alpha", alpha)?;
                ensure_finite("gamma", gamma)?;
                ensure_finite("gamma_prime", gamma_prime)?;
                if gamma < 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "gamma must be >= 1, got {gamma}"
                    )));
                }
                if !(gamma_prime > 0.0 && gamma_prime <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "gamma_prime must lie in (0, 1], got {gamma_prime}"
                    )));
                }
            }
            PayoffFamily::PsiDifference { psi_x, psi_y } => {
                psi_x.validate()?;
                psi_y.validate()?;
                if !psi_x.is_convex() {
                    return Err(Error::InvalidParameter(format!(
                        "psi_x must be convex: {psi_x:?}"
                    )));
                }
                if !psi_y.is_concave() {
                    return Err(Error::InvalidParameter(format!(
                        "psi_y must be concave: {psi_y:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `(ψ_x, ψ_y)` when the payoff is of the form `(ψ_y(y) − ψ_x(x))^+`.
    pub fn psi_pair(&self) -> Option<(ScalarFn, ScalarFn)> {
        match self.family {
            PayoffFamily::CallPut | PayoffFamily::PowerGamma { gamma: 1.0 } => {
                Some((ScalarFn::identity(), ScalarFn::identity()))
            }
            PayoffFamily::PowerGamma { .. } => None,
            PayoffFamily::PowerPair {
                alpha,
                gamma,
                gamma_prime,
            } => Some((
                ScalarFn::Power {
                    scale: 1.0,
                    exponent: gamma,
                },
                ScalarFn::Power {
                    scale: alpha,
                    exponent: gamma_prime,
                },
            )),
            PayoffFamily::PsiDifference { psi_x, psi_y } => Some((psi_x, psi_y)),
        }
    }

    /// Exponent `γ` when the payoff is `((y − x)^+)^γ` (call-put gives 1).
    pub fn gamma_exponent(&self) -> Option<f64> {
        match self.family {
            PayoffFamily::CallPut => Some(1.0),
            PayoffFamily::PowerGamma { gamma } => Some(gamma),
            _ => None,
        }
    }

    /// Zero edge in `x`: `X(y) = inf{x > 0 : φ(x, y) = 0}`.
    pub fn x_edge(&self, y: f64) -> f64 {
        match self.family {
            PayoffFamily::CallPut | PayoffFamily::PowerGamma { .. } => y,
            PayoffFamily::PowerPair {
                alpha,
                gamma,
                gamma_prime,
            } => (alpha * y.powf(gamma_prime)).powf(1.0 / gamma),
            PayoffFamily::PsiDifference { psi_x, psi_y } => psi_x.inverse(psi_y.value(y)),
        }
    }

    /// Zero edge in `y`: `Y(x) = inf{y > 0 : φ(x, y) > 0}`.
    pub fn y_edge(&self, x: f64) -> f64 {
        match self.family {
            PayoffFamily::CallPut | PayoffFamily::PowerGamma { .. } => x,
            PayoffFamily::PowerPair {
                alpha,
                gamma,
                gamma_prime,
            } => (x.powf(gamma) / alpha).powf(1.0 / gamma_prime),
            PayoffFamily::PsiDifference { psi_x, psi_y } => psi_y.inverse(psi_x.value(x)),
        }
    }

    /// `φ(x, y)` without input validation.
    pub fn value(&self, x: f64, y: f64) -> f64 {
        if x >= self.x_edge(y) {
            return 0.0;
        }
        let v = match self.family {
            PayoffFamily::CallPut => y - x,
            PayoffFamily::PowerGamma { gamma } => (y - x).powf(gamma),
            PayoffFamily::PowerPair {
                alpha,
                gamma,
                gamma_prime,
            } => alpha * y.powf(gamma_prime) - x.powf(gamma),
            PayoffFamily::PsiDifference { psi_x, psi_y } => psi_y.value(y) - psi_x.value(x),
        };
        v.max(0.0)
    }

    /// `φ(x, y)`; zero exactly when `x ≥ X(y)`.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        ensure_finite("x", x)?;
        ensure_finite("y", y)?;
        if x <= 0.0 || y <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "payoff arguments must be positive, got ({x}, {y})"
            )));
        }
        Ok(self.value(x, y))
    }

    /// Closed-form partial derivatives on the support `Φ`.
    pub fn partials(&self, x: f64, y: f64) -> Result<Partials> {
        let phi = self.eval(x, y)?;
        if phi <= 0.0 {
            return Err(Error::OutsideSupport { x, y });
        }
        Ok(self.partials_unchecked(x, y))
    }

    pub(crate) fn partials_unchecked(&self, x: f64, y: f64) -> Partials {
        match self.family {
            PayoffFamily::CallPut => Partials {
                dx: -1.0,
                dy: 1.0,
                dxx: 0.0,
                dyy: 0.0,
                dxy: 0.0,
            },
            PayoffFamily::PowerGamma { gamma } => {
                let d = y - x;
                let d1 = gamma * d.powf(gamma - 1.0);
                let d2 = if gamma == 1.0 {
                    0.0
                } else {
                    gamma * (gamma - 1.0) * d.powf(gamma - 2.0)
                };
                Partials {
                    dx: -d1,
                    dy: d1,
                    dxx: d2,
                    dyy: d2,
                    dxy: -d2,
                }
            }
            PayoffFamily::PowerPair { .. } | PayoffFamily::PsiDifference { .. } => {
                let (px, py) = self.psi_pair().expect("psi form");
                Partials {
                    dx: -px.d1(x),
                    dy: py.d1(y),
                    dxx: -px.d2(x),
                    dyy: py.d2(y),
                    dxy: 0.0,
                }
            }
        }
    }

    pub fn support_edges(&self) -> Result<SupportEdges> {
        if let PayoffFamily::PsiDifference { psi_x, psi_y } = self.family {
            if !psi_y.is_unbounded() {
                return Err(Error::Hypothesis(format!(
                    "X(+inf) must be +inf, but psi_y={psi_y:?} is bounded"
                )));
            }
            if !psi_x.is_unbounded() {
                return Err(Error::Hypothesis(format!(
                    "X(0+) must be 0 and X finite, but psi_x={psi_x:?} is bounded"
                )));
            }
        }
        Ok(SupportEdges { payoff: *self })
    }

    /// Log-uniform sample of the window restricted to the support.
    pub fn support_sample(&self, per_axis: usize) -> Vec<(f64, f64)> {
        let axis = log_space(self.window.0, self.window.1, per_axis);
        let mut pts = Vec::new();
        for &y in &axis {
            let xe = self.x_edge(y);
            for &x in &axis {
                if x < xe && self.value(x, y) > 0.0 {
                    pts.push((x, y));
                }
            }
        }
        pts
    }

    /// Samples the monotonicity and concavity hypotheses on `points`.
    pub fn check_hypotheses(&self, points: &[(f64, f64)]) -> Result<()> {
        for &(x, y) in points {
            let d = self.partials(x, y)?;
            let bad = if !(d.dx < 0.0) {
                Some(("dx_phi < 0", d.dx))
            } else if !(d.dy > 0.0) {
                Some(("dy_phi > 0", d.dy))
            } else if !(d.dxx <= 0.0) {
                Some(("dxx_phi <= 0", d.dxx))
            } else if !(d.dyy <= 0.0) {
                Some(("dyy_phi <= 0", d.dyy))
            } else {
                None
            };
            if let Some((condition, value)) = bad {
                return Err(Error::SignCondition {
                    condition,
                    value,
                    x,
                    y,
                });
            }
        }
        Ok(())
    }

    /// Is the payoff admissible for the reverse-direction duality formulas
    /// (scaling bound on `ψ_x`)?
    pub fn supports_inverse_psi_duality(&self) -> bool {
        self.psi_pair()
            .is_some_and(|(px, _)| px.satisfies_scaling_bound())
    }
}

/// Evaluators for the zero edges `X(y)` and `Y(x)`.
#[derive(Debug, Clone, Copy)]
pub struct SupportEdges {
    payoff: Payoff,
}

impl SupportEdges {
    pub fn x_edge(&self, y: f64) -> f64 {
        self.payoff.x_edge(y)
    }

    pub fn y_edge(&self, x: f64) -> f64 {
        self.payoff.y_edge(x)
    }
}

/// Outcome of sampling `φ ∂²_{xy}φ − ∂_xφ ∂_yφ > 0` on the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupermodularityReport {
    pub holds: bool,
    pub min_margin: f64,
    pub worst_point: (f64, f64),
    pub samples: usize,
}

pub fn check_strict_supermodularity(p: &Payoff, points: &[(f64, f64)]) -> SupermodularityReport {
    let mut min_margin = f64::INFINITY;
    let mut worst_point = (f64::NAN, f64::NAN);
    let mut samples = 0;
    for &(x, y) in points {
        let phi = p.value(x, y);
        if phi <= 0.0 {
            continue;
        }
        let d = p.partials_unchecked(x, y);
        let margin = phi * d.dxy - d.dx * d.dy;
        samples += 1;
        if margin < min_margin {
            min_margin = margin;
            worst_point = (x, y);
        }
    }
    SupermodularityReport {
        holds: samples > 0 && min_margin > 0.0,
        min_margin,
        worst_point,
        samples,
    }
}

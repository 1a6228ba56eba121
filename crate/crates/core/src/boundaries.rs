//! Exercise boundaries `y ↦ x*(y)` (put side) and `x ↦ y*(x)` (call side),
//! by smooth-fit root finding and by ODE continuation.

use std::cell::RefCell;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fundamental::{exponent_a, exponent_b, LogDerivCurve, LogDerivKind};
use crate::market::MarketParams;
use crate::numerics::interp::Hermite;
use crate::numerics::ode::{dopri5, OdeOptions};
use crate::numerics::root::brent;
use crate::payoff::{Partials, Payoff};
use crate::vol::VolCurve;

const BRENT_ITERS: usize = 300;
/// Relative smooth-fit residual accepted from the root finder.
pub const SMOOTH_FIT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySide {
    /// `y ↦ x*(y)`.
    Put,
    /// `x ↦ y*(x)`.
    Call,
}

/// Monotone boundary stored as a cubic Hermite curve in log-log coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurve {
    side: BoundarySide,
    curve: Hermite,
}

impl BoundaryCurve {
    /// Builds from points `(abscissa, ordinate)` and slopes `d ordinate / d abscissa`.
    pub fn from_points(
        side: BoundarySide,
        abscissae: &[f64],
        ordinates: &[f64],
        slopes: &[f64],
    ) -> Result<Self> {
        let n = abscissae.len();
        if n < 2 || ordinates.len() != n || slopes.len() != n {
            return Err(Error::InvalidParameter(format!(
                "boundary curve needs >= 2 matching points, got {n}/{}/{}",
                ordinates.len(),
                slopes.len()
            )));
        }
        for i in 0..n {
            let (a, o, s) = (abscissae[i], ordinates[i], slopes[i]);
            if !(a > 0.0 && o > 0.0 && a.is_finite() && o.is_finite() && s.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "boundary point ({a}, {o}) slope {s}"
                )));
            }
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| abscissae[i].total_cmp(&abscissae[j]));
        if idx.windows(2).any(|w| abscissae[w[0]] == abscissae[w[1]]) {
            return Err(Error::InvalidParameter(
                "duplicate boundary abscissae".into(),
            ));
        }
        let t: Vec<f64> = idx.iter().map(|&i| abscissae[i].ln()).collect();
        let v: Vec<f64> = idx.iter().map(|&i| ordinates[i].ln()).collect();
        let s: Vec<f64> = idx
            .iter()
            .map(|&i| slopes[i] * abscissae[i] / ordinates[i])
            .collect();
        Ok(Self {
            side,
            curve: Hermite::new(t, v, s),
        })
    }

    /// Samples a known boundary and its derivative.
    pub fn from_fn(
        side: BoundarySide,
        abscissae: &[f64],
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let o: Vec<f64> = abscissae.iter().map(|&a| f(a)).collect();
        let s: Vec<f64> = abscissae.iter().map(|&a| df(a)).collect();
        Self::from_points(side, abscissae, &o, &s)
    }

    pub fn side(&self) -> BoundarySide {
        self.side
    }

    pub fn span(&self) -> (f64, f64) {
        (self.curve.lo().exp(), self.curve.hi().exp())
    }

    pub fn abscissae(&self) -> Vec<f64> {
        self.curve.knots().iter().map(|t| t.exp()).collect()
    }

    pub fn ordinates(&self) -> Vec<f64> {
        self.curve.values().iter().map(|t| t.exp()).collect()
    }

    fn log_of(&self, a: f64) -> Result<f64> {
        let t = a.ln();
        let (lo, hi) = (self.curve.lo(), self.curve.hi());
        let eps = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if !(t >= lo - eps && t <= hi + eps) {
            let (l, h) = self.span();
            return Err(Error::OutOfSpan {
                value: a,
                lo: l,
                hi: h,
            });
        }
        Ok(t.clamp(lo, hi))
    }

    pub fn eval(&self, a: f64) -> Result<f64> {
        Ok(self.curve.eval(self.log_of(a)?).exp())
    }

    /// `d ordinate / d abscissa`.
    pub fn slope(&self, a: f64) -> Result<f64> {
        let t = self.log_of(a)?;
        Ok(self.curve.derivative(t) * self.curve.eval(t).exp() / a)
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.curve.values().windows(2).all(|w| w[1] > w[0])
    }

    /// Abscissa with the given ordinate (the reciprocal boundary).
    pub fn inverse(&self, o: f64) -> Result<f64> {
        if !self.is_strictly_increasing() {
            return Err(Error::Hypothesis(
                "boundary is not strictly increasing; no inverse".into(),
            ));
        }
        let lo_v = self.curve.values()[0];
        let hi_v = *self.curve.values().last().unwrap();
        let target = o.ln();
        let eps = 1e-12 * (1.0 + lo_v.abs().max(hi_v.abs()));
        if !(target >= lo_v - eps && target <= hi_v + eps) {
            return Err(Error::OutOfSpan {
                value: o,
                lo: lo_v.exp(),
                hi: hi_v.exp(),
            });
        }
        let target = target.clamp(lo_v, hi_v);
        let knots = self.curve.knots();
        let values = self.curve.values();
        let i = values
            .partition_point(|&v| v < target)
            .clamp(1, values.len() - 1);
        let (a, b) = (knots[i - 1], knots[i]);
        let t = brent(
            |t| self.curve.eval(t) - target,
            a,
            b,
            1e-15 * (1.0 + b.abs()),
            BRENT_ITERS,
        )
        .ok_or_else(|| Error::NoConvergence(format!("boundary inverse at {o}")))?;
        Ok(t.exp())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        match self.side {
            BoundarySide::Put => writeln!(out, "y,x_star")?,
            BoundarySide::Call => writeln!(out, "x,y_star")?,
        }
        for (a, o) in self.abscissae().iter().zip(self.ordinates()) {
            writeln!(out, "{:.16e},{:.16e}", a, o)?;
        }
        Ok(())
    }
}

/// Bracket for the put boundary at `y` (given `σ̄`) or the call boundary at
/// `x` (given `η̄`).
pub fn boundary_brackets(
    p: &Payoff,
    side: BoundarySide,
    vol_bound: f64,
    m: &MarketParams,
    at: f64,
) -> Result<(f64, f64)> {
    match side {
        BoundarySide::Put => {
            let xe = p.x_edge(at);
            if !(xe > 0.0) || !xe.is_finite() {
                return Err(Error::Hypothesis(format!(
                    "X({at}) = {xe}: the put price is identically zero there"
                )));
            }
            let a = exponent_a(vol_bound, m)?;
            Ok((a / (a - 1.0) * xe, xe))
        }
        BoundarySide::Call => {
            let ye = p.y_edge(at);
            if !(ye > 0.0) || !ye.is_finite() {
                return Err(Error::Hypothesis(format!(
                    "Y({at}) = {ye} is not finite and positive"
                )));
            }
            let b = exponent_b(vol_bound, m)?;
            Ok((ye, b / (b - 1.0) * ye))
        }
    }
}

/// `φ/∂_xφ − 1/u(x)` at a support point.
pub fn put_smooth_fit(p: &Payoff, u: &LogDerivCurve, x: f64, y: f64) -> Result<f64> {
    let phi = p.value(x, y);
    let tail = -1.0 / u.log_derivative(x)?;
    if phi <= 0.0 {
        return Ok(tail);
    }
    Ok(phi / p.partials_unchecked(x, y).dx + tail)
}

/// `φ/∂_yφ − 1/v(y)` at a support point.
pub fn call_smooth_fit(p: &Payoff, v: &LogDerivCurve, x: f64, y: f64) -> Result<f64> {
    let phi = p.value(x, y);
    let tail = -1.0 / v.log_derivative(y)?;
    if phi <= 0.0 {
        return Ok(tail);
    }
    Ok(phi / p.partials_unchecked(x, y).dy + tail)
}

fn require_kind(c: &LogDerivCurve, k: LogDerivKind) -> Result<()> {
    if c.kind() != k {
        return Err(Error::InvalidParameter(format!(
            "expected a {k:?}-type log-derivative curve"
        )));
    }
    Ok(())
}

/// Unique `x* ∈ [a(σ̄)/(a(σ̄)−1)·X(y), X(y))` satisfying smooth fit.
pub fn put_boundary_at(y: f64, p: &Payoff, u: &LogDerivCurve) -> Result<f64> {
    require_kind(u, LogDerivKind::F)?;
    let (lo, hi) = boundary_brackets(p, BoundarySide::Put, u.vol_bound(), u.market(), y)?;
    let failure = RefCell::new(None);
    let mut f = |x: f64| match put_smooth_fit(p, u, x, y) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let f_lo = f(lo);
    let f_hi = f(hi);
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    let scale = hi;
    if f_lo.abs() <= SMOOTH_FIT_TOL * scale {
        return Ok(lo);
    }
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(Error::NotBracketed {
            lo,
            hi,
            detail: format!("put smooth fit at y={y}: F(lo)={f_lo:e}, F(hi)={f_hi:e}"),
        });
    }
    let x = brent(&mut f, lo, hi, 1e-15 * scale, BRENT_ITERS)
        .ok_or_else(|| Error::NoConvergence(format!("put boundary at y={y}")))?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let res = put_smooth_fit(p, u, x, y)?.abs();
    if res > SMOOTH_FIT_TOL * scale {
        return Err(Error::ResidualViolation {
            what: "put smooth fit",
            residual: res,
            tol: SMOOTH_FIT_TOL * scale,
            at: y,
        });
    }
    Ok(x)
}

/// Unique `y* ∈ (Y(x), b(η̄)/(b(η̄)−1)·Y(x)]` satisfying smooth fit.
pub fn call_boundary_at(x: f64, p: &Payoff, v: &LogDerivCurve) -> Result<f64> {
    require_kind(v, LogDerivKind::G)?;
    let (lo, hi) = boundary_brackets(p, BoundarySide::Call, v.vol_bound(), v.market(), x)?;
    let failure = RefCell::new(None);
    let mut f = |y: f64| match call_smooth_fit(p, v, x, y) {
        Ok(r) => r,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let f_lo = f(lo);
    let f_hi = f(hi);
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    let scale = lo;
    if f_hi.abs() <= SMOOTH_FIT_TOL * scale {
        return Ok(hi);
    }
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(Error::NotBracketed {
            lo,
            hi,
            detail: format!("call smooth fit at x={x}: G(lo)={f_lo:e}, G(hi)={f_hi:e}"),
        });
    }
    let y = brent(&mut f, lo, hi, 1e-15 * hi, BRENT_ITERS)
        .ok_or_else(|| Error::NoConvergence(format!("call boundary at x={x}")))?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let res = call_smooth_fit(p, v, x, y)?.abs();
    if res > SMOOTH_FIT_TOL * scale {
        return Err(Error::ResidualViolation {
            what: "call smooth fit",
            residual: res,
            tol: SMOOTH_FIT_TOL * scale,
            at: x,
        });
    }
    Ok(y)
}

/// `dx*/dy` along the put boundary from the smooth-fit relation.
fn put_implicit_slope(p: &Payoff, u: &LogDerivCurve, x: f64, y: f64) -> Result<f64> {
    let phi = p.value(x, y);
    let d = p.partials_unchecked(x, y);
    let uu = u.log_derivative(x)?;
    let du = u.log_derivative_slope(x)?;
    let fy = (d.dy * d.dx - phi * d.dxy) / (d.dx * d.dx);
    let fx = (d.dx * d.dx - phi * d.dxx) / (d.dx * d.dx) + du / (uu * uu);
    Ok(-fy / fx)
}

/// `dy*/dx` along the call boundary from the smooth-fit relation.
fn call_implicit_slope(p: &Payoff, v: &LogDerivCurve, x: f64, y: f64) -> Result<f64> {
    let phi = p.value(x, y);
    let d = p.partials_unchecked(x, y);
    let vv = v.log_derivative(y)?;
    let dv = v.log_derivative_slope(y)?;
    let gx = (d.dx * d.dy - phi * d.dxy) / (d.dy * d.dy);
    let gy = (d.dy * d.dy - phi * d.dyy) / (d.dy * d.dy) + dv / (vv * vv);
    Ok(-gx / gy)
}

/// Put boundary sampled at `ys` by independent root solves.
pub fn put_boundary_curve(ys: &[f64], p: &Payoff, u: &LogDerivCurve) -> Result<BoundaryCurve> {
    let xs: Vec<f64> = ys
        .par_iter()
        .map(|&y| put_boundary_at(y, p, u))
        .collect::<Result<_>>()?;
    let slopes: Vec<f64> = ys
        .iter()
        .zip(&xs)
        .map(|(&y, &x)| put_implicit_slope(p, u, x, y))
        .collect::<Result<_>>()?;
    BoundaryCurve::from_points(BoundarySide::Put, ys, &xs, &slopes)
}

/// Call boundary sampled at `xs` by independent root solves.
pub fn call_boundary_curve(xs: &[f64], p: &Payoff, v: &LogDerivCurve) -> Result<BoundaryCurve> {
    let ys: Vec<f64> = xs
        .par_iter()
        .map(|&x| call_boundary_at(x, p, v))
        .collect::<Result<_>>()?;
    let slopes: Vec<f64> = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| call_implicit_slope(p, v, x, y))
        .collect::<Result<_>>()?;
    BoundaryCurve::from_points(BoundarySide::Call, xs, &ys, &slopes)
}

/// Right-hand side of the put boundary ODE `dx*/dy`.
pub fn put_boundary_slope(x: f64, y: f64, sigma: f64, p: &Payoff, m: &MarketParams) -> Result<f64> {
    let phi = p.value(x, y);
    if !(x > 0.0) || phi <= 0.0 {
        return Err(Error::OutsideSupport { x, y });
    }
    let d: Partials = p.partials_unchecked(x, y);
    let sign = m.r * phi + (m.delta - m.r) * x * d.dx;
    if !(sign > 0.0) {
        return Err(Error::SignCondition {
            condition: "r·φ + (δ−r)x∂xφ",
            value: sign,
            x,
            y,
        });
    }
    let s2x2 = sigma * sigma * x * x;
    let den = 2.0 * sign - s2x2 * d.dxx;
    if !(den > 0.0) {
        return Err(Error::SignCondition {
            condition: "put boundary ODE denominator",
            value: den,
            x,
            y,
        });
    }
    Ok((d.dxy - d.dx * d.dy / phi) * s2x2 / den)
}

/// Right-hand side of the call boundary ODE `dy*/dx`.
pub fn call_boundary_slope(x: f64, y: f64, eta: f64, p: &Payoff, m: &MarketParams) -> Result<f64> {
    let phi = p.value(x, y);
    if !(y > 0.0) || phi <= 0.0 {
        return Err(Error::OutsideSupport { x, y });
    }
    let d = p.partials_unchecked(x, y);
    let sign = m.delta * phi + (m.r - m.delta) * y * d.dy;
    if !(sign > 0.0) {
        return Err(Error::SignCondition {
            condition: "δ·φ + (r−δ)y∂yφ",
            value: sign,
            x,
            y,
        });
    }
    let e2y2 = eta * eta * y * y;
    let den = 2.0 * sign - e2y2 * d.dyy;
    if !(den > 0.0) {
        return Err(Error::SignCondition {
            condition: "call boundary ODE denominator",
            value: den,
            x,
            y,
        });
    }
    Ok((d.dxy - d.dx * d.dy / phi) * e2y2 / den)
}

/// Minimum number of knots recorded along an ODE-continued boundary.
const ODE_MIN_KNOTS: f64 = 400.0;
/// Largest tolerated amplification of local errors, `ln 1e4`.
const MAX_LOG_GROWTH: f64 = 9.210_340_371_976_184;

fn continue_boundary(
    side: BoundarySide,
    start: f64,
    value: f64,
    end: f64,
    slope: impl Fn(f64, f64) -> Result<f64>,
) -> Result<BoundaryCurve> {
    if !(start > 0.0 && end > 0.0 && value > 0.0) || start == end {
        return Err(Error::InvalidParameter(format!(
            "boundary continuation needs positive distinct endpoints, got {start} -> {end} from {value}"
        )));
    }
    // Integrate ln(ordinate) against ln(abscissa).
    let rhs = |s: f64, l: f64| -> Result<f64> {
        let (a, o) = (s.exp(), l.exp());
        Ok(slope(a, o)? * a / o)
    };
    let (s0, s1) = (start.ln(), end.ln());
    let opts = OdeOptions {
        rtol: 1e-11,
        atol: 1e-13,
        max_step: (s1 - s0).abs() / ODE_MIN_KNOTS,
        ..OdeOptions::default()
    };
    let mut pts = vec![(start, value, slope(start, value)?)];
    // Growth of perturbations, exp ∫ ∂f/∂l ds, from any earlier point.
    let jacobian = |s: f64, l: f64| -> Result<f64> {
        let h = 1e-6 * l.abs().max(1.0);
        Ok((rhs(s, l + h)? - rhs(s, l - h)?) / (2.0 * h))
    };
    let (mut prev_s, mut prev_j) = (s0, jacobian(s0, value.ln())?);
    let (mut log_growth, mut low) = (0.0_f64, 0.0_f64);
    dopri5(&rhs, s0, value.ln(), s1, &opts, |s, l, dl| {
        let j = jacobian(s, l)?;
        log_growth += 0.5 * (j + prev_j) * (s - prev_s);
        low = low.min(log_growth);
        if log_growth - low > MAX_LOG_GROWTH {
            return Err(Error::IllConditioned {
                what: "boundary continuation",
                growth: (log_growth - low).exp(),
                at: s.exp(),
            });
        }
        (prev_s, prev_j) = (s, j);
        let (a, o) = (s.exp(), l.exp());
        pts.push((a, o, dl * o / a));
        Ok(())
    })?;
    let a: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let o: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let d: Vec<f64> = pts.iter().map(|p| p.2).collect();
    BoundaryCurve::from_points(side, &a, &o, &d)
}

/// Put boundary by integrating its ODE from `(x_start, y_start)` to `y_end`.
pub fn put_boundary_ode(
    y_start: f64,
    x_start: f64,
    y_end: f64,
    sigma: &VolCurve,
    p: &Payoff,
    m: &MarketParams,
) -> Result<BoundaryCurve> {
    m.validate()?;
    continue_boundary(BoundarySide::Put, y_start, x_start, y_end, |y, x| {
        if x >= p.x_edge(y) {
            return Err(Error::OutsideSupport { x, y });
        }
        put_boundary_slope(x, y, sigma.eval(x), p, m)
    })
}

/// Call boundary by integrating its ODE from `(x_start, y_start)` to `x_end`.
pub fn call_boundary_ode(
    x_start: f64,
    y_start: f64,
    x_end: f64,
    eta: &VolCurve,
    p: &Payoff,
    m: &MarketParams,
) -> Result<BoundaryCurve> {
    m.validate()?;
    continue_boundary(BoundarySide::Call, x_start, y_start, x_end, |x, y| {
        if y <= p.y_edge(x) {
            return Err(Error::OutsideSupport { x, y });
        }
        call_boundary_slope(x, y, eta.eval(y), p, m)
    })
}

//! Fundamental solutions `f` (decreasing) and `g` (increasing) of the
//! perpetual pricing ODEs, stored through their logarithmic derivatives.
//!
//! With `t = ln x` and `w = x f'/f`, the put-side equation
//! `½σ²x²f'' + (r−δ)xf' − rf = 0` becomes the Riccati equation
//! `w_t = w − w² + 2(r − (r−δ)w)/σ²`; the call side swaps `r ↔ δ`.

use std::io::Write;

use crate::error::{ensure_positive, Error, Result};
use crate::market::MarketParams;
use crate::numerics::grid::log_space;
use crate::numerics::interp::Hermite;
use crate::numerics::ode::{dopri5, OdeOptions};
use crate::vol::VolCurve;

/// `|w|` beyond which the Riccati integration is declared divergent.
const BLOW_UP: f64 = 1e6;

/// Negative root of `½ς²a(a−1) + (r−δ)a − r = 0`.
pub fn exponent_a(vol: f64, m: &MarketParams) -> Result<f64> {
    ensure_positive("volatility", vol)?;
    let s2 = vol * vol;
    let p = m.delta - m.r + 0.5 * s2;
    let q = (p * p + 2.0 * m.r * s2).sqrt();
    Ok(if p > 0.0 {
        -2.0 * m.r / (p + q)
    } else {
        (p - q) / s2
    })
}

/// Root `> 1` of `½ν²b(b−1) + (δ−r)b − δ = 0`, i.e. `1 − a(ν)`.
pub fn exponent_b(vol: f64, m: &MarketParams) -> Result<f64> {
    Ok(1.0 - exponent_a(vol, m)?)
}

/// The volatility `ς` with `a(ς) = a`, if any.
pub fn vol_for_exponent_a(a: f64, m: &MarketParams) -> Option<f64> {
    if !(a < 0.0) || !a.is_finite() {
        return None;
    }
    let num = 2.0 * (m.r - (m.r - m.delta) * a);
    let s2 = num / (a * (a - 1.0));
    (s2 > 0.0 && s2.is_finite()).then(|| s2.sqrt())
}

/// The volatility `ν` with `b(ν) = b`, if any.
pub fn vol_for_exponent_b(b: f64, m: &MarketParams) -> Option<f64> {
    vol_for_exponent_a(1.0 - b, m)
}

/// Residual of the put-side characteristic quadratic.
pub fn quadratic_residual_a(a: f64, vol: f64, m: &MarketParams) -> f64 {
    0.5 * vol * vol * a * (a - 1.0) + (m.r - m.delta) * a - m.r
}

/// Residual of the call-side characteristic quadratic.
pub fn quadratic_residual_b(b: f64, vol: f64, m: &MarketParams) -> f64 {
    0.5 * vol * vol * b * (b - 1.0) + (m.delta - m.r) * b - m.delta
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    pub a: f64,
    pub b: f64,
}

impl Exponents {
    pub fn new(vol: f64, m: &MarketParams) -> Result<Self> {
        let a = exponent_a(vol, m)?;
        Ok(Self { a, b: 1.0 - a })
    }
}

/// Log-spaced node layout and residual tolerance for a Riccati solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    pub residual_tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: 1e-4,
            hi: 1e4,
            nodes: 4096,
            residual_tol: 1e-8,
        }
    }
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        let g = Self {
            lo,
            hi,
            nodes,
            ..Self::default()
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("grid lo", self.lo)?;
        ensure_positive("grid hi", self.hi)?;
        ensure_positive("residual tolerance", self.residual_tol)?;
        if !(self.hi > self.lo) || self.nodes < 8 {
            return Err(Error::InvalidParameter(format!(
                "grid needs lo < hi and >= 8 nodes, got [{}, {}] with {}",
                self.lo, self.hi, self.nodes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogDerivKind {
    /// `u = f'/f < 0`, discounting at `r`.
    F,
    /// `v = g'/g > 0`, discounting at `δ`.
    G,
}

/// Tabulated logarithmic derivative of a fundamental solution.
#[derive(Debug, Clone)]
pub struct LogDerivCurve {
    kind: LogDerivKind,
    market: MarketParams,
    vol_bound: f64,
    /// `w(t) = x·u(x)` against `t = ln x`.
    w: Hermite,
    cumulative: Vec<f64>,
    max_residual: f64,
}

impl LogDerivCurve {
    pub fn kind(&self) -> LogDerivKind {
        self.kind
    }

    pub fn market(&self) -> &MarketParams {
        &self.market
    }

    /// Upper bound of the volatility the curve was built from.
    pub fn vol_bound(&self) -> f64 {
        self.vol_bound
    }

    pub fn span(&self) -> (f64, f64) {
        (self.w.lo().exp(), self.w.hi().exp())
    }

    pub fn max_residual(&self) -> f64 {
        self.max_residual
    }

    pub fn nodes(&self) -> Vec<f64> {
        self.w.knots().iter().map(|t| t.exp()).collect()
    }

    /// `x·u(x)` at the nodes.
    pub fn scaled_values(&self) -> &[f64] {
        self.w.values()
    }

    fn log_of(&self, x: f64) -> Result<f64> {
        let t = x.ln();
        let (lo, hi) = (self.w.lo(), self.w.hi());
        // Tolerate round-off in exp/ln at the span edges.
        let eps = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if !(t >= lo - eps && t <= hi + eps) {
            let (a, b) = self.span();
            return Err(Error::OutOfSpan {
                value: x,
                lo: a,
                hi: b,
            });
        }
        Ok(t.clamp(lo, hi))
    }

    /// `x·u(x)`, the elasticity of the fundamental solution.
    pub fn elasticity(&self, x: f64) -> Result<f64> {
        Ok(self.w.eval(self.log_of(x)?))
    }

    /// `u(x) = f'(x)/f(x)` (or `g'/g`).
    pub fn log_derivative(&self, x: f64) -> Result<f64> {
        Ok(self.elasticity(x)? / x)
    }

    /// `u'(x)`.
    pub fn log_derivative_slope(&self, x: f64) -> Result<f64> {
        let t = self.log_of(x)?;
        Ok((self.w.derivative(t) - self.w.eval(t)) / (x * x))
    }

    /// `f(x1)/f(x2)` (or `g(x1)/g(x2)`).
    pub fn ratio(&self, x1: f64, x2: f64) -> Result<f64> {
        let t1 = self.log_of(x1)?;
        let t2 = self.log_of(x2)?;
        Ok(
            (self.w.integral_to(&self.cumulative, t1) - self.w.integral_to(&self.cumulative, t2))
                .exp(),
        )
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let col = match self.kind {
            LogDerivKind::F => "u",
            LogDerivKind::G => "v",
        };
        writeln!(out, "x,{col}")?;
        for (t, w) in self.w.knots().iter().zip(self.w.values()) {
            let x = t.exp();
            writeln!(out, "{:.16e},{:.16e}", x, w / x)?;
        }
        Ok(())
    }
}

fn discount_and_drift(kind: LogDerivKind, m: &MarketParams) -> (f64, f64) {
    match kind {
        LogDerivKind::F => (m.r, m.r - m.delta),
        LogDerivKind::G => (m.delta, m.delta - m.r),
    }
}

fn riccati_rhs(kind: LogDerivKind, m: &MarketParams, w: f64, vol: f64) -> f64 {
    let (disc, drift) = discount_and_drift(kind, m);
    w - w * w + 2.0 * (disc - drift * w) / (vol * vol)
}

fn riccati_operator(kind: LogDerivKind, m: &MarketParams, w: f64, w_t: f64, vol: f64) -> f64 {
    let (disc, drift) = discount_and_drift(kind, m);
    0.5 * vol * vol * (w_t - w + w * w) + drift * w - disc
}

/// `f'/f` for the put-side ODE, anchored at the constant-vol fixed point at
/// the right edge and integrated toward zero.
pub fn solve_log_derivative_f(
    vol: &VolCurve,
    m: &MarketParams,
    grid: &GridSpec,
) -> Result<LogDerivCurve> {
    solve(LogDerivKind::F, vol, m, grid)
}

/// `g'/g` for the call-side ODE, anchored at the constant-vol fixed point at
/// the left edge and integrated toward infinity.
pub fn solve_log_derivative_g(
    vol: &VolCurve,
    m: &MarketParams,
    grid: &GridSpec,
) -> Result<LogDerivCurve> {
    solve(LogDerivKind::G, vol, m, grid)
}

/// `f(x1)/f(x2)` from a tabulated log-derivative.
pub fn f_ratio(u: &LogDerivCurve, x1: f64, x2: f64) -> Result<f64> {
    u.ratio(x1, x2)
}

fn solve(
    kind: LogDerivKind,
    vol: &VolCurve,
    m: &MarketParams,
    grid: &GridSpec,
) -> Result<LogDerivCurve> {
    m.validate()?;
    grid.validate()?;
    vol.validate_on(grid.lo, grid.hi)?;
    let ts: Vec<f64> = log_space(grid.lo, grid.hi, grid.nodes)
        .iter()
        .map(|x| x.ln())
        .collect();
    let n = ts.len();
    let sigma = |t: f64| vol.eval(t.exp());
    let mut w = vec![0.0; n];
    let opts = OdeOptions {
        rtol: 1e-12,
        atol: 1e-14,
        ..OdeOptions::default()
    };
    let rhs = |t: f64, y: f64| -> Result<f64> {
        if !y.is_finite() || y.abs() > BLOW_UP {
            return Err(Error::IntegrationBlowUp { at: t.exp() });
        }
        Ok(riccati_rhs(kind, m, y, sigma(t)))
    };
    let order: Vec<usize> = match kind {
        LogDerivKind::F => {
            w[n - 1] = exponent_a(sigma(ts[n - 1]), m)?;
            (0..n - 1).rev().collect()
        }
        LogDerivKind::G => {
            w[0] = exponent_b(sigma(ts[0]), m)?;
            (1..n).collect()
        }
    };
    for i in order {
        let from = match kind {
            LogDerivKind::F => i + 1,
            LogDerivKind::G => i - 1,
        };
        let y = dopri5(rhs, ts[from], w[from], ts[i], &opts, |_, _, _| Ok(()))?;
        if !y.is_finite() || y.abs() > BLOW_UP {
            return Err(Error::IntegrationBlowUp { at: ts[i].exp() });
        }
        w[i] = y;
    }
    let slopes: Vec<f64> = ts
        .iter()
        .zip(&w)
        .map(|(&t, &y)| riccati_rhs(kind, m, y, sigma(t)))
        .collect();
    for (i, &y) in w.iter().enumerate() {
        let ok = match kind {
            LogDerivKind::F => y < 0.0,
            LogDerivKind::G => y > 0.0,
        };
        if !ok {
            return Err(Error::SignCondition {
                condition: "sign of fundamental log-derivative",
                value: y,
                x: ts[i].exp(),
                y: ts[i].exp(),
            });
        }
    }
    let kinks: Vec<f64> = vol.kinks().iter().map(|k| k.ln()).collect();
    let max_residual = nodal_residual(kind, m, &ts, &w, &sigma, &kinks, grid.residual_tol)?;
    let w = Hermite::new(ts, w, slopes);
    let cumulative = w.cumulative_integral();
    Ok(LogDerivCurve {
        kind,
        market: *m,
        vol_bound: vol.upper_bound(),
        w,
        cumulative,
        max_residual,
    })
}

/// Riccati residual at interior nodes with `w_t` from a sixth-order
/// central difference of the tabulated values. Stencils straddling a point
/// where the volatility is only C¹ (`kinks`, in log coordinates) are skipped.
fn nodal_residual(
    kind: LogDerivKind,
    m: &MarketParams,
    ts: &[f64],
    w: &[f64],
    sigma: &dyn Fn(f64) -> f64,
    kinks: &[f64],
    tol: f64,
) -> Result<f64> {
    let mut worst = 0.0_f64;
    for i in 3..ts.len() - 3 {
        if kinks.iter().any(|&k| k > ts[i - 3] && k < ts[i + 3]) {
            continue;
        }
        let h = 0.5 * (ts[i + 1] - ts[i - 1]);
        let w_t = (-w[i - 3] + 9.0 * w[i - 2] - 45.0 * w[i - 1] + 45.0 * w[i + 1] - 9.0 * w[i + 2]
            + w[i + 3])
            / (60.0 * h);
        let res = riccati_operator(kind, m, w[i], w_t, sigma(ts[i])).abs();
        if !(res <= tol) {
            return Err(Error::ResidualViolation {
                what: "Riccati",
                residual: res,
                tol,
                at: ts[i].exp(),
            });
        }
        worst = worst.max(res);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duality::analytic::GammaExample;
    use crate::payoff::Payoff;
    use crate::vol::ClosedFormVol;

    fn mk(r: f64, d: f64) -> MarketParams {
        MarketParams::new(r, d).unwrap()
    }

    #[test]
    fn exponent_examples() {
        let m = mk(0.2, 0.2);
        let s = (8.0 * 0.2 / 3.0_f64).sqrt();
        assert!((exponent_a(s, &m).unwrap() + 0.5).abs() < 1e-15);
        assert!((exponent_b(s, &m).unwrap() - 1.5).abs() < 1e-15);
        assert!((exponent_a(1.0, &m).unwrap() + 0.306_225_774_829_854_97).abs() < 1e-14);
        let m = mk(0.2, 0.1);
        assert!((exponent_a(1.0, &m).unwrap() + 0.348_331_477_354_788_25).abs() < 1e-14);
        assert!((exponent_b(1.0, &m).unwrap() - 1.348_331_477_354_788_3).abs() < 1e-14);
        assert!((exponent_a(0.1_f64.sqrt(), &mk(0.2, 0.15)).unwrap() + 2.0).abs() < 1e-14);
        assert!(exponent_a(0.0, &m).is_err());
        assert!(exponent_b(-1.0, &m).is_err());
    }

    #[test]
    fn exponent_inverse() {
        let m = mk(0.2, 0.1);
        let a = exponent_a(0.37, &m).unwrap();
        assert!((vol_for_exponent_a(a, &m).unwrap() - 0.37).abs() < 1e-13);
        let b = exponent_b(0.37, &m).unwrap();
        assert!((vol_for_exponent_b(b, &m).unwrap() - 0.37).abs() < 1e-13);
        let m = mk(0.1, 0.3);
        assert!(vol_for_exponent_a(-0.6, &m).is_none());
        assert!(vol_for_exponent_a(0.5, &m).is_none());
    }

    #[test]
    fn constant_vol_is_power_law() {
        let m = mk(0.2, 0.2);
        let s = (8.0 * 0.2 / 3.0_f64).sqrt();
        let vol = VolCurve::constant(s).unwrap();
        let g = GridSpec::default();
        let u = solve_log_derivative_f(&vol, &m, &g).unwrap();
        for x in u.nodes() {
            assert!((u.log_derivative(x).unwrap() * x + 0.5).abs() < 5e-9);
        }
        assert!((f_ratio(&u, 2.0, 1.0).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((f_ratio(&u, 4.0, 1.0).unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(f_ratio(&u, 3.0, 3.0).unwrap(), 1.0);
        assert!(matches!(u.ratio(1e5, 1.0), Err(Error::OutOfSpan { .. })));
        let v = solve_log_derivative_g(&vol, &m, &g).unwrap();
        assert!((v.log_derivative(2.0).unwrap() * 2.0 - 1.5).abs() < 5e-9);
        assert!((v.ratio(2.0, 3.0).unwrap() - (2.0_f64 / 3.0).powf(1.5)).abs() < 1e-9);
    }

    #[test]
    fn smooth_fit_identity_gamma_example() {
        let m = mk(0.2, 0.1);
        let e = GammaExample::new(0.75, 1.5, 5.0 / 9.0, 1.0, m).unwrap();
        let p = Payoff::power_gamma(0.75).unwrap();
        let g = GridSpec::default();
        let u = solve_log_derivative_f(&VolCurve::ClosedForm(ClosedFormVol::GammaSigma(e)), &m, &g)
            .unwrap();
        let v = solve_log_derivative_g(&VolCurve::ClosedForm(ClosedFormVol::GammaEta(e)), &m, &g)
            .unwrap();
        for y in log_space(0.1, 10.0, 41) {
            let x = e.x_star(y);
            let d = p.partials(x, y).unwrap();
            let want = d.dx / p.value(x, y);
            assert!(
                (u.log_derivative(x).unwrap() / want - 1.0).abs() < 1e-5,
                "y={y}"
            );
        }
        for x in log_space(0.1, 10.0, 41) {
            let y = e.y_star(x);
            let d = p.partials(x, y).unwrap();
            let want = d.dy / p.value(x, y);
            assert!(
                (v.log_derivative(y).unwrap() / want - 1.0).abs() < 1e-5,
                "x={x}"
            );
        }
    }

    #[test]
    fn step_vol_tails() {
        let m = mk(0.2, 0.1);
        let vol = VolCurve::logistic_step(0.2, 0.4, 1.0, 0.2).unwrap();
        let u = solve_log_derivative_f(&vol, &m, &GridSpec::default()).unwrap();
        let a1 = exponent_a(0.2, &m).unwrap();
        let a2 = exponent_a(0.4, &m).unwrap();
        assert!((u.elasticity(1e-4).unwrap() - a1).abs() < 1e-6);
        assert!((u.elasticity(1e4).unwrap() - a2).abs() < 1e-12);
        assert!(u.max_residual() <= 1e-8);
    }

    #[test]
    fn g_grows_superlinearly() {
        let m = mk(0.2, 0.1);
        let vol = VolCurve::logistic_step(0.3, 0.6, 1.0, 0.5).unwrap();
        let v = solve_log_derivative_g(&vol, &m, &GridSpec::default()).unwrap();
        let growth = v.ratio(1e4, 1.0).unwrap().ln();
        assert!(growth > 1e4_f64.ln());
    }

    #[test]
    fn csv_export() {
        let m = mk(0.2, 0.1);
        let g = GridSpec::new(0.1, 10.0, 16).unwrap();
        let u = solve_log_derivative_f(&VolCurve::constant(0.3).unwrap(), &m, &g).unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("x,u\n"));
        assert_eq!(s.lines().count(), 17);
    }
}

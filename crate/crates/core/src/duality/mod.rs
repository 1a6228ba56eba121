//! Dual local volatilities linking put-type and call-type problems.

pub mod analytic;

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::boundaries::{call_boundary_curve, put_boundary_curve, BoundaryCurve, BoundarySide};
use crate::error::{Error, Result};
use crate::fundamental::{
    exponent_a, exponent_b, solve_log_derivative_f, solve_log_derivative_g, vol_for_exponent_a,
    vol_for_exponent_b, GridSpec,
};
use crate::market::MarketParams;
use crate::payoff::{Payoff, PayoffFamily, ScalarFn};
use crate::pricing::{
    finite_maturity_curve, perpetual_call_price, perpetual_put_price, FdGrid, FdSide, MaturityRow,
};
use crate::vol::{ClosedFormVol, VolCurve};
use analytic::{GammaExample, PsiPowerExample};

/// Smallest margin recorded for one side condition over a span.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionMargin {
    pub condition: String,
    pub min_margin: f64,
    pub at: f64,
}

/// Maximal interval of nodes where a condition fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationInterval {
    pub condition: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConditionReport {
    pub margins: Vec<ConditionMargin>,
    pub violations: Vec<ViolationInterval>,
    /// Range of the produced volatility on its valid nodes.
    pub vol_min: Option<f64>,
    pub vol_max: Option<f64>,
}

impl ConditionReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty() && self.margins.iter().all(|m| m.min_margin > 0.0)
    }

    fn record(&mut self, name: &str, margin: f64, at: f64) {
        match self.margins.iter_mut().find(|m| m.condition == name) {
            Some(m) => {
                if margin < m.min_margin || m.min_margin.is_nan() {
                    m.min_margin = margin;
                    m.at = at;
                }
            }
            None => self.margins.push(ConditionMargin {
                condition: name.to_string(),
                min_margin: margin,
                at,
            }),
        }
    }

    fn merge(&mut self, other: &ConditionReport) {
        for m in &other.margins {
            self.record(&m.condition, m.min_margin, m.at);
        }
        self.violations.extend(other.violations.iter().cloned());
    }
}

/// A dual volatility tabulated on the nodes where the theorem's conditions
/// hold; `curve` covers the longest contiguous valid run.
#[derive(Debug, Clone)]
pub struct DualVol {
    pub curve: VolCurve,
    pub nodes: Vec<f64>,
    /// `NaN` where a condition fails.
    pub values: Vec<f64>,
    pub report: ConditionReport,
}

impl DualVol {
    pub fn is_complete(&self) -> bool {
        self.report.holds()
    }

    /// `(lo, hi)` of the tabulated curve.
    pub fn valid_span(&self) -> (f64, f64) {
        match &self.curve {
            VolCurve::Tabulated(t) => t.span(),
            _ => (self.nodes[0], *self.nodes.last().unwrap()),
        }
    }

    pub fn write_csv<W: Write>(&self, column: &str, mut out: W) -> std::io::Result<()> {
        writeln!(out, "node,{column}")?;
        for (a, v) in self.nodes.iter().zip(&self.values) {
            if v.is_finite() {
                writeln!(out, "{:.16e},{:.16e}", a, v)?;
            } else {
                writeln!(out, "{:.16e},", a)?;
            }
        }
        Ok(())
    }
}

type NodeEval = Result<(f64, Vec<(&'static str, f64)>)>;

/// Turns per-node `(vol², margins)` into a tabulated curve and a report.
fn assemble(nodes: &[f64], evals: Vec<NodeEval>) -> Result<DualVol> {
    let mut report = ConditionReport::default();
    let mut values = vec![f64::NAN; nodes.len()];
    let mut failing: Vec<Option<&'static str>> = vec![None; nodes.len()];
    for (i, e) in evals.into_iter().enumerate() {
        let (v2, margins) = e?;
        let mut bad = None;
        for (name, m) in margins {
            report.record(name, m, nodes[i]);
            if !(m > 0.0) && bad.is_none() {
                bad = Some(name);
            }
        }
        if bad.is_none() && !(v2 > 0.0 && v2.is_finite()) {
            report.record("dual variance positive", v2, nodes[i]);
            bad = Some("dual variance positive");
        }
        match bad {
            None => values[i] = v2.sqrt(),
            Some(name) => failing[i] = Some(name),
        }
    }
    let mut i = 0;
    while i < nodes.len() {
        if let Some(name) = failing[i] {
            let start = i;
            while i + 1 < nodes.len() && failing[i + 1].is_some() {
                i += 1;
            }
            report.violations.push(ViolationInterval {
                condition: name.to_string(),
                lo: nodes[start],
                hi: nodes[i],
            });
        }
        i += 1;
    }
    // Longest run of valid nodes.
    let (mut best, mut cur) = ((0, 0), (0, 0));
    for (i, v) in values.iter().enumerate() {
        if v.is_finite() {
            if cur.1 == cur.0 {
                cur = (i, i + 1);
            } else {
                cur.1 = i + 1;
            }
            if cur.1 - cur.0 > best.1 - best.0 {
                best = cur;
            }
        } else {
            cur = (i + 1, i + 1);
        }
    }
    if best.1 - best.0 < 2 {
        let worst = report
            .margins
            .iter()
            .min_by(|a, b| a.min_margin.total_cmp(&b.min_margin))
            .cloned();
        return Err(match worst {
            Some(w) => Error::Inadmissible(format!(
                "no dual volatility: condition '{}' has margin {:e} at {}",
                w.condition, w.min_margin, w.at
            )),
            None => Error::Inadmissible("no dual volatility on the requested span".into()),
        });
    }
    let xs = nodes[best.0..best.1].to_vec();
    let vs = values[best.0..best.1].to_vec();
    report.vol_min = vs.iter().cloned().reduce(f64::min);
    report.vol_max = vs.iter().cloned().reduce(f64::max);
    Ok(DualVol {
        curve: VolCurve::tabulated(xs, vs)?,
        nodes: nodes.to_vec(),
        values,
        report,
    })
}

fn require_increasing(nodes: &[f64]) -> Result<()> {
    if nodes.len() < 2 || !nodes.windows(2).all(|w| w[1] > w[0]) || !(nodes[0] > 0.0) {
        return Err(Error::InvalidParameter(
            "dual nodes must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

fn require_side(c: &BoundaryCurve, side: BoundarySide) -> Result<()> {
    if c.side() != side {
        return Err(Error::InvalidParameter(format!(
            "expected a {side:?}-side boundary curve"
        )));
    }
    Ok(())
}

/// Put boundary of `sigma` sampled at `ys` by the smooth-fit root finder.
pub fn put_boundary_for(
    sigma: &VolCurve,
    p: &Payoff,
    m: &MarketParams,
    ys: &[f64],
    grid: &GridSpec,
) -> Result<BoundaryCurve> {
    let u = solve_log_derivative_f(sigma, m, grid)?;
    put_boundary_curve(ys, p, &u)
}

/// Call boundary of `eta` sampled at `xs` by the smooth-fit root finder.
pub fn call_boundary_for(
    eta: &VolCurve,
    p: &Payoff,
    m: &MarketParams,
    xs: &[f64],
    grid: &GridSpec,
) -> Result<BoundaryCurve> {
    let v = solve_log_derivative_g(eta, m, grid)?;
    call_boundary_curve(xs, p, &v)
}

/// Call-put dual `σ̃(y) = 2(y−x*)(ry−δx*)/(y·x*·σ(x*))`.
pub fn dual_vol_callput(
    sigma: &VolCurve,
    m: &MarketParams,
    ys: &[f64],
    grid: &GridSpec,
) -> Result<DualVol> {
    require_increasing(ys)?;
    let x_star = put_boundary_for(sigma, &Payoff::call_put(), m, ys, grid)?;
    let evals = ys
        .iter()
        .map(|&y| {
            let x = x_star.eval(y)?;
            let s = sigma.eval(x);
            let carry = m.r * y - m.delta * x;
            let v = 2.0 * (y - x) * carry / (y * x * s);
            Ok((v * v, vec![("r·y − δ·x*", carry)]))
        })
        .collect();
    assemble(ys, evals)
}

/// Call-put inverse dual `η̃(x) = 2(y*−x)(ry*−δx)/(x·y*·η(y*))`.
pub fn inverse_dual_vol_callput(
    eta: &VolCurve,
    m: &MarketParams,
    xs: &[f64],
    grid: &GridSpec,
) -> Result<DualVol> {
    require_increasing(xs)?;
    let y_star = call_boundary_for(eta, &Payoff::call_put(), m, xs, grid)?;
    let evals = xs
        .iter()
        .map(|&x| {
            let y = y_star.eval(x)?;
            let e = eta.eval(y);
            let carry = m.r * y - m.delta * x;
            let v = 2.0 * (y - x) * carry / (x * y * e);
            Ok((v * v, vec![("r·y* − δ·x", carry)]))
        })
        .collect();
    assemble(xs, evals)
}

fn psi_functions(p: &Payoff) -> Result<(ScalarFn, ScalarFn)> {
    p.psi_pair().ok_or_else(|| {
        Error::InvalidParameter("payoff is not of the (ψ_y(y) − ψ_x(x))^+ form".into())
    })
}

/// Dual of `σ` for `(ψ_y(y) − ψ_x(x))^+` payoffs, given the put boundary.
pub fn dual_vol_psi(
    sigma: &VolCurve,
    x_star: &BoundaryCurve,
    p: &Payoff,
    m: &MarketParams,
    ys: &[f64],
) -> Result<DualVol> {
    require_increasing(ys)?;
    require_side(x_star, BoundarySide::Put)?;
    let (px, py) = psi_functions(p)?;
    let evals = ys
        .iter()
        .map(|&y| {
            let x = x_star.eval(y)?;
            let s2x2 = sigma.eval(x).powi(2) * x * x;
            let gap = py.value(y) - px.value(x);
            let (dx, dy) = (px.d1(x), py.d1(y));
            let put_term = 2.0 * (m.r * gap + (m.r - m.delta) * x * dx) + s2x2 * px.d2(x);
            let a = (gap / (dx * dy)).powi(2) * put_term / s2x2;
            let denom = 1.0 + py.d2(y) * a;
            let call_term = m.delta * gap + (m.r - m.delta) * y * dy;
            let v2 = 2.0 * call_term * a / denom / (y * y);
            Ok((
                v2,
                vec![
                    ("1 + ψ_y''·A", denom),
                    ("δ(ψ_y − ψ_x∘x*) + (r−δ)yψ_y'", call_term),
                ],
            ))
        })
        .collect();
    assemble(ys, evals)
}

/// Inverse dual for `(ψ_y(y) − ψ_x(x))^+` payoffs, given the call boundary.
pub fn inverse_dual_vol_psi(
    eta: &VolCurve,
    y_star: &BoundaryCurve,
    p: &Payoff,
    m: &MarketParams,
    xs: &[f64],
) -> Result<DualVol> {
    require_increasing(xs)?;
    require_side(y_star, BoundarySide::Call)?;
    if !p.supports_inverse_psi_duality() {
        return Err(Error::Hypothesis(
            "ψ_x must satisfy the scaling bound ψ_x(αx) ≥ C_α ψ_x(x) (power with exponent ≥ 1)"
                .into(),
        ));
    }
    let (px, py) = psi_functions(p)?;
    let evals = xs
        .iter()
        .map(|&x| {
            let y = y_star.eval(x)?;
            let e2y2 = eta.eval(y).powi(2) * y * y;
            let gap = py.value(y) - px.value(x);
            let (dx, dy) = (px.d1(x), py.d1(y));
            let call_term = 2.0 * (m.delta * gap + (m.r - m.delta) * y * dy) - e2y2 * py.d2(y);
            let b = (gap / (dx * dy)).powi(2) * call_term / e2y2;
            let denom = 1.0 - px.d2(x) * b;
            let put_term = m.r * gap + (m.r - m.delta) * x * dx;
            let v2 = 2.0 * put_term * b / denom / (x * x);
            Ok((
                v2,
                vec![
                    ("1 − ψ_x''·B", denom),
                    ("r(ψ_y∘y* − ψ_x) + (r−δ)xψ_x'", put_term),
                ],
            ))
        })
        .collect();
    assemble(xs, evals)
}

fn gamma_of(p: &Payoff) -> Result<f64> {
    match p.family {
        PayoffFamily::PowerGamma { gamma } => Ok(gamma),
        PayoffFamily::CallPut => Ok(1.0),
        _ => Err(Error::InvalidParameter(
            "payoff is not of the ((y − x)^+)^γ form".into(),
        )),
    }
}

/// Dual of `σ` for `((y − x)^+)^γ`, given the put boundary.
pub fn dual_vol_gamma(
    sigma: &VolCurve,
    x_star: &BoundaryCurve,
    gamma: f64,
    m: &MarketParams,
    ys: &[f64],
) -> Result<DualVol> {
    require_increasing(ys)?;
    require_side(x_star, BoundarySide::Put)?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be in (0, 1], got {gamma}"
        )));
    }
    let g = gamma;
    let k = 2.0 * (1.0 - g) / (g * g * (2.0 - g));
    let evals = ys
        .iter()
        .map(|&y| {
            let x = x_star.eval(y)?;
            let s2x2 = sigma.eval(x).powi(2) * x * x;
            let d = y - x;
            let put_q = m.r * d * d + g * (m.r - m.delta) * x * d;
            let call_q = m.delta * d * d + g * (m.r - m.delta) * y * d;
            let margin = s2x2 - k * put_q;
            let num = 2.0 * put_q + g * (1.0 - g) * s2x2;
            let den = g * g * (2.0 - g) * s2x2 - 2.0 * (1.0 - g) * put_q;
            let v2 = 2.0 * call_q / (g * y * y) * num / den;
            Ok((
                v2,
                vec![("x*²σ²(x*) − κ·[r(y−x*)² + γ(r−δ)x*(y−x*)]", margin)],
            ))
        })
        .collect();
    assemble(ys, evals)
}

/// `max(r−δ, (δ−r)(γδ+(1−γ)r)/((1−γ)δ+γr)) − (1−γ)σ̄²/2`.
pub fn gamma_applicability_margin(gamma: f64, vol_bound: f64, m: &MarketParams) -> f64 {
    let (r, d, g) = (m.r, m.delta, gamma);
    let lhs = (r - d).max((d - r) * (g * d + (1.0 - g) * r) / ((1.0 - g) * d + g * r));
    lhs - 0.5 * (1.0 - g) * vol_bound * vol_bound
}

/// Inverse dual for `((y − x)^+)^γ`, given the call boundary. The extra
/// applicability condition is checked on the produced volatility.
pub fn inverse_dual_vol_gamma(
    eta: &VolCurve,
    y_star: &BoundaryCurve,
    gamma: f64,
    m: &MarketParams,
    xs: &[f64],
) -> Result<DualVol> {
    require_increasing(xs)?;
    require_side(y_star, BoundarySide::Call)?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be in (0, 1], got {gamma}"
        )));
    }
    let g = gamma;
    let k = 2.0 * (1.0 - g) / (g * g * (2.0 - g));
    let ratio = (g * m.delta + (1.0 - g) * m.r) / m.r;
    let evals = xs
        .iter()
        .map(|&x| {
            let y = y_star.eval(x)?;
            let e2y2 = eta.eval(y).powi(2) * y * y;
            let d = y - x;
            let put_q = m.r * d * d + g * (m.r - m.delta) * x * d;
            let call_q = m.delta * d * d + g * (m.r - m.delta) * y * d;
            let margin = e2y2 - k * call_q;
            let num = 2.0 * call_q + g * (1.0 - g) * e2y2;
            let den = g * g * (2.0 - g) * e2y2 - 2.0 * (1.0 - g) * call_q;
            let v2 = 2.0 * put_q / (g * x * x) * num / den;
            Ok((
                v2,
                vec![
                    ("y*²η²(y*) − κ·[δ(y*−x)² + γ(r−δ)y*(y*−x)]", margin),
                    ("y* − (γδ+(1−γ)r)/r·x", y - ratio * x),
                ],
            ))
        })
        .collect();
    let mut out = assemble(xs, evals)?;
    if g < 1.0 {
        let bound = out.curve.upper_bound();
        let margin = gamma_applicability_margin(g, bound, m);
        out.report
            .record("applicability: max(...) − (1−γ)σ̄²/2", margin, bound);
        if !(margin > 0.0) {
            return Err(Error::Hypothesis(format!(
                "inverse duality needs max(r−δ, (δ−r)(γδ+(1−γ)r)/((1−γ)δ+γr)) > (1−γ)σ̄²/2; margin {margin:e} with σ̄={bound}"
            )));
        }
    }
    Ok(out)
}

/// Forward dual by payoff family.
pub fn dual_vol(
    sigma: &VolCurve,
    p: &Payoff,
    m: &MarketParams,
    ys: &[f64],
    grid: &GridSpec,
) -> Result<(DualVol, BoundaryCurve)> {
    let x_star = put_boundary_for(sigma, p, m, ys, grid)?;
    let dv = match p.family {
        PayoffFamily::CallPut | PayoffFamily::PowerGamma { .. } => {
            dual_vol_gamma(sigma, &x_star, gamma_of(p)?, m, ys)?
        }
        PayoffFamily::PowerPair { .. } | PayoffFamily::PsiDifference { .. } => {
            dual_vol_psi(sigma, &x_star, p, m, ys)?
        }
    };
    Ok((dv, x_star))
}

/// Inverse dual by payoff family.
pub fn inverse_dual_vol(
    eta: &VolCurve,
    p: &Payoff,
    m: &MarketParams,
    xs: &[f64],
    grid: &GridSpec,
) -> Result<(DualVol, BoundaryCurve)> {
    let y_star = call_boundary_for(eta, p, m, xs, grid)?;
    let dv = inverse_dual_from_boundary(eta, &y_star, p, m, xs)?;
    Ok((dv, y_star))
}

/// Inverse dual by payoff family from an already known call boundary.
pub fn inverse_dual_from_boundary(
    eta: &VolCurve,
    y_star: &BoundaryCurve,
    p: &Payoff,
    m: &MarketParams,
    xs: &[f64],
) -> Result<DualVol> {
    match p.family {
        PayoffFamily::CallPut | PayoffFamily::PowerGamma { .. } => {
            inverse_dual_vol_gamma(eta, y_star, gamma_of(p)?, m, xs)
        }
        PayoffFamily::PowerPair { .. } | PayoffFamily::PsiDifference { .. } => {
            inverse_dual_vol_psi(eta, y_star, p, m, xs)
        }
    }
}

/// Which constant volatility is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Given {
    Sigma(f64),
    Eta(f64),
}

/// Constant dual volatility from `γ′a(ς) + γb(ν) = γγ′` (power pair) or
/// `a(ς) + b(ν) = γ` (γ-power); `None` when no positive solution exists.
pub fn solve_dual_constant_vol(given: Given, p: &Payoff, m: &MarketParams) -> Result<Option<f64>> {
    m.validate()?;
    let (g, gp) = match p.family {
        PayoffFamily::CallPut => (1.0, 1.0),
        PayoffFamily::PowerGamma { gamma } => (gamma, gamma),
        PayoffFamily::PowerPair {
            gamma, gamma_prime, ..
        } => (gamma, gamma_prime),
        PayoffFamily::PsiDifference { .. } => {
            return Err(Error::InvalidParameter(
                "constant duals are defined for call-put, power-pair and γ-power payoffs".into(),
            ))
        }
    };
    Ok(match given {
        Given::Sigma(s) => {
            let a = exponent_a(s, m)?;
            let b = gp * (g - a) / g;
            if b > 1.0 {
                vol_for_exponent_b(b, m)
            } else {
                None
            }
        }
        Given::Eta(n) => {
            let b = exponent_b(n, m)?;
            vol_for_exponent_a(g * (gp - b) / gp, m)
        }
    })
}

/// Residual of the constant-vol exponent relation for a solved pair.
pub fn constant_exponent_residual(
    sigma: f64,
    eta: f64,
    p: &Payoff,
    m: &MarketParams,
) -> Result<f64> {
    let (g, gp) = match p.family {
        PayoffFamily::CallPut => (1.0, 1.0),
        PayoffFamily::PowerGamma { gamma } => (gamma, gamma),
        PayoffFamily::PowerPair {
            gamma, gamma_prime, ..
        } => (gamma, gamma_prime),
        PayoffFamily::PsiDifference { .. } => {
            return Err(Error::InvalidParameter("no exponent relation".into()))
        }
    };
    Ok(gp * exponent_a(sigma, m)? + g * exponent_b(eta, m)? - g * gp)
}

/// A put-type volatility and its call-type dual, with both boundaries.
#[derive(Debug, Clone)]
pub struct DualPair {
    pub payoff: Payoff,
    pub market: MarketParams,
    pub sigma: VolCurve,
    pub eta: VolCurve,
    /// `y ↦ x*(y)`.
    pub x_star: BoundaryCurve,
    /// `x ↦ y*(x)`.
    pub y_star: BoundaryCurve,
    pub report: ConditionReport,
}

impl DualPair {
    /// Largest `|y*(x*(y)) − y|/y` over `ys`.
    pub fn reciprocity_error(&self, ys: &[f64]) -> Result<f64> {
        ys.iter().try_fold(0.0_f64, |acc, &y| {
            let back = self.y_star.eval(self.x_star.eval(y)?)?;
            Ok(acc.max((back - y).abs() / y))
        })
    }

    /// CSV with columns `x, sigma, y, eta, x_star, y_star` on a shared grid.
    pub fn write_csv<W: Write>(&self, samples: &[f64], mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,sigma,y,eta,x_star,y_star")?;
        let cell = |r: Result<f64>| r.map(|v| format!("{v:.16e}")).unwrap_or_default();
        for &s in samples {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                s,
                self.sigma.eval(s),
                s,
                self.eta.eval(s),
                cell(self.x_star.eval(s)),
                cell(self.y_star.eval(s)),
            )?;
        }
        Ok(())
    }
}

/// Closed-form pair for `(α y − x^γ)^+` sampled on `[lo, hi]`.
pub fn analytic_pair_psi(e: PsiPowerExample, lo: f64, hi: f64, nodes: usize) -> Result<DualPair> {
    let grid = crate::numerics::grid::log_space(lo, hi, nodes);
    let x_star = BoundaryCurve::from_fn(
        BoundarySide::Put,
        &grid,
        |y| e.x_star(y),
        |y| e.x_star_slope(y),
    )?;
    let y_star = BoundaryCurve::from_fn(
        BoundarySide::Call,
        &grid,
        |x| e.y_star(x),
        |x| e.y_star_slope(x),
    )?;
    Ok(DualPair {
        payoff: Payoff::power_pair(e.alpha, e.gamma, 1.0)?,
        market: e.market,
        sigma: VolCurve::ClosedForm(ClosedFormVol::PsiPowerSigma(e)),
        eta: VolCurve::ClosedForm(ClosedFormVol::PsiPowerEta(e)),
        x_star,
        y_star,
        report: ConditionReport::default(),
    })
}

/// Closed-form pair for `((y − x)^+)^γ` sampled on `[lo, hi]`.
pub fn analytic_pair_gamma(e: GammaExample, lo: f64, hi: f64, nodes: usize) -> Result<DualPair> {
    let grid = crate::numerics::grid::log_space(lo, hi, nodes);
    let x_star = BoundaryCurve::from_fn(
        BoundarySide::Put,
        &grid,
        |y| e.x_star(y),
        |y| e.x_star_slope(y),
    )?;
    let y_star = BoundaryCurve::from_fn(
        BoundarySide::Call,
        &grid,
        |x| e.y_star(x),
        |x| e.y_star_slope(x),
    )?;
    Ok(DualPair {
        payoff: Payoff::power_gamma(e.gamma)?,
        market: e.market,
        sigma: VolCurve::ClosedForm(ClosedFormVol::GammaSigma(e)),
        eta: VolCurve::ClosedForm(ClosedFormVol::GammaEta(e)),
        x_star,
        y_star,
        report: ConditionReport::default(),
    })
}

/// Numerical pair: dual of `sigma` on `ys`, with both boundaries solved by
/// smooth fit. The call boundary is sampled on the image `x*(ys)`.
pub fn build_dual_pair(
    sigma: VolCurve,
    p: &Payoff,
    m: &MarketParams,
    ys: &[f64],
    grid: &GridSpec,
) -> Result<DualPair> {
    let (dv, x_star) = dual_vol(&sigma, p, m, ys, grid)?;
    if !dv.is_complete() {
        let v = &dv.report.violations;
        return Err(Error::Inadmissible(format!(
            "dual conditions fail on {} interval(s), first: {:?}",
            v.len(),
            v.first()
        )));
    }
    let xs: Vec<f64> = x_star.ordinates();
    let y_star = call_boundary_for(&dv.curve, p, m, &xs, grid)?;
    let mut report = ConditionReport::default();
    report.merge(&dv.report);
    report.vol_min = dv.report.vol_min;
    report.vol_max = dv.report.vol_max;
    Ok(DualPair {
        payoff: *p,
        market: *m,
        sigma,
        eta: dv.curve,
        x_star,
        y_star,
        report,
    })
}

/// Outcome of a duality check.
#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub reciprocity_max_rel: f64,
    pub perpetual_max_rel_gap: f64,
    pub perpetual_worst_point: (f64, f64),
    /// `(x, y, P, c)` at the finite-maturity point.
    pub perpetual_at_point: Option<(f64, f64, f64, f64)>,
    pub finite_maturity: Vec<MaturityRow>,
    pub conditions: ConditionReport,
}

/// Reciprocity on `ys`, perpetual put/call gap on `points`, and
/// finite-maturity prices at `point` for each maturity.
pub fn verify_duality(
    pair: &DualPair,
    ys: &[f64],
    points: &[(f64, f64)],
    point: Option<(f64, f64)>,
    maturities: &[f64],
    grid: &GridSpec,
    fd: &FdGrid,
) -> Result<DualityReport> {
    let reciprocity = pair.reciprocity_error(ys)?;
    let u = solve_log_derivative_f(&pair.sigma, &pair.market, grid)?;
    let v = solve_log_derivative_g(&pair.eta, &pair.market, grid)?;
    let p = &pair.payoff;
    let gaps: Vec<(f64, (f64, f64))> = points
        .par_iter()
        .map(|&(x, y)| {
            let a = perpetual_put_price(x, y, p, &u)?.price;
            let b = perpetual_call_price(y, x, p, &v)?.price;
            let scale = a.abs().max(b.abs());
            Ok((
                if scale > 0.0 {
                    (a - b).abs() / scale
                } else {
                    0.0
                },
                (x, y),
            ))
        })
        .collect::<Result<_>>()?;
    let (worst, at) = gaps
        .into_iter()
        .fold((0.0, (f64::NAN, f64::NAN)), |acc, g| {
            if g.0 > acc.0 {
                g
            } else {
                acc
            }
        });
    let mut finite = Vec::new();
    let mut at_point = None;
    if let Some((x, y)) = point {
        let a = perpetual_put_price(x, y, p, &u)?.price;
        let b = perpetual_call_price(y, x, p, &v)?.price;
        at_point = Some((x, y, a, b));
        if !maturities.is_empty() {
            let (put, call) = rayon::join(
                || {
                    finite_maturity_curve(
                        maturities,
                        x,
                        y,
                        p,
                        &pair.sigma,
                        &pair.market,
                        FdSide::PutType,
                        fd,
                    )
                },
                || {
                    finite_maturity_curve(
                        maturities,
                        y,
                        x,
                        p,
                        &pair.eta,
                        &pair.market,
                        FdSide::CallType,
                        fd,
                    )
                },
            );
            let (put, call) = (put?, call?);
            finite = maturities
                .iter()
                .zip(put.iter().zip(&call))
                .map(|(&t, (&a, &b))| MaturityRow {
                    maturity: t,
                    put: a,
                    call: b,
                })
                .collect();
        }
    }
    Ok(DualityReport {
        reciprocity_max_rel: reciprocity,
        perpetual_max_rel_gap: worst,
        perpetual_worst_point: at,
        perpetual_at_point: at_point,
        finite_maturity: finite,
        conditions: pair.report.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grid::log_space;

    fn self_dual() -> (MarketParams, f64) {
        (
            MarketParams::new(0.2, 0.2).unwrap(),
            (8.0 * 0.2 / 3.0_f64).sqrt(),
        )
    }

    fn fig1() -> MarketParams {
        MarketParams::new(0.2, 0.1).unwrap()
    }

    #[test]
    fn callput_self_dual() {
        let (m, s) = self_dual();
        let ys = log_space(0.01, 100.0, 200);
        let dv = dual_vol_callput(
            &VolCurve::constant(s).unwrap(),
            &m,
            &ys,
            &GridSpec::default(),
        )
        .unwrap();
        assert!(dv.is_complete());
        for &y in &ys {
            assert!((dv.curve.eval(y) / s - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn constant_vol_exponent_relations() {
        let m = fig1();
        let g = GridSpec::default();
        let ys = log_space(0.01, 100.0, 100);
        let sigma = VolCurve::constant(0.3).unwrap();
        let dv = dual_vol_callput(&sigma, &m, &ys, &g).unwrap();
        let nu = dv.curve.eval(1.0);
        assert!((exponent_a(0.3, &m).unwrap() + exponent_b(nu, &m).unwrap() - 1.0).abs() < 1e-7);
        let p = Payoff::power_gamma(0.75).unwrap();
        let (dv, _) = dual_vol(&sigma, &p, &m, &ys, &g).unwrap();
        let nu = dv.curve.eval(1.0);
        assert!((exponent_a(0.3, &m).unwrap() + exponent_b(nu, &m).unwrap() - 0.75).abs() < 1e-7);
        let p = Payoff::power_pair(1.0, 2.0, 1.0).unwrap();
        let (dv, _) = dual_vol(&sigma, &p, &m, &ys, &g).unwrap();
        let nu = dv.curve.eval(1.0);
        assert!(constant_exponent_residual(0.3, nu, &p, &m).unwrap().abs() < 1e-7);
    }

    #[test]
    fn gamma_one_reductions_agree() {
        let m = fig1();
        let g = GridSpec::default();
        let ys = log_space(0.1, 10.0, 50);
        let sigma = VolCurve::logistic_step(0.25, 0.4, 1.0, 0.7).unwrap();
        let cp = Payoff::call_put();
        let xs = put_boundary_for(&sigma, &cp, &m, &ys, &g).unwrap();
        let a = dual_vol_callput(&sigma, &m, &ys, &g).unwrap();
        let b = dual_vol_gamma(&sigma, &xs, 1.0, &m, &ys).unwrap();
        let c = dual_vol_psi(&sigma, &xs, &cp, &m, &ys).unwrap();
        for i in 0..ys.len() {
            assert!((a.values[i] - b.values[i]).abs() < 1e-12);
            assert!((a.values[i] - c.values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_dual_matches_closed_form() {
        let e = GammaExample::new(0.75, 1.5, 5.0 / 9.0, 1.0, fig1()).unwrap();
        let ys = log_space(0.1, 10.0, 60);
        let xs = BoundaryCurve::from_fn(
            BoundarySide::Put,
            &ys,
            |y| e.x_star(y),
            |y| e.x_star_slope(y),
        )
        .unwrap();
        let sigma = VolCurve::ClosedForm(ClosedFormVol::GammaSigma(e));
        let dv = dual_vol_gamma(&sigma, &xs, 0.75, &e.market, &ys).unwrap();
        for (&y, &v) in ys.iter().zip(&dv.values) {
            assert!((v / e.eta(y) - 1.0).abs() < 1e-10, "y={y}");
        }
        let grid: Vec<f64> = log_space(0.1, 10.0, 60);
        let ysc = BoundaryCurve::from_fn(
            BoundarySide::Call,
            &grid,
            |x| e.y_star(x),
            |x| e.y_star_slope(x),
        )
        .unwrap();
        let eta = VolCurve::ClosedForm(ClosedFormVol::GammaEta(e));
        let back = inverse_dual_vol_gamma(&eta, &ysc, 0.75, &e.market, &grid).unwrap();
        for (&x, &v) in grid.iter().zip(&back.values) {
            assert!((v / e.sigma(x) - 1.0).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn psi_dual_matches_closed_form() {
        let e = PsiPowerExample::new(0.97, 4.0, 1.5, 5.0 / 9.0, 1.0, fig1()).unwrap();
        let p = Payoff::power_pair(0.97, 4.0, 1.0).unwrap();
        let ys = log_space(0.1, 10.0, 60);
        let xs = BoundaryCurve::from_fn(
            BoundarySide::Put,
            &ys,
            |y| e.x_star(y),
            |y| e.x_star_slope(y),
        )
        .unwrap();
        let sigma = VolCurve::ClosedForm(ClosedFormVol::PsiPowerSigma(e));
        let dv = dual_vol_psi(&sigma, &xs, &p, &e.market, &ys).unwrap();
        for (&y, &v) in ys.iter().zip(&dv.values) {
            assert!((v / e.eta(y) - 1.0).abs() < 1e-10, "y={y}");
        }
        let ysc = BoundaryCurve::from_fn(
            BoundarySide::Call,
            &ys,
            |x| e.y_star(x),
            |x| e.y_star_slope(x),
        )
        .unwrap();
        let eta = VolCurve::ClosedForm(ClosedFormVol::PsiPowerEta(e));
        let back = inverse_dual_vol_psi(&eta, &ysc, &p, &e.market, &ys).unwrap();
        for (&x, &v) in ys.iter().zip(&back.values) {
            assert!((v / e.sigma(x) - 1.0).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn inverse_psi_requires_scaling_bound() {
        let m = fig1();
        let p = Payoff::psi_difference(
            ScalarFn::ExpM1 {
                scale: 1.0,
                rate: 1.0,
            },
            ScalarFn::identity(),
        )
        .unwrap();
        let c =
            BoundaryCurve::from_fn(BoundarySide::Call, &[1.0, 2.0], |x| 3.0 * x, |_| 3.0).unwrap();
        let eta = VolCurve::constant(0.3).unwrap();
        assert!(matches!(
            inverse_dual_vol_psi(&eta, &c, &p, &m, &[1.0, 2.0]),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn violations_truncate_curve() {
        // Low σ near the boundary makes the γ condition fail on part of the span.
        let m = fig1();
        let ys = log_space(0.1, 10.0, 40);
        let xs =
            BoundaryCurve::from_fn(BoundarySide::Put, &ys, |y| y / 3.0, |_| 1.0 / 3.0).unwrap();
        let sigma = VolCurve::logistic_step(0.5, 3.0, 1.0, 0.2).unwrap();
        let dv = dual_vol_gamma(&sigma, &xs, 0.5, &m, &ys).unwrap();
        assert!(!dv.is_complete());
        assert!(!dv.report.violations.is_empty());
        assert!(dv.values.iter().any(|v| v.is_nan()));
        let (lo, _) = dv.valid_span();
        assert!(lo > ys[0]);
    }

    #[test]
    fn constant_dual_solver() {
        let (m, s) = self_dual();
        let cp = Payoff::call_put();
        let nu = solve_dual_constant_vol(Given::Sigma(s), &cp, &m)
            .unwrap()
            .unwrap();
        assert!((nu - s).abs() < 1e-13);
        let m2 = fig1();
        let p = Payoff::power_gamma(0.75).unwrap();
        for &n in &[0.05, 0.3, 2.0] {
            let s = solve_dual_constant_vol(Given::Eta(n), &p, &m2)
                .unwrap()
                .unwrap();
            assert!(constant_exponent_residual(s, n, &p, &m2).unwrap().abs() < 1e-12);
        }
        let m3 = MarketParams::new(0.1, 0.3).unwrap();
        // γ − 1 = −0.5 ≤ −r/(δ−r) = −0.5.
        let p = Payoff::power_gamma(0.5).unwrap();
        assert_eq!(
            solve_dual_constant_vol(Given::Eta(0.3), &p, &m3).unwrap(),
            None
        );
        let pp = Payoff::power_pair(1.0, 2.0, 1.0).unwrap();
        let nu = solve_dual_constant_vol(Given::Sigma(0.4), &pp, &m2)
            .unwrap()
            .unwrap();
        assert!(constant_exponent_residual(0.4, nu, &pp, &m2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn analytic_pairs_are_reciprocal() {
        let e = GammaExample::new(0.75, 1.5, 5.0 / 9.0, 1.0, fig1()).unwrap();
        let pair = analytic_pair_gamma(e, 1e-3, 1e3, 400).unwrap();
        assert!(pair.reciprocity_error(&log_space(0.1, 10.0, 50)).unwrap() < 1e-6);
        let q = PsiPowerExample::new(0.97, 4.0, 1.5, 5.0 / 9.0, 1.0, fig1()).unwrap();
        let pair = analytic_pair_psi(q, 1e-2, 1e2, 400).unwrap();
        assert!(pair.reciprocity_error(&log_space(0.1, 10.0, 50)).unwrap() < 1e-6);
        let mut buf = Vec::new();
        pair.write_csv(&[1.0], &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("x,sigma,y,eta,x_star,y_star\n"));
    }
}

//! Recovery of the local volatility below the spot from perpetual put prices
//! quoted across strikes, and round-trip tooling.
//!
//! As a function of the strike `K`, the put price `p(K) = P_σ(x₀, K)` is the
//! call-type price of the dual volatility `σ̃`, which can therefore be read
//! off `p, p′, p″`. The call boundary of `σ̃` is then integrated backward from
//! `(x₀, Y)` and the inverse dual formula returns `σ` on `(0, x₀]`.

use std::cell::RefCell;

use rayon::prelude::*;
use serde::Serialize;

use crate::boundaries::{call_boundary_ode, put_boundary_at, BoundaryCurve};
use crate::duality::{inverse_dual_from_boundary, ConditionReport, DualVol};
use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::fundamental::{solve_log_derivative_f, GridSpec, LogDerivCurve};
use crate::market::MarketParams;
use crate::numerics::grid::{fornberg_weights, log_space};
use crate::numerics::root::brent;
use crate::payoff::Payoff;
use crate::pricing::perpetual_put_price;
use crate::vol::VolCurve;

/// Slack allowed below the intrinsic value.
const INTRINSIC_SLACK: f64 = 1e-12;
/// Points per differentiation stencil.
const STENCIL: usize = 5;

/// Observed put prices `p(K) = P(x₀, K)` on a strike grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceCurve {
    pub strikes: Vec<f64>,
    pub prices: Vec<f64>,
    pub x0: f64,
}

impl PriceCurve {
    pub fn new(strikes: Vec<f64>, prices: Vec<f64>, x0: f64) -> Result<Self> {
        ensure_positive("spot x0", x0)?;
        if strikes.len() != prices.len() || strikes.len() < STENCIL + 1 {
            return Err(Error::InvalidParameter(format!(
                "price curve needs > {STENCIL} matching strikes and prices, got {} and {}",
                strikes.len(),
                prices.len()
            )));
        }
        for (&k, &v) in strikes.iter().zip(&prices) {
            ensure_positive("strike", k)?;
            ensure_finite("price", v)?;
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "negative price {v} at strike {k}"
                )));
            }
        }
        if !strikes.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter(
                "strikes must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            strikes,
            prices,
            x0,
        })
    }

    /// Exact model prices of `sigma` at `strikes`.
    pub fn synthetic(
        sigma: &VolCurve,
        p: &Payoff,
        m: &MarketParams,
        x0: f64,
        strikes: Vec<f64>,
        grid: &GridSpec,
    ) -> Result<Self> {
        let u = solve_log_derivative_f(sigma, m, grid)?;
        let prices = put_prices(&u, p, x0, &strikes)?;
        Self::new(strikes, prices, x0)
    }

    /// Checks `p(K) ≥ φ(x₀, K)`.
    pub fn check_intrinsic(&self, p: &Payoff) -> Result<()> {
        for (&k, &v) in self.strikes.iter().zip(&self.prices) {
            let phi = p.value(self.x0, k);
            if v < phi - INTRINSIC_SLACK * phi.max(1.0) {
                return Err(Error::Inadmissible(format!(
                    "price {v} below intrinsic value {phi} at strike {k}"
                )));
            }
        }
        Ok(())
    }

    fn gap(&self, p: &Payoff, i: usize) -> f64 {
        self.prices[i] - p.value(self.x0, self.strikes[i])
    }
}

fn put_prices(u: &LogDerivCurve, p: &Payoff, x0: f64, strikes: &[f64]) -> Result<Vec<f64>> {
    strikes
        .par_iter()
        .map(|&k| perpetual_put_price(x0, k, p, u).map(|q| q.price))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    /// Relative gap `(p − φ)/p` below which a strike counts as exercised.
    pub tol_rel: f64,
    /// Lower end of the recovered range as a fraction of `x₀`.
    pub x_lo_fraction: f64,
    /// Nodes of the recovered `σ` on `[x_lo, x₀]`.
    pub nodes: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            tol_rel: 1e-9,
            x_lo_fraction: 0.1,
            nodes: 200,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CalibrationDiagnostics {
    /// Strikes dropped because `p″ ≤ 0` or the variance came out non-positive.
    pub dropped_nodes: usize,
    pub dropped_strikes: Vec<f64>,
    /// Every strike was already exercised; `Y` is the first strike.
    pub degenerate_exercise_strike: bool,
    /// `max |½K²σ̃²p″ + (δ−r)Kp′ − δp| / p` over the retained strikes.
    pub g_ode_max_rel_residual: f64,
    pub sigma_tilde_span: (f64, f64),
    /// Inverse-dual conditions along the recovered range.
    pub conditions: ConditionReport,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    /// First exercised strike.
    pub exercise_strike: f64,
    /// Dual volatility on `(0, Y)`.
    pub sigma_tilde: VolCurve,
    /// Call boundary of `σ̃` on `[x_lo, x₀]`.
    pub y_star: BoundaryCurve,
    /// Recovered volatility on `[x_lo, x₀]`.
    pub sigma: DualVol,
    pub diagnostics: CalibrationDiagnostics,
}

/// `Y = inf{K : p(K) = φ(x₀, K)}`, refined inside the bracketing cell.
pub fn detect_exercise_strike(pc: &PriceCurve, p: &Payoff, tol_rel: f64) -> Result<f64> {
    ensure_positive("exercise tolerance", tol_rel)?;
    pc.check_intrinsic(p)?;
    let n = pc.strikes.len();
    // Exercising where φ = 0 earns nothing, so such strikes never count.
    let exercised = |i: usize| {
        p.value(pc.x0, pc.strikes[i]) > 0.0 && pc.gap(p, i) <= tol_rel * pc.prices[i].max(1e-12)
    };
    let Some(i) = (0..n).find(|&i| exercised(i)) else {
        return Err(Error::ExerciseStrikeNotFound(format!(
            "no strike in [{}, {}] with p(K) = φ(x0, K)",
            pc.strikes[0],
            pc.strikes[n - 1]
        )));
    };
    if i == 0 {
        return Ok(pc.strikes[0]);
    }
    // Smooth fit makes the gap vanish quadratically, so its square root
    // crosses zero linearly; interpolate it through the last continuation
    // strikes and bisect inside the bracketing cell.
    let j0 = i.saturating_sub(4);
    let ks = &pc.strikes[j0..i];
    let rs: Vec<f64> = (j0..i).map(|j| pc.gap(p, j).max(0.0).sqrt()).collect();
    let lagrange = |k: f64| -> f64 {
        let mut s = 0.0;
        for a in 0..ks.len() {
            let mut l = 1.0;
            for b in 0..ks.len() {
                if a != b {
                    l *= (k - ks[b]) / (ks[a] - ks[b]);
                }
            }
            s += rs[a] * l;
        }
        s
    };
    let (mut lo, mut hi) = (pc.strikes[i - 1], pc.strikes[i]);
    if lagrange(hi) > 0.0 {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if lagrange(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Recovered `σ̃` together with bookkeeping on dropped strikes.
#[derive(Debug, Clone)]
pub struct DualVolRecovery {
    pub sigma_tilde: VolCurve,
    pub strikes: Vec<f64>,
    pub values: Vec<f64>,
    pub dropped_strikes: Vec<f64>,
    pub g_ode_max_rel_residual: f64,
}

/// `σ̃(K) = (1/K)·√(2(δp + K(r−δ)p′)/p″)` at the strikes below `Y`.
pub fn recover_dual_vol_from_prices(
    pc: &PriceCurve,
    exercise_strike: f64,
    m: &MarketParams,
) -> Result<DualVolRecovery> {
    m.validate()?;
    let c = pc
        .strikes
        .iter()
        .take_while(|&&k| k < exercise_strike)
        .count();
    if c < STENCIL {
        return Err(Error::InvalidParameter(format!(
            "need at least {STENCIL} strikes below the exercise strike {exercise_strike}, got {c}"
        )));
    }
    let ks = &pc.strikes[..c];
    let ps = &pc.prices[..c];
    let mut strikes = Vec::with_capacity(c);
    let mut values = Vec::with_capacity(c);
    let mut dropped = Vec::new();
    let mut residual = 0.0_f64;
    for j in 0..c {
        // Stencils stay inside the continuation region.
        let start = j.saturating_sub(STENCIL / 2).min(c - STENCIL);
        let nodes = &ks[start..start + STENCIL];
        let w = fornberg_weights(ks[j], nodes, 2);
        let d1: f64 = w[1]
            .iter()
            .zip(&ps[start..start + STENCIL])
            .map(|(a, b)| a * b)
            .sum();
        let d2: f64 = w[2]
            .iter()
            .zip(&ps[start..start + STENCIL])
            .map(|(a, b)| a * b)
            .sum();
        let (k, pk) = (ks[j], ps[j]);
        let num = 2.0 * (m.delta * pk + k * (m.r - m.delta) * d1);
        if !(d2 > 0.0 && num > 0.0) {
            dropped.push(k);
            continue;
        }
        let s = (num / d2).sqrt() / k;
        let g = 0.5 * k * k * s * s * d2 + (m.delta - m.r) * k * d1 - m.delta * pk;
        residual = residual.max(g.abs() / pk.max(f64::MIN_POSITIVE));
        strikes.push(k);
        values.push(s);
    }
    if strikes.len() < 2 {
        return Err(Error::Inadmissible(format!(
            "only {} strikes with p'' > 0 below the exercise strike",
            strikes.len()
        )));
    }
    let sigma_tilde = VolCurve::tabulated(strikes.clone(), values.clone())?;
    Ok(DualVolRecovery {
        sigma_tilde,
        strikes,
        values,
        dropped_strikes: dropped,
        g_ode_max_rel_residual: residual,
    })
}

/// Call boundary of `σ̃` integrated backward from `(x₀, Y)` down to `x_end`.
pub fn backward_boundary_solve(
    sigma_tilde: &VolCurve,
    exercise_strike: f64,
    x0: f64,
    x_end: f64,
    p: &Payoff,
    m: &MarketParams,
) -> Result<BoundaryCurve> {
    if !(x_end > 0.0 && x_end < x0) {
        return Err(Error::InvalidParameter(format!(
            "x_end must lie in (0, x0), got {x_end}"
        )));
    }
    call_boundary_ode(x0, exercise_strike, x_end, sigma_tilde, p, m)
}

/// `σ` on `xs` as the inverse dual of `σ̃` along the known call boundary.
pub fn recover_primal_vol(
    y_star: &BoundaryCurve,
    sigma_tilde: &VolCurve,
    p: &Payoff,
    m: &MarketParams,
    xs: &[f64],
) -> Result<DualVol> {
    let dv = inverse_dual_from_boundary(sigma_tilde, y_star, p, m, xs)?;
    if let Some(bad) = dv.values.iter().find(|v| v.is_finite() && !(**v > 0.0)) {
        return Err(Error::Inadmissible(format!(
            "recovered volatility {bad} is not positive"
        )));
    }
    Ok(dv)
}

/// The full pipeline.
pub fn calibrate(
    pc: &PriceCurve,
    p: &Payoff,
    m: &MarketParams,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    if !(opts.x_lo_fraction > 0.0 && opts.x_lo_fraction < 1.0) || opts.nodes < 2 {
        return Err(Error::InvalidParameter(format!(
            "x_lo_fraction must be in (0, 1) and nodes >= 2, got {} and {}",
            opts.x_lo_fraction, opts.nodes
        )));
    }
    let y = detect_exercise_strike(pc, p, opts.tol_rel)?;
    let mut diag = CalibrationDiagnostics {
        degenerate_exercise_strike: y == pc.strikes[0],
        ..Default::default()
    };
    if diag.degenerate_exercise_strike {
        diag.warnings
            .push("every strike is exercised; Y is the first strike".into());
    }
    let rec = recover_dual_vol_from_prices(pc, y, m)?;
    diag.dropped_nodes = rec.dropped_strikes.len();
    diag.dropped_strikes = rec.dropped_strikes.clone();
    diag.g_ode_max_rel_residual = rec.g_ode_max_rel_residual;
    diag.sigma_tilde_span = (rec.strikes[0], *rec.strikes.last().unwrap());
    if diag.dropped_nodes > 0 {
        diag.warnings
            .push(format!("{} strikes dropped (p'' <= 0)", diag.dropped_nodes));
    }
    let x_lo = opts.x_lo_fraction * pc.x0;
    let y_star = backward_boundary_solve(&rec.sigma_tilde, y, pc.x0, x_lo, p, m)?;
    let y_low = y_star.eval(x_lo)?;
    if y_low < diag.sigma_tilde_span.0 {
        diag.warnings.push(format!(
            "boundary reaches y = {y_low:.6e} below the lowest usable strike; σ̃ is extrapolated flat there"
        ));
    }
    let xs = log_space(x_lo, pc.x0, opts.nodes);
    let sigma = recover_primal_vol(&y_star, &rec.sigma_tilde, p, m, &xs)?;
    diag.conditions = sigma.report.clone();
    Ok(CalibrationResult {
        exercise_strike: y,
        sigma_tilde: rec.sigma_tilde,
        y_star,
        sigma,
        diagnostics: diag,
    })
}

/// `Y` of the model itself: the strike whose put boundary passes through `x₀`.
pub fn model_exercise_strike(u: &LogDerivCurve, p: &Payoff, x0: f64) -> Result<f64> {
    let (glo, ghi) = u.span();
    let mut lo = p.y_edge(x0).max(glo);
    if !(lo > 0.0) {
        lo = glo;
    }
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let f = |k: f64| match put_boundary_at(k, p, u) {
        Ok(x) => x - x0,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let mut hi = lo;
    loop {
        hi *= 2.0;
        if hi > ghi {
            return Err(Error::ExerciseStrikeNotFound(format!(
                "no strike in [{lo}, {ghi}] whose exercise boundary reaches x0 = {x0}"
            )));
        }
        let v = f(hi);
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        if v >= 0.0 {
            break;
        }
        lo = hi;
    }
    let root = brent(f, lo, hi, 1e-14 * hi, 200);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    root.ok_or_else(|| Error::NoConvergence(format!("exercise strike in [{lo}, {hi}]")))
}

/// Numerical statement of the uniqueness result: two volatilities give the
/// same strike curve exactly when they agree below `x₀` and share `Y`.
#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub max_vol_rel_diff_below_x0: f64,
    pub exercise_strike_1: f64,
    pub exercise_strike_2: f64,
    pub max_price_rel_diff: f64,
    pub vols_equal: bool,
    pub exercise_strikes_equal: bool,
    pub prices_equal: bool,
    /// `(vols_equal && exercise_strikes_equal) == prices_equal`
    pub consistent: bool,
}

pub const UNIQUENESS_TOL: f64 = 1e-6;

pub fn uniqueness_check(
    sigma_1: &VolCurve,
    sigma_2: &VolCurve,
    x0: f64,
    p: &Payoff,
    m: &MarketParams,
    strikes: &[f64],
    grid: &GridSpec,
) -> Result<UniquenessReport> {
    ensure_positive("spot x0", x0)?;
    let vol_diff = log_space(grid.lo, x0, 1024)
        .into_iter()
        .map(|x| (sigma_2.eval(x) / sigma_1.eval(x) - 1.0).abs())
        .fold(0.0, f64::max);
    let u1 = solve_log_derivative_f(sigma_1, m, grid)?;
    let u2 = solve_log_derivative_f(sigma_2, m, grid)?;
    let y1 = model_exercise_strike(&u1, p, x0)?;
    let y2 = model_exercise_strike(&u2, p, x0)?;
    let p1 = put_prices(&u1, p, x0, strikes)?;
    let p2 = put_prices(&u2, p, x0, strikes)?;
    let price_diff = p1
        .iter()
        .zip(&p2)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-300))
        .fold(0.0, f64::max);
    let vols_equal = vol_diff <= 1e-12;
    let exercise_strikes_equal = (y1 - y2).abs() <= UNIQUENESS_TOL * y1;
    let prices_equal = price_diff <= UNIQUENESS_TOL;
    Ok(UniquenessReport {
        max_vol_rel_diff_below_x0: vol_diff,
        exercise_strike_1: y1,
        exercise_strike_2: y2,
        max_price_rel_diff: price_diff,
        vols_equal,
        exercise_strikes_equal,
        prices_equal,
        consistent: (vols_equal && exercise_strikes_equal) == prices_equal,
    })
}

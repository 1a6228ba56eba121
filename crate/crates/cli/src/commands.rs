//! Subcommand bodies. Each returns the CSV text and an optional JSON report;
//! nothing is written until the whole computation has succeeded.

use std::fmt::Write as _;

use perp_duality::boundaries::{call_boundary_at, put_boundary_at};
use perp_duality::calibration::{calibrate, PriceCurve};
use perp_duality::duality::analytic::{GammaExample, PsiPowerExample};
use perp_duality::duality::{
    analytic_pair_gamma, analytic_pair_psi, build_dual_pair, call_boundary_for,
    constant_exponent_residual, dual_vol, inverse_dual_vol, put_boundary_for,
    solve_dual_constant_vol, verify_duality, ConditionReport, DualPair, Given,
};
use perp_duality::error::Error;
use perp_duality::fundamental::{solve_log_derivative_f, solve_log_derivative_g};
use perp_duality::market::MarketParams;
use perp_duality::numerics::grid::log_space;
use perp_duality::payoff::PayoffFamily;
use perp_duality::pricing::{
    perpetual_call_price, perpetual_put_price, write_maturity_csv, MaturityRow,
};
use perp_duality::vol::VolCurve;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{read_csv, ConfigError, RunConfig};

/// Why a run failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Numerical(Error),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Numerical(e) => write!(f, "numerical failure: {e}"),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Numerical(e)
    }
}

type Run<T> = std::result::Result<T, Failure>;

pub struct Output {
    pub csv: String,
    pub report: Option<serde_json::Value>,
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn report<T: Serialize>(v: &T) -> Option<serde_json::Value> {
    Some(serde_json::to_value(v).expect("reports contain only serialisable data"))
}

/// Perpetual prices on the grid `x × y`.
pub fn price(cfg: &RunConfig) -> Run<Output> {
    let (m, p, grid) = (cfg.market()?, cfg.payoff()?, cfg.grid()?);
    let (xs, ys) = (cfg.xs()?, cfg.ys()?);
    let call = cfg.is_call_side()?;
    let points: Vec<(f64, f64)> = xs
        .iter()
        .flat_map(|&x| ys.iter().map(move |&y| (x, y)))
        .collect();
    let quotes = if call {
        let eta = cfg.eta(&m)?.map_or_else(|| cfg.sigma(&m), Ok)?;
        let v = solve_log_derivative_g(&eta, &m, &grid)?;
        points
            .par_iter()
            .map(|&(x, y)| perpetual_call_price(y, x, &p, &v))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        let u = solve_log_derivative_f(&cfg.sigma(&m)?, &m, &grid)?;
        points
            .par_iter()
            .map(|&(x, y)| perpetual_put_price(x, y, &p, &u))
            .collect::<Result<Vec<_>, _>>()?
    };
    let mut csv = String::from("x,y,price,boundary,in_exercise_region\n");
    for ((x, y), q) in points.iter().zip(&quotes) {
        writeln!(
            csv,
            "{},{},{},{},{}",
            num(*x),
            num(*y),
            num(q.price),
            num(q.boundary_point),
            q.in_exercise_region
        )
        .unwrap();
    }
    Ok(Output { csv, report: None })
}

/// Put boundary `x*(y)` on `y`, or call boundary `y*(x)` on `x` with `side = call`.
pub fn boundary(cfg: &RunConfig) -> Run<Output> {
    let (m, p, grid) = (cfg.market()?, cfg.payoff()?, cfg.grid()?);
    let (header, at, values) = if cfg.is_call_side()? {
        let eta = cfg.eta(&m)?.map_or_else(|| cfg.sigma(&m), Ok)?;
        let v = solve_log_derivative_g(&eta, &m, &grid)?;
        let xs = cfg.xs()?;
        let ys = xs
            .par_iter()
            .map(|&x| call_boundary_at(x, &p, &v))
            .collect::<Result<Vec<_>, _>>()?;
        ("x,y_star", xs, ys)
    } else {
        let u = solve_log_derivative_f(&cfg.sigma(&m)?, &m, &grid)?;
        let ys = cfg.ys()?;
        let xs = ys
            .par_iter()
            .map(|&y| put_boundary_at(y, &p, &u))
            .collect::<Result<Vec<_>, _>>()?;
        ("y,x_star", ys, xs)
    };
    let mut csv = format!("{header}\n");
    for (a, b) in at.iter().zip(&values) {
        writeln!(csv, "{},{}", num(*a), num(*b)).unwrap();
    }
    Ok(Output { csv, report: None })
}

#[derive(Serialize)]
struct ConstantDual {
    sigma: f64,
    eta: f64,
    exponent_residual: f64,
    /// Largest relative deviation of the tabulated dual from the constant.
    max_rel_deviation: f64,
}

#[derive(Serialize)]
struct DualizeReport {
    direction: &'static str,
    complete: bool,
    valid_span: (f64, f64),
    dropped_nodes: usize,
    conditions: ConditionReport,
    constant_dual: Option<ConstantDual>,
}

/// Dual volatility η of σ on `y` (or, with `side = call`, σ of η on `x`)
/// plus a condition-margin report.
pub fn dualize(cfg: &RunConfig) -> Run<Output> {
    let (m, p, grid) = (cfg.market()?, cfg.payoff()?, cfg.grid()?);
    let call = cfg.is_call_side()?;
    let (input, dv, column, direction) = if call {
        let eta = cfg.eta(&m)?.map_or_else(|| cfg.sigma(&m), Ok)?;
        let (dv, _) = inverse_dual_vol(&eta, &p, &m, &cfg.xs()?, &grid)?;
        (eta, dv, "sigma", "eta_to_sigma")
    } else {
        let sigma = cfg.sigma(&m)?;
        let (dv, _) = dual_vol(&sigma, &p, &m, &cfg.ys()?, &grid)?;
        (sigma, dv, "eta", "sigma_to_eta")
    };
    let constant_dual = match (input.is_constant(), p.family) {
        (
            Some(c),
            PayoffFamily::CallPut
            | PayoffFamily::PowerGamma { .. }
            | PayoffFamily::PowerPair { .. },
        ) => {
            let given = if call { Given::Eta(c) } else { Given::Sigma(c) };
            solve_dual_constant_vol(given, &p, &m)?.map(|d| {
                let (s, e) = if call { (d, c) } else { (c, d) };
                let dev = dv
                    .values
                    .iter()
                    .filter(|v| v.is_finite())
                    .fold(0.0_f64, |acc, v| acc.max((v / d - 1.0).abs()));
                constant_exponent_residual(s, e, &p, &m).map(|res| ConstantDual {
                    sigma: s,
                    eta: e,
                    exponent_residual: res,
                    max_rel_deviation: dev,
                })
            })
        }
        _ => None,
    }
    .transpose()?;
    let mut buf = Vec::new();
    dv.write_csv(column, &mut buf)
        .map_err(|e| Failure::Io(e.to_string()))?;
    let r = DualizeReport {
        direction,
        complete: dv.is_complete(),
        valid_span: dv.valid_span(),
        dropped_nodes: dv.values.iter().filter(|v| !v.is_finite()).count(),
        conditions: dv.report.clone(),
        constant_dual,
    };
    Ok(Output {
        csv: String::from_utf8(buf).expect("CSV is ASCII"),
        report: report(&r),
    })
}

const FIG1_MARKET: (f64, f64) = (0.2, 0.1);

fn example_market(cfg: &RunConfig) -> Run<MarketParams> {
    Ok(match cfg.market {
        Some(_) => cfg.market()?,
        None => MarketParams::new(FIG1_MARKET.0, FIG1_MARKET.1)?,
    })
}

/// `gamma[:γ,a,b,c]` or `psi[:α,γ,a,b,c]`; defaults are the Figure-1 parameters.
fn analytic_pair(
    spec: &str,
    m: MarketParams,
    lo: f64,
    hi: f64,
) -> Run<(DualPair, serde_json::Value)> {
    let (name, args) = spec.split_once(':').unwrap_or((spec, ""));
    let vals: Vec<f64> = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| ConfigError(format!("bad example parameter {s:?}")))
            })
            .collect::<Result<_, _>>()?
    };
    let inadmissible = |e: Error| Failure::Config(ConfigError(format!("example {name}: {e}")));
    match name {
        "gamma" => {
            let [g, a, b, c] = match vals.as_slice() {
                [] => [0.75, 1.5, 5.0 / 9.0, 1.0],
                &[g, a, b, c] => [g, a, b, c],
                _ => return Err(ConfigError("example gamma takes γ,a,b,c".into()).into()),
            };
            let e = GammaExample::new(g, a, b, c, m).map_err(inadmissible)?;
            let params = json!({"name": "gamma", "gamma": g, "a": a, "b": b, "c": c});
            Ok((analytic_pair_gamma(e, lo, hi, 400)?, params))
        }
        "psi" => {
            let [al, g, a, b, c] = match vals.as_slice() {
                [] => [0.97, 4.0, 1.5, 5.0 / 9.0, 1.0],
                &[al, g, a, b, c] => [al, g, a, b, c],
                _ => return Err(ConfigError("example psi takes α,γ,a,b,c".into()).into()),
            };
            let e = PsiPowerExample::new(al, g, a, b, c, m).map_err(inadmissible)?;
            let params = json!({"name": "psi", "alpha": al, "gamma": g, "a": a, "b": b, "c": c});
            Ok((analytic_pair_psi(e, lo, hi, 400)?, params))
        }
        _ => Err(ConfigError(format!("unknown example {name:?}; expected gamma or psi")).into()),
    }
}

/// Abscissae of `x*` whose image lies where `y*` is tabulated.
fn reciprocity_sample(pair: &DualPair) -> Vec<f64> {
    let (lo, hi) = pair.y_star.span();
    pair.x_star
        .abscissae()
        .into_iter()
        .zip(pair.x_star.ordinates())
        .filter(|&(_, x)| x >= lo && x <= hi)
        .map(|(y, _)| y)
        .collect()
}

/// Finite-maturity `P_σ(T)` and `c_η(T)` at one `(x, y)`, closed by the
/// perpetual row `T = inf`.
pub fn verify(cfg: &RunConfig) -> Run<Output> {
    let grid = cfg.grid()?;
    let fd = cfg.fd()?;
    let ts = cfg.maturities()?;
    let (x, y) = (cfg.xs()?[0], cfg.ys()?[0]);
    let pair = match &cfg.example {
        Some(spec) => analytic_pair(spec, example_market(cfg)?, 1e-2, 1e2)?.0,
        None => {
            let (m, p) = (cfg.market()?, cfg.payoff()?);
            let sigma = cfg.sigma(&m)?;
            let ys = log_space(y / 10.0, y * 10.0, 81);
            match cfg.eta(&m)? {
                None => build_dual_pair(sigma, &p, &m, &ys, &grid)?,
                Some(eta) => {
                    let x_star = put_boundary_for(&sigma, &p, &m, &ys, &grid)?;
                    let y_star = call_boundary_for(&eta, &p, &m, &x_star.ordinates(), &grid)?;
                    DualPair {
                        payoff: p,
                        market: m,
                        sigma,
                        eta,
                        x_star,
                        y_star,
                        report: ConditionReport::default(),
                    }
                }
            }
        }
    };
    let r = verify_duality(
        &pair,
        &reciprocity_sample(&pair),
        &[(x, y)],
        Some((x, y)),
        &ts,
        &grid,
        &fd,
    )?;
    let (_, _, perp_p, perp_c) = r.perpetual_at_point.expect("point was requested");
    let mut rows = r.finite_maturity.clone();
    rows.push(MaturityRow {
        maturity: f64::INFINITY,
        put: perp_p,
        call: perp_c,
    });
    let mut buf = Vec::new();
    write_maturity_csv(&rows, &mut buf).map_err(|e| Failure::Io(e.to_string()))?;
    Ok(Output {
        csv: String::from_utf8(buf).expect("CSV is ASCII"),
        report: report(&r),
    })
}

#[derive(Deserialize)]
struct PriceRow {
    strike: f64,
    price: f64,
}

#[derive(Serialize)]
struct CalibrationReport<'a> {
    exercise_strike: f64,
    x0: f64,
    valid_span: (f64, f64),
    /// Against `vol`, when one was supplied.
    reference_max_rel_error: Option<f64>,
    diagnostics: &'a perp_duality::calibration::CalibrationDiagnostics,
}

/// Local volatility on `(x_lo, x₀)` from a strike/price CSV, or from
/// synthetic prices of `vol` on `strikes` when no CSV is given.
pub fn calibrate_cmd(cfg: &RunConfig) -> Run<Output> {
    let (m, p, grid) = (cfg.market()?, cfg.payoff()?, cfg.grid()?);
    let (x0, opts) = (cfg.x0()?, cfg.calibration()?);
    let reference = if cfg.has_sigma() {
        Some(cfg.sigma(&m)?)
    } else {
        None
    };
    let bad_curve = |e: Error| Failure::Config(ConfigError(format!("price curve: {e}")));
    let pc = match (&cfg.prices, &reference) {
        (Some(path), _) => {
            let rows: Vec<PriceRow> = read_csv(path)?;
            let (k, v) = rows.into_iter().map(|r| (r.strike, r.price)).unzip();
            PriceCurve::new(k, v, x0).map_err(bad_curve)?
        }
        (None, Some(sigma)) => {
            let strikes = cfg
                .strikes
                .as_ref()
                .ok_or_else(|| ConfigError("synthetic calibration needs strikes".into()))?
                .values("strikes")?;
            PriceCurve::synthetic(sigma, &p, &m, x0, strikes, &grid)?
        }
        (None, None) => {
            return Err(ConfigError(
                "calibrate needs a prices CSV or a vol to synthesise from".into(),
            )
            .into())
        }
    };
    pc.check_intrinsic(&p).map_err(bad_curve)?;
    let res = calibrate(&pc, &p, &m, &opts)?;
    let reference_max_rel_error = reference.map(|s: VolCurve| {
        res.sigma
            .nodes
            .iter()
            .zip(&res.sigma.values)
            .filter(|(_, v)| v.is_finite())
            .fold(0.0_f64, |acc, (&x, &v)| {
                acc.max((v / s.eval(x) - 1.0).abs())
            })
    });
    let mut buf = Vec::new();
    res.sigma
        .write_csv("sigma", &mut buf)
        .map_err(|e| Failure::Io(e.to_string()))?;
    let r = CalibrationReport {
        exercise_strike: res.exercise_strike,
        x0,
        valid_span: res.sigma.valid_span(),
        reference_max_rel_error,
        diagnostics: &res.diagnostics,
    };
    Ok(Output {
        csv: String::from_utf8(buf).expect("CSV is ASCII"),
        report: report(&r),
    })
}

/// Samples of a closed-form dual pair: `x, σ(x), y, η(y), x*(y), y*(x)`.
pub fn example(cfg: &RunConfig, name: Option<&str>) -> Run<Output> {
    let spec = name
        .map(str::to_string)
        .or_else(|| cfg.example.clone())
        .ok_or_else(|| ConfigError("example name (gamma or psi) is required".into()))?;
    let m = example_market(cfg)?;
    let samples = match &cfg.x {
        Some(pts) => pts.values("x")?,
        None => log_space(1e-2, 1e2, 41),
    };
    let lo = samples[0].min(1e-2);
    let hi = samples.last().copied().unwrap_or(1e2).max(1e2);
    let (pair, params) = analytic_pair(&spec, m, lo, hi)?;
    let mut buf = Vec::new();
    pair.write_csv(&samples, &mut buf)
        .map_err(|e| Failure::Io(e.to_string()))?;
    let r = json!({
        "example": params,
        "market": m,
        "payoff": pair.payoff,
        "reciprocity_max_rel": pair.reciprocity_error(&reciprocity_sample(&pair))?,
    });
    Ok(Output {
        csv: String::from_utf8(buf).expect("CSV is ASCII"),
        report: Some(r),
    })
}

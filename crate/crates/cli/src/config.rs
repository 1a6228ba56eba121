//! Run configuration: a JSON file merged with command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use perp_duality::calibration::CalibrationOptions;
use perp_duality::duality::analytic::{GammaExample, PsiPowerExample};
use perp_duality::fundamental::GridSpec;
use perp_duality::market::MarketParams;
use perp_duality::numerics::grid::log_space;
use perp_duality::payoff::{Payoff, PayoffFamily};
use perp_duality::pricing::FdGrid;
use perp_duality::vol::{ClosedFormVol, VolCurve};
use serde::Deserialize;
use serde_json::Value;

pub const SUPPORTED_FAMILIES: &str =
    "call_put, power_gamma ((y−x)^+)^γ, and psi_difference (ψ_y(y)−ψ_x(x))^+ including power_pair";

/// A configuration problem; maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

fn cfg_err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Points given either explicitly or as a log-spaced range.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Points {
    List(Vec<f64>),
    Log { lo: f64, hi: f64, n: usize },
}

impl Points {
    pub fn values(&self, what: &str) -> ConfigResult<Vec<f64>> {
        let v = match self {
            Points::List(v) => v.clone(),
            Points::Log { lo, hi, n } => {
                if !(*lo > 0.0 && hi > lo && *n >= 2) {
                    return Err(cfg_err(format!("{what}: need 0 < lo < hi and n >= 2")));
                }
                log_space(*lo, *hi, *n)
            }
        };
        if v.iter().any(|z| !(z.is_finite() && *z > 0.0)) {
            return Err(cfg_err(format!(
                "{what}: all points must be positive and finite"
            )));
        }
        Ok(v)
    }
}

impl FromStr for Points {
    type Err = ConfigError;

    /// `1.5`, `0.5,1,2` or `log:lo:hi:n`.
    fn from_str(s: &str) -> ConfigResult<Self> {
        if let Some(rest) = s.strip_prefix("log:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(cfg_err(format!("expected log:lo:hi:n, got {s:?}")));
            }
            return Ok(Points::Log {
                lo: parse_num(parts[0])?,
                hi: parse_num(parts[1])?,
                n: parts[2]
                    .trim()
                    .parse()
                    .map_err(|_| cfg_err(format!("bad count in {s:?}")))?,
            });
        }
        Ok(Points::List(parse_list(s)?))
    }
}

fn parse_num(s: &str) -> ConfigResult<f64> {
    s.trim()
        .parse()
        .map_err(|_| cfg_err(format!("not a number: {s:?}")))
}

fn parse_list(s: &str) -> ConfigResult<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_num).collect()
}

fn parse_args<const N: usize>(s: &str, what: &str) -> ConfigResult<[f64; N]> {
    let v = parse_list(s)?;
    v.try_into().map_err(|_| {
        cfg_err(format!(
            "{what} takes {N} comma-separated numbers, got {s:?}"
        ))
    })
}

/// Volatility descriptor.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VolSpec {
    Constant {
        value: f64,
    },
    LogisticStep {
        low: f64,
        high: f64,
        center: f64,
        width: f64,
    },
    Tabulated {
        x: Vec<f64>,
        sigma: Vec<f64>,
    },
    /// CSV with header `x,sigma`.
    TabulatedCsv {
        path: PathBuf,
    },
    GammaSigma {
        gamma: f64,
        a: f64,
        b: f64,
        c: f64,
    },
    GammaEta {
        gamma: f64,
        a: f64,
        b: f64,
        c: f64,
    },
    PsiSigma {
        alpha: f64,
        gamma: f64,
        a: f64,
        b: f64,
        c: f64,
    },
    PsiEta {
        alpha: f64,
        gamma: f64,
        a: f64,
        b: f64,
        c: f64,
    },
}

impl FromStr for VolSpec {
    type Err = ConfigError;

    /// `const:ς`, `step:low,high,center,width`, `csv:path`,
    /// `gamma-sigma:γ,a,b,c`, `gamma-eta:…`, `psi-sigma:α,γ,a,b,c`, `psi-eta:…`.
    fn from_str(s: &str) -> ConfigResult<Self> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| cfg_err(format!("vol descriptor {s:?} lacks ':'")))?;
        Ok(match kind {
            "const" | "constant" => VolSpec::Constant { value: parse_num(args)? },
            "step" => {
                let [low, high, center, width] = parse_args(args, "step")?;
                VolSpec::LogisticStep { low, high, center, width }
            }
            "csv" => VolSpec::TabulatedCsv { path: PathBuf::from(args) },
            "gamma-sigma" | "gamma-eta" => {
                let [gamma, a, b, c] = parse_args(args, kind)?;
                if kind == "gamma-sigma" {
                    VolSpec::GammaSigma { gamma, a, b, c }
                } else {
                    VolSpec::GammaEta { gamma, a, b, c }
                }
            }
            "psi-sigma" | "psi-eta" => {
                let [alpha, gamma, a, b, c] = parse_args(args, kind)?;
                if kind == "psi-sigma" {
                    VolSpec::PsiSigma { alpha, gamma, a, b, c }
                } else {
                    VolSpec::PsiEta { alpha, gamma, a, b, c }
                }
            }
            _ => {
                return Err(cfg_err(format!(
                    "unknown vol kind {kind:?}; expected const, step, csv, gamma-sigma, gamma-eta, psi-sigma or psi-eta"
                )))
            }
        })
    }
}

#[derive(Debug, Deserialize)]
struct VolRow {
    x: f64,
    sigma: f64,
}

impl VolSpec {
    pub fn build(&self, m: &MarketParams) -> ConfigResult<VolCurve> {
        let bad = |e: perp_duality::error::Error| cfg_err(format!("volatility: {e}"));
        Ok(match self {
            VolSpec::Constant { value } => VolCurve::constant(*value).map_err(bad)?,
            VolSpec::LogisticStep {
                low,
                high,
                center,
                width,
            } => VolCurve::logistic_step(*low, *high, *center, *width).map_err(bad)?,
            VolSpec::Tabulated { x, sigma } => {
                VolCurve::tabulated(x.clone(), sigma.clone()).map_err(bad)?
            }
            VolSpec::TabulatedCsv { path } => {
                let rows: Vec<VolRow> = read_csv(path)?;
                let (x, sigma) = rows.into_iter().map(|r| (r.x, r.sigma)).unzip();
                VolCurve::tabulated(x, sigma).map_err(bad)?
            }
            VolSpec::GammaSigma { gamma, a, b, c } => VolCurve::ClosedForm(
                ClosedFormVol::GammaSigma(GammaExample::new(*gamma, *a, *b, *c, *m).map_err(bad)?),
            ),
            VolSpec::GammaEta { gamma, a, b, c } => VolCurve::ClosedForm(ClosedFormVol::GammaEta(
                GammaExample::new(*gamma, *a, *b, *c, *m).map_err(bad)?,
            )),
            VolSpec::PsiSigma {
                alpha,
                gamma,
                a,
                b,
                c,
            } => VolCurve::ClosedForm(ClosedFormVol::PsiPowerSigma(
                PsiPowerExample::new(*alpha, *gamma, *a, *b, *c, *m).map_err(bad)?,
            )),
            VolSpec::PsiEta {
                alpha,
                gamma,
                a,
                b,
                c,
            } => VolCurve::ClosedForm(ClosedFormVol::PsiPowerEta(
                PsiPowerExample::new(*alpha, *gamma, *a, *b, *c, *m).map_err(bad)?,
            )),
        })
    }
}

/// Reads a headed CSV into typed rows.
pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> ConfigResult<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| cfg_err(format!("{}: {e}", path.display())))
}

/// `callput`, `gamma:γ`, `pair:α,γ,γ′`.
pub fn parse_payoff_text(s: &str) -> ConfigResult<PayoffFamily> {
    let (kind, args) = s.split_once(':').unwrap_or((s, ""));
    Ok(match kind {
        "callput" | "call_put" => PayoffFamily::CallPut,
        "gamma" | "power_gamma" => PayoffFamily::PowerGamma {
            gamma: parse_num(args)?,
        },
        "pair" | "power_pair" => {
            let [alpha, gamma, gamma_prime] = parse_args(args, kind)?;
            PayoffFamily::PowerPair {
                alpha,
                gamma,
                gamma_prime,
            }
        }
        _ => return Err(unsupported_payoff(s)),
    })
}

fn unsupported_payoff(what: &str) -> ConfigError {
    cfg_err(format!(
        "unsupported payoff {what}; supported families: {SUPPORTED_FAMILIES}"
    ))
}

fn payoff_from_value(v: &Value) -> ConfigResult<PayoffFamily> {
    match v {
        Value::String(s) => parse_payoff_text(s),
        Value::Object(_) => {
            serde_json::from_value(v.clone()).map_err(|_| unsupported_payoff(&v.to_string()))
        }
        _ => Err(unsupported_payoff(&v.to_string())),
    }
}

fn vol_from_value(v: &Value, what: &str) -> ConfigResult<VolSpec> {
    match v {
        Value::String(s) => s.parse(),
        Value::Number(n) => Ok(VolSpec::Constant {
            value: n.as_f64().unwrap_or(f64::NAN),
        }),
        _ => serde_json::from_value(v.clone()).map_err(|e| cfg_err(format!("{what}: {e}"))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub nodes: Option<usize>,
    pub residual_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdConfig {
    pub space_nodes: Option<usize>,
    pub steps_per_unit_time: Option<f64>,
    pub width_std: Option<f64>,
    pub min_half_width: Option<f64>,
    pub omega: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub tol_rel: Option<f64>,
    pub x_lo_fraction: Option<f64>,
    pub nodes: Option<usize>,
}

/// Everything a run may need; each subcommand reads the fields it uses.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: Option<MarketParams>,
    pub payoff: Option<Value>,
    /// Put-type volatility σ.
    pub vol: Option<Value>,
    /// Call-type volatility η.
    pub eta: Option<Value>,
    pub x: Option<Points>,
    pub y: Option<Points>,
    /// `put` (default) or `call`.
    pub side: Option<String>,
    pub grid: Option<GridConfig>,
    pub fd: Option<FdConfig>,
    pub maturities: Option<Vec<f64>>,
    /// Analytic pair name for `verify` and `example`: `gamma` or `psi`.
    pub example: Option<String>,
    /// CSV with header `strike,price`.
    pub prices: Option<PathBuf>,
    pub strikes: Option<Points>,
    pub x0: Option<f64>,
    pub calibration: Option<CalibrationConfig>,
    pub output: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> ConfigResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))
    }

    pub fn market(&self) -> ConfigResult<MarketParams> {
        let m = self
            .market
            .ok_or_else(|| cfg_err("market {r, delta} is required"))?;
        m.validate().map_err(|e| cfg_err(format!("market: {e}")))?;
        Ok(m)
    }

    pub fn payoff(&self) -> ConfigResult<Payoff> {
        let v = self
            .payoff
            .as_ref()
            .ok_or_else(|| cfg_err("payoff is required"))?;
        Payoff::new(payoff_from_value(v)?).map_err(|e| cfg_err(format!("payoff: {e}")))
    }

    pub fn sigma(&self, m: &MarketParams) -> ConfigResult<VolCurve> {
        let v = self
            .vol
            .as_ref()
            .ok_or_else(|| cfg_err("vol is required"))?;
        vol_from_value(v, "vol")?.build(m)
    }

    pub fn eta(&self, m: &MarketParams) -> ConfigResult<Option<VolCurve>> {
        self.eta
            .as_ref()
            .map(|v| vol_from_value(v, "eta")?.build(m))
            .transpose()
    }

    pub fn has_sigma(&self) -> bool {
        self.vol.is_some()
    }

    pub fn xs(&self) -> ConfigResult<Vec<f64>> {
        self.x
            .as_ref()
            .ok_or_else(|| cfg_err("x points are required"))?
            .values("x")
    }

    pub fn ys(&self) -> ConfigResult<Vec<f64>> {
        self.y
            .as_ref()
            .ok_or_else(|| cfg_err("y points are required"))?
            .values("y")
    }

    pub fn is_call_side(&self) -> ConfigResult<bool> {
        match self.side.as_deref() {
            None | Some("put") => Ok(false),
            Some("call") => Ok(true),
            Some(s) => Err(cfg_err(format!("side must be put or call, got {s:?}"))),
        }
    }

    pub fn grid(&self) -> ConfigResult<GridSpec> {
        let d = GridSpec::default();
        let c = self.grid.clone().unwrap_or_default();
        let g = GridSpec {
            lo: c.lo.unwrap_or(d.lo),
            hi: c.hi.unwrap_or(d.hi),
            nodes: c.nodes.unwrap_or(d.nodes),
            residual_tol: positive(
                "grid.residual_tol",
                c.residual_tol.unwrap_or(d.residual_tol),
            )?,
        };
        g.validate().map_err(|e| cfg_err(format!("grid: {e}")))?;
        Ok(g)
    }

    pub fn fd(&self) -> ConfigResult<FdGrid> {
        let d = FdGrid::default();
        let c = self.fd.clone().unwrap_or_default();
        let g = FdGrid {
            space_nodes: c.space_nodes.unwrap_or(d.space_nodes),
            steps_per_unit_time: c.steps_per_unit_time.unwrap_or(d.steps_per_unit_time),
            width_std: c.width_std.unwrap_or(d.width_std),
            min_half_width: c.min_half_width.unwrap_or(d.min_half_width),
            omega: c.omega.unwrap_or(d.omega),
            tol: positive("fd.tol", c.tol.unwrap_or(d.tol))?,
            max_iter: c.max_iter.unwrap_or(d.max_iter),
        };
        g.validate().map_err(|e| cfg_err(format!("fd: {e}")))?;
        Ok(g)
    }

    pub fn maturities(&self) -> ConfigResult<Vec<f64>> {
        let ts = self.maturities.clone().unwrap_or_default();
        if ts.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(cfg_err("maturities must be finite and >= 0"));
        }
        Ok(ts)
    }

    pub fn calibration(&self) -> ConfigResult<CalibrationOptions> {
        let d = CalibrationOptions::default();
        let c = self.calibration.clone().unwrap_or_default();
        let o = CalibrationOptions {
            tol_rel: positive("calibration.tol_rel", c.tol_rel.unwrap_or(d.tol_rel))?,
            x_lo_fraction: c.x_lo_fraction.unwrap_or(d.x_lo_fraction),
            nodes: c.nodes.unwrap_or(d.nodes),
        };
        if !(o.x_lo_fraction > 0.0 && o.x_lo_fraction < 1.0) {
            return Err(cfg_err("calibration.x_lo_fraction must lie in (0, 1)"));
        }
        if o.nodes < 2 {
            return Err(cfg_err("calibration.nodes must be >= 2"));
        }
        Ok(o)
    }

    pub fn x0(&self) -> ConfigResult<f64> {
        let x0 = self.x0.ok_or_else(|| cfg_err("x0 is required"))?;
        positive("x0", x0)
    }
}

fn positive(name: &str, v: f64) -> ConfigResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(cfg_err(format!("{name} must be positive, got {v}")))
    }
}

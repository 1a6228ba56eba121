//! Batch driver: perpetual prices, exercise boundaries, dual volatilities,
//! duality checks against a finite-maturity pricer, and calibration.
//!
//! Exit codes: 0 success, 1 output i/o failure, 2 configuration error,
//! 3 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use commands::{Failure, Output};
use config::{ConfigError, Points, RunConfig};
use perp_duality::market::MarketParams;

#[derive(Parser, Debug)]
#[command(name = "perp-duality", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Perpetual prices with exercise boundary and region flag.
    Price(Common),
    /// Exercise boundary x*(y) (or y*(x) with --side call).
    Boundary(Common),
    /// Dual volatility and condition-margin report.
    Dualize(Common),
    /// Finite-maturity put/call table against the perpetual prices.
    Verify(VerifyArgs),
    /// Local volatility from perpetual put prices across strikes.
    Calibrate(CalibrateArgs),
    /// Closed-form dual pair sampled on a grid.
    Example(ExampleArgs),
}

/// Flags override the corresponding fields of `--config`.
#[derive(Args, Debug, Default)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// callput | gamma:γ | pair:α,γ,γ′
    #[arg(long)]
    payoff: Option<String>,
    /// const:ς | step:low,high,center,width | csv:path | gamma-sigma:γ,a,b,c | psi-sigma:α,γ,a,b,c
    #[arg(long)]
    vol: Option<String>,
    /// Call-type volatility, same syntax as --vol.
    #[arg(long)]
    eta: Option<String>,
    /// Points: 2 | 0.5,1,2 | log:lo:hi:n
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    y: Option<String>,
    /// put | call
    #[arg(long)]
    side: Option<String>,
    /// CSV destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON report destination (stderr when absent).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated maturities; empty for the perpetual row only.
    #[arg(long, allow_hyphen_values = true)]
    maturities: Option<String>,
    /// Analytic pair instead of --vol: gamma[:γ,a,b,c] | psi[:α,γ,a,b,c]
    #[arg(long)]
    example: Option<String>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    /// CSV with header strike,price.
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    x0: Option<f64>,
    /// Strikes for synthetic prices from --vol.
    #[arg(long, allow_hyphen_values = true)]
    strikes: Option<String>,
}

#[derive(Args, Debug)]
struct ExampleArgs {
    /// gamma[:γ,a,b,c] | psi[:α,γ,a,b,c]
    name: Option<String>,
    #[command(flatten)]
    common: Common,
}

fn merged(c: &Common) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if c.r.is_some() || c.delta.is_some() {
        let base = cfg.market;
        let r = c.r.or(base.map(|m| m.r));
        let delta = c.delta.or(base.map(|m| m.delta));
        match (r, delta) {
            (Some(r), Some(delta)) => cfg.market = Some(MarketParams { r, delta }),
            _ => return Err(ConfigError("market needs both --r and --delta".into())),
        }
    }
    if let Some(s) = &c.payoff {
        cfg.payoff = Some(Value::String(s.clone()));
    }
    if let Some(s) = &c.vol {
        cfg.vol = Some(Value::String(s.clone()));
    }
    if let Some(s) = &c.eta {
        cfg.eta = Some(Value::String(s.clone()));
    }
    if let Some(s) = &c.x {
        cfg.x = Some(s.parse::<Points>()?);
    }
    if let Some(s) = &c.y {
        cfg.y = Some(s.parse::<Points>()?);
    }
    if c.side.is_some() {
        cfg.side = c.side.clone();
    }
    if c.out.is_some() {
        cfg.output = c.out.clone();
    }
    if c.report.is_some() {
        cfg.report = c.report.clone();
    }
    Ok(cfg)
}

fn parse_maturities(s: &str) -> Result<Vec<f64>, ConfigError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| ConfigError(format!("bad maturity {t:?}")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (cfg, out) = match &cli.cmd {
        Cmd::Price(c) => {
            let cfg = merged(c)?;
            let out = commands::price(&cfg)?;
            (cfg, out)
        }
        Cmd::Boundary(c) => {
            let cfg = merged(c)?;
            let out = commands::boundary(&cfg)?;
            (cfg, out)
        }
        Cmd::Dualize(c) => {
            let cfg = merged(c)?;
            let out = commands::dualize(&cfg)?;
            (cfg, out)
        }
        Cmd::Verify(a) => {
            let mut cfg = merged(&a.common)?;
            if let Some(s) = &a.maturities {
                cfg.maturities = Some(parse_maturities(s)?);
            }
            if a.example.is_some() {
                cfg.example = a.example.clone();
            }
            let out = commands::verify(&cfg)?;
            (cfg, out)
        }
        Cmd::Calibrate(a) => {
            let mut cfg = merged(&a.common)?;
            if a.prices.is_some() {
                cfg.prices = a.prices.clone();
            }
            if a.x0.is_some() {
                cfg.x0 = a.x0;
            }
            if let Some(s) = &a.strikes {
                cfg.strikes = Some(s.parse::<Points>()?);
            }
            let out = commands::calibrate_cmd(&cfg)?;
            (cfg, out)
        }
        Cmd::Example(a) => {
            let cfg = merged(&a.common)?;
            let out = commands::example(&cfg, a.name.as_deref())?;
            (cfg, out)
        }
    };
    emit(&cfg, out)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn emit(cfg: &RunConfig, out: Output) -> Result<(), Failure> {
    match &cfg.output {
        Some(path) => write(path, &out.csv)?,
        None => print!("{}", out.csv),
    }
    if let Some(r) = out.report {
        let text = serde_json::to_string_pretty(&r).expect("JSON values always serialise") + "\n";
        match &cfg.report {
            Some(path) => write(path, &text)?,
            None => eprint!("{text}"),
        }
    }
    Ok(())
}

fn init_threads() -> Result<(), ConfigError> {
    let Ok(v) = std::env::var("PERP_DUALITY_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        ConfigError(format!(
            "PERP_DUALITY_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ConfigError(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().map_err(Failure::from).and_then(|_| run(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

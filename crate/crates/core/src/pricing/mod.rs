//! Perpetual prices from the fundamental solutions, and a finite-maturity
//! American pricer used as an independent cross-check.

mod fd;

use std::io::Write;

pub use fd::{finite_maturity_curve, finite_maturity_price, FdGrid, FdSide};

use serde::Serialize;

use crate::boundaries::{call_boundary_at, put_boundary_at};
use crate::error::Result;
use crate::fundamental::LogDerivCurve;
use crate::payoff::Payoff;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerpetualQuote {
    pub price: f64,
    /// `x*(y)` for a put quote, `y*(x)` for a call quote; 0 when the put
    /// support is empty.
    pub boundary_point: f64,
    pub in_exercise_region: bool,
}

/// `P_σ(x, y)`: the perpetual put-type price discounted at `r`.
pub fn perpetual_put_price(
    x: f64,
    y: f64,
    p: &Payoff,
    u: &LogDerivCurve,
) -> Result<PerpetualQuote> {
    p.eval(x, y)?;
    if !(p.x_edge(y) > 0.0) {
        return Ok(PerpetualQuote {
            price: 0.0,
            boundary_point: 0.0,
            in_exercise_region: false,
        });
    }
    let xs = put_boundary_at(y, p, u)?;
    if x <= xs {
        return Ok(PerpetualQuote {
            price: p.value(x, y),
            boundary_point: xs,
            in_exercise_region: true,
        });
    }
    Ok(PerpetualQuote {
        price: p.value(xs, y) * u.ratio(x, xs)?,
        boundary_point: xs,
        in_exercise_region: false,
    })
}

/// `c_η(y, x)`: the perpetual call-type price discounted at `δ`.
pub fn perpetual_call_price(
    y: f64,
    x: f64,
    p: &Payoff,
    v: &LogDerivCurve,
) -> Result<PerpetualQuote> {
    p.eval(x, y)?;
    let ys = call_boundary_at(x, p, v)?;
    if y >= ys {
        return Ok(PerpetualQuote {
            price: p.value(x, y),
            boundary_point: ys,
            in_exercise_region: true,
        });
    }
    Ok(PerpetualQuote {
        price: p.value(x, ys) * v.ratio(y, ys)?,
        boundary_point: ys,
        in_exercise_region: false,
    })
}

/// One row of a maturity table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaturityRow {
    pub maturity: f64,
    pub put: f64,
    pub call: f64,
}

impl MaturityRow {
    pub fn gap(&self) -> f64 {
        (self.put - self.call).abs()
    }
}

/// CSV with columns `T, P, c, gap`.
pub fn write_maturity_csv<W: Write>(rows: &[MaturityRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "T,P,c,gap")?;
    for r in rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            r.maturity,
            r.put,
            r.call,
            r.gap()
        )?;
    }
    Ok(())
}

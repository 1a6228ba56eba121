//! Finite-maturity American prices: Crank–Nicolson in log-spot with a
//! Rannacher start and projected SOR for the early-exercise constraint.

use crate::error::{ensure_finite, Error, Result};
use crate::market::MarketParams;
use crate::payoff::Payoff;
use crate::vol::VolCurve;

/// Which of the two problems is priced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdSide {
    /// Spot is `x`, strike `y` fixed; drift `r−δ`, discount `r`.
    PutType,
    /// Spot is `y`, strike `x` fixed; drift `δ−r`, discount `δ`.
    CallType,
}

/// Discretisation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdGrid {
    /// Odd number of log-spot nodes; the spot sits on the middle node.
    pub space_nodes: usize,
    pub steps_per_unit_time: f64,
    /// Half-width of the log-spot domain in units of `σ̄·√T`.
    pub width_std: f64,
    /// Smallest half-width of the log-spot domain.
    pub min_half_width: f64,
    pub omega: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FdGrid {
    fn default() -> Self {
        Self {
            space_nodes: 801,
            steps_per_unit_time: 200.0,
            width_std: 8.0,
            min_half_width: 0.5,
            omega: 1.2,
            tol: 1e-12,
            max_iter: 20_000,
        }
    }
}

impl FdGrid {
    pub fn validate(&self) -> Result<()> {
        if self.space_nodes < 201 || self.space_nodes.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "space_nodes must be odd and >= 201, got {}",
                self.space_nodes
            )));
        }
        for (n, v) in [
            ("steps_per_unit_time", self.steps_per_unit_time),
            ("width_std", self.width_std),
            ("min_half_width", self.min_half_width),
            ("tol", self.tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{n} must be positive, got {v}"
                )));
            }
        }
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "omega must be in (0, 2), got {}",
                self.omega
            )));
        }
        Ok(())
    }
}

/// Price at a single maturity.
#[allow(clippy::too_many_arguments)]
pub fn finite_maturity_price(
    maturity: f64,
    spot: f64,
    strike: f64,
    p: &Payoff,
    vol: &VolCurve,
    m: &MarketParams,
    side: FdSide,
    grid: &FdGrid,
) -> Result<f64> {
    Ok(finite_maturity_curve(&[maturity], spot, strike, p, vol, m, side, grid)?[0])
}

/// Prices at several maturities from one time-marching run.
#[allow(clippy::too_many_arguments)]
pub fn finite_maturity_curve(
    maturities: &[f64],
    spot: f64,
    strike: f64,
    p: &Payoff,
    vol: &VolCurve,
    m: &MarketParams,
    side: FdSide,
    grid: &FdGrid,
) -> Result<Vec<f64>> {
    m.validate()?;
    grid.validate()?;
    ensure_finite("spot", spot)?;
    ensure_finite("strike", strike)?;
    if !(spot > 0.0 && strike > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "spot and strike must be positive, got {spot}, {strike}"
        )));
    }
    for &t in maturities {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "maturity must be >= 0, got {t}"
            )));
        }
    }
    let payoff = |s: f64| match side {
        FdSide::PutType => p.value(s, strike),
        FdSide::CallType => p.value(strike, s),
    };
    let (drift, disc) = match side {
        FdSide::PutType => (m.r - m.delta, m.r),
        FdSide::CallType => (m.delta - m.r, m.delta),
    };
    let t_max = maturities.iter().cloned().fold(0.0, f64::max);
    let n = grid.space_nodes;
    let half = (grid.width_std * vol.upper_bound() * t_max.sqrt()).max(grid.min_half_width);
    let dz = 2.0 * half / (n - 1) as f64;
    let z0 = spot.ln();
    let mid = n / 2;
    let mut s: Vec<f64> = (0..n)
        .map(|i| (z0 + (i as f64 - mid as f64) * dz).exp())
        .collect();
    s[mid] = spot;
    let obstacle: Vec<f64> = s.iter().map(|&x| payoff(x)).collect();

    // Spatial operator L V_i = lo_i V_{i-1} + di_i V_i + up_i V_{i+1}.
    let mut lo = vec![0.0; n];
    let mut di = vec![0.0; n];
    let mut up = vec![0.0; n];
    for i in 1..n - 1 {
        let s2 = vol.eval(s[i]).powi(2);
        let diff = 0.5 * s2 / (dz * dz);
        let conv = (drift - 0.5 * s2) / (2.0 * dz);
        lo[i] = diff - conv;
        up[i] = diff + conv;
        di[i] = -2.0 * diff - disc;
    }

    let mut order: Vec<usize> = (0..maturities.len()).collect();
    order.sort_by(|&a, &b| maturities[a].total_cmp(&maturities[b]));
    let mut out = vec![0.0; maturities.len()];
    let mut v = obstacle.clone();
    let mut t = 0.0;
    let mut started = false;
    let mut rhs = vec![0.0; n];
    for &k in &order {
        let target = maturities[k];
        let span = target - t;
        if span > 0.0 {
            let steps = (span * grid.steps_per_unit_time).ceil().max(1.0) as usize;
            let dt = span / steps as f64;
            let mut schedule: Vec<(f64, f64)> = Vec::new();
            let mut rest = steps;
            if !started {
                // Two full steps replaced by four implicit half steps.
                let lead = steps.min(2);
                for _ in 0..2 * lead {
                    schedule.push((0.5 * dt, 1.0));
                }
                rest -= lead;
                started = true;
            }
            schedule.extend(std::iter::repeat_n((dt, 0.5), rest));
            for (h, theta) in schedule {
                for i in 1..n - 1 {
                    let lv = lo[i] * v[i - 1] + di[i] * v[i] + up[i] * v[i + 1];
                    rhs[i] = v[i] + (1.0 - theta) * h * lv;
                }
                rhs[0] = obstacle[0];
                rhs[n - 1] = obstacle[n - 1];
                psor(&lo, &di, &up, &rhs, &obstacle, theta * h, &mut v, grid)?;
            }
            t = target;
        }
        out[k] = v[mid];
    }
    Ok(out)
}

/// Solves `(I − c L) v = rhs` subject to `v ≥ obstacle` with Dirichlet ends.
#[allow(clippy::too_many_arguments)]
fn psor(
    lo: &[f64],
    di: &[f64],
    up: &[f64],
    rhs: &[f64],
    obstacle: &[f64],
    c: f64,
    v: &mut [f64],
    grid: &FdGrid,
) -> Result<()> {
    let n = v.len();
    v[0] = rhs[0];
    v[n - 1] = rhs[n - 1];
    for iter in 0..grid.max_iter {
        let mut change = 0.0_f64;
        for i in 1..n - 1 {
            let a = -c * lo[i];
            let d = 1.0 - c * di[i];
            let b = -c * up[i];
            let gs = (rhs[i] - a * v[i - 1] - b * v[i + 1]) / d;
            let new = (v[i] + grid.omega * (gs - v[i])).max(obstacle[i]);
            change = change.max((new - v[i]).abs() / new.abs().max(1.0));
            v[i] = new;
        }
        if change <= grid.tol {
            return Ok(());
        }
        if !change.is_finite() {
            return Err(Error::NoConvergence(format!(
                "PSOR diverged at iteration {iter}"
            )));
        }
    }
    Err(Error::NoConvergence(format!(
        "PSOR did not reach tolerance {} in {} iterations",
        grid.tol, grid.max_iter
    )))
}

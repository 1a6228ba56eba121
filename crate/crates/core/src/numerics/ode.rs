//! Adaptive Dormand–Prince 5(4) integrator for scalar ODEs.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest allowed |step|; `f64::INFINITY` disables the cap.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-13,
            max_step: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = f(t, y)` from `(t0, y0)` to `t1` (either direction).
///
/// `observe(t, y, y')` is called after every accepted step, including the
/// final one landing exactly on `t1`; returning an error aborts integration.
pub fn dopri5<F, O>(
    mut f: F,
    t0: f64,
    y0: f64,
    t1: f64,
    opts: &OdeOptions,
    mut observe: O,
) -> Result<f64>
where
    F: FnMut(f64, f64) -> Result<f64>,
    O: FnMut(f64, f64, f64) -> Result<()>,
{
    if t0 == t1 {
        return Ok(y0);
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, y)?;

    // Initial step from the usual two-derivative heuristic.
    let scale = opts.atol + opts.rtol * y.abs();
    let d0 = y.abs() / scale;
    let d1 = k1.abs() / scale;
    let mut h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h = h.min(span).min(opts.max_step);

    for _ in 0..opts.max_steps {
        let remaining = (t1 - t).abs();
        if remaining <= 1e-14 * span.max(1.0) {
            return Ok(y);
        }
        let last = h >= remaining;
        let hs = if last { remaining } else { h } * dir;

        let k2 = f(t + C2 * hs, y + hs * A21 * k1)?;
        let k3 = f(t + C3 * hs, y + hs * (A31 * k1 + A32 * k2))?;
        let k4 = f(t + C4 * hs, y + hs * (A41 * k1 + A42 * k2 + A43 * k3))?;
        let k5 = f(
            t + C5 * hs,
            y + hs * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4),
        )?;
        let k6 = f(
            t + hs,
            y + hs * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5),
        )?;
        let y_new = y + hs * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6);
        let t_new = if last { t1 } else { t + hs };
        let k7 = f(t_new, y_new)?;

        let err_abs = (hs * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)).abs();
        let tol = opts.atol + opts.rtol * y.abs().max(y_new.abs());
        let err = err_abs / tol;
        if !err.is_finite() {
            h *= 0.2;
            if h < 1e-14 * span {
                return Err(Error::IntegrationBlowUp { at: t });
            }
            continue;
        }
        if err <= 1.0 {
            t = t_new;
            y = y_new;
            k1 = k7;
            observe(t, y, k1)?;
            if last {
                return Ok(y);
            }
        }
        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * fac).min(opts.max_step);
        if h < 1e-14 * span {
            return Err(Error::NoConvergence(format!(
                "ODE step size underflow at t={t}"
            )));
        }
    }
    Err(Error::NoConvergence(format!(
        "ODE exceeded {} steps before reaching t={t1}",
        opts.max_steps
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let y = dopri5(
            |_, y| Ok(y),
            0.0,
            1.0,
            2.0,
            &OdeOptions::default(),
            |_, _, _| Ok(()),
        )
        .unwrap();
        assert!((y - 2f64.exp()).abs() < 1e-9 * 2f64.exp());
    }

    #[test]
    fn backward_direction() {
        let y = dopri5(
            |t, _| Ok(t.cos()),
            1.0,
            1f64.sin(),
            -1.0,
            &OdeOptions::default(),
            |_, _, _| Ok(()),
        )
        .unwrap();
        assert!((y - (-1f64).sin()).abs() < 1e-10);
    }

    #[test]
    fn riccati_with_known_solution() {
        // y' = 1 + y^2, y(0) = 0 -> tan(t)
        let mut steps = 0;
        let y = dopri5(
            |_, y| Ok(1.0 + y * y),
            0.0,
            0.0,
            1.2,
            &OdeOptions::default(),
            |_, _, _| {
                steps += 1;
                Ok(())
            },
        )
        .unwrap();
        assert!((y - 1.2f64.tan()).abs() < 1e-8 * 1.2f64.tan());
        assert!(steps > 3);
    }

    #[test]
    fn observer_error_aborts() {
        let out = dopri5(
            |_, y| Ok(y),
            0.0,
            1.0,
            5.0,
            &OdeOptions::default(),
            |t, _, _| {
                if t > 1.0 {
                    Err(Error::IntegrationBlowUp { at: t })
                } else {
                    Ok(())
                }
            },
        );
        assert!(matches!(out, Err(Error::IntegrationBlowUp { .. })));
    }
}

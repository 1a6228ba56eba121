//! Closed-form dual pairs with rational exercise boundaries.

use crate::error::{ensure_positive, Error, Result};
use crate::market::MarketParams;

/// Positive root `t` of `t² + (a − s)t − c·m = 0` where `s = b·m`,
/// evaluated without cancellation.
fn positive_root(a: f64, b: f64, c: f64, m: f64) -> f64 {
    let p = b * m - a;
    let disc = (p * p + 4.0 * c * m).sqrt();
    if p >= 0.0 {
        0.5 * (p + disc)
    } else {
        2.0 * c * m / (disc - p)
    }
}

/// Pair for the payoff `(α y − x^γ)^+`, `γ ≥ 1`, whose put boundary is
/// `y*(x) = x^γ (x^γ + a) / (α (b x^γ + c))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiPowerExample {
    pub alpha: f64,
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub market: MarketParams,
}

impl PsiPowerExample {
    pub fn new(
        alpha: f64,
        gamma: f64,
        a: f64,
        b: f64,
        c: f64,
        market: MarketParams,
    ) -> Result<Self> {
        market.validate()?;
        for (n, v) in [
            ("alpha", alpha),
            ("gamma", gamma),
            ("a", a),
            ("b", b),
            ("c", c),
        ] {
            ensure_positive(n, v)?;
        }
        if gamma < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "gamma must be >= 1, got {gamma}"
            )));
        }
        let e = Self {
            alpha,
            gamma,
            a,
            b,
            c,
            market,
        };
        e.check_admissible()?;
        Ok(e)
    }

    fn check_admissible(&self) -> Result<()> {
        let MarketParams { r, delta } = self.market;
        let (g, a, b, c) = (self.gamma, self.a, self.b, self.c);
        let hi = (c / a).max(b);
        let lo = (c / a).min(b);
        let limit = if r >= delta {
            1.0
        } else {
            1.0 / (1.0 + (delta / r - 1.0) * g)
        };
        if !(hi <= limit && lo < limit) {
            return Err(Error::Inadmissible(format!(
                "need max(c/a, b) = {hi} <= {limit} and min(c/a, b) = {lo} < {limit}"
            )));
        }
        let lin = (g - 1.0) * b * (2.0 * c - a) + c * (g + 1.0);
        if lin < 0.0 {
            return Err(Error::Inadmissible(format!(
                "need (γ−1)b(2c−a) + c(γ+1) >= 0, got {lin}"
            )));
        }
        Ok(())
    }

    pub fn y_star(&self, x: f64) -> f64 {
        let z = x.powf(self.gamma);
        z * (z + self.a) / (self.alpha * (self.b * z + self.c))
    }

    pub fn y_star_slope(&self, x: f64) -> f64 {
        let (a, b, c, g) = (self.a, self.b, self.c, self.gamma);
        let z = x.powf(g);
        let d = b * z + c;
        g * x.powf(g - 1.0) * (b * z * z + 2.0 * c * z + a * c) / (self.alpha * d * d)
    }

    pub fn x_star(&self, y: f64) -> f64 {
        positive_root(self.a, self.b, self.c, self.alpha * y).powf(1.0 / self.gamma)
    }

    pub fn x_star_slope(&self, y: f64) -> f64 {
        1.0 / self.y_star_slope(self.x_star(y))
    }

    pub fn sigma(&self, x: f64) -> f64 {
        let MarketParams { r, delta } = self.market;
        let (a, b, c, g) = (self.a, self.b, self.c, self.gamma);
        let z = x.powf(g);
        let d = b * z + c;
        let num =
            (2.0 / g) * (r * ((z + a) / d - 1.0) + (r - delta) * g) * d * ((1.0 - b) * z + a - c);
        let den = b * (1.0 + (g - 1.0) * b) * z * z
            + ((g - 1.0) * b * (2.0 * c - a) + c * (g + 1.0)) * z
            + c * (g * c + a - c);
        (num / den).sqrt()
    }

    pub fn eta(&self, y: f64) -> f64 {
        let MarketParams { r, delta } = self.market;
        let (a, b, c, al) = (self.a, self.b, self.c, self.alpha);
        let z = positive_root(a, b, c, al * y);
        let d = b * z + c;
        let v = 2.0 * (r * al * y - delta * z) / y * (al * y - z) / (al * al * y)
            * (b * z * z + 2.0 * c * z + a * c)
            / (d * d);
        v.sqrt()
    }
}

/// Pair for the payoff `((y − x)^+)^γ`, `0 < γ ≤ 1`, whose put boundary is
/// `y*(x) = x (x + a) / (b x + c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaExample {
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub market: MarketParams,
}

impl GammaExample {
    pub fn new(gamma: f64, a: f64, b: f64, c: f64, market: MarketParams) -> Result<Self> {
        market.validate()?;
        for (n, v) in [("gamma", gamma), ("a", a), ("b", b), ("c", c)] {
            ensure_positive(n, v)?;
        }
        if gamma > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "gamma must be in (0, 1], got {gamma}"
            )));
        }
        let e = Self {
            gamma,
            a,
            b,
            c,
            market,
        };
        e.check_admissible()?;
        Ok(e)
    }

    fn k(&self) -> f64 {
        (1.0 - self.gamma) * self.market.r + self.gamma * self.market.delta
    }

    fn check_admissible(&self) -> Result<()> {
        let MarketParams { r, delta } = self.market;
        let (g, a, b, c) = (self.gamma, self.a, self.b, self.c);
        let k = self.k();
        if g < 1.0 && delta / r >= (2.0 - g) / (1.0 - g) {
            return Err(Error::Inadmissible(format!(
                "δ/r = {} >= (2−γ)/(1−γ) = {}: no parameters are admissible",
                delta / r,
                (2.0 - g) / (1.0 - g)
            )));
        }
        let hi = (c / a).max(b);
        let lo = (c / a).min(b);
        let cap = 1.0_f64.min(r / k);
        if !(hi < cap) {
            return Err(Error::Inadmissible(format!(
                "need max(c/a, b) = {hi} < min(1, r/k) = {cap}"
            )));
        }
        if !(lo > 1.0 - g) {
            return Err(Error::Inadmissible(format!(
                "need min(c/a, b) = {lo} > 1 − γ = {}",
                1.0 - g
            )));
        }
        let m = (1.0 / b).max(a / c);
        let lhs = (1.0 - g) / (g * g) * (m - 1.0) * (r * m - k);
        let rhs = (r - delta)
            .max((delta - r) * (g * delta + (1.0 - g) * r) / ((1.0 - g) * delta + g * r));
        if !(lhs < rhs) {
            return Err(Error::Inadmissible(format!(
                "need (1−γ)/γ²·(M−1)(rM−k) = {lhs} < {rhs}"
            )));
        }
        Ok(())
    }

    pub fn y_star(&self, x: f64) -> f64 {
        x * (x + self.a) / (self.b * x + self.c)
    }

    pub fn y_star_slope(&self, x: f64) -> f64 {
        let (a, b, c) = (self.a, self.b, self.c);
        let d = b * x + c;
        (b * x * x + 2.0 * c * x + a * c) / (d * d)
    }

    pub fn x_star(&self, y: f64) -> f64 {
        positive_root(self.a, self.b, self.c, y)
    }

    pub fn x_star_slope(&self, y: f64) -> f64 {
        1.0 / self.y_star_slope(self.x_star(y))
    }

    pub fn sigma(&self, x: f64) -> f64 {
        let r = self.market.r;
        let (g, a, b, c) = (self.gamma, self.a, self.b, self.c);
        let k = self.k();
        let num = (2.0 / g) * (x * (1.0 - b) + a - c) * (x * (r - b * k) + a * (r - c / a * k));
        let d = b * x + c;
        let den = b * x * x + 2.0 * c * x + a * c + (g - 1.0) * d * d;
        (num / den).sqrt()
    }

    pub fn eta(&self, y: f64) -> f64 {
        let MarketParams { r, delta } = self.market;
        let (g, a, b, c) = (self.gamma, self.a, self.b, self.c);
        let xs = self.x_star(y);
        let gap = y - xs;
        let num = (2.0 / g)
            * gap
            * (delta * gap + g * (r - delta) * y)
            * (b * xs * xs + 2.0 * c * xs + a * c);
        let den = y
            * y
            * (b * (b + g - 1.0) * xs * xs
                + 2.0 * c * (b + g - 1.0) * xs
                + c * a * (c / a + g - 1.0));
        (num / den).sqrt()
    }
}

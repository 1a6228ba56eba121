//! Piecewise cubic Hermite interpolation.

/// Cubic Hermite interpolant through `(knots[i], values[i])` with prescribed
/// slopes. Queries outside the knot range are clamped to the end cells and
/// extrapolate the end cubics.
#[derive(Debug, Clone, PartialEq)]
pub struct Hermite {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl Hermite {
    /// Panics if the three slices differ in length, have fewer than two
    /// entries, or `knots` is not strictly increasing.
    pub fn new(knots: Vec<f64>, values: Vec<f64>, slopes: Vec<f64>) -> Self {
        assert!(knots.len() >= 2, "need at least two knots");
        assert!(knots.len() == values.len() && knots.len() == slopes.len());
        assert!(
            knots.windows(2).all(|w| w[1] > w[0]),
            "knots must be strictly increasing"
        );
        Self {
            knots,
            values,
            slopes,
        }
    }

    /// Shape-preserving interpolant with Fritsch–Carlson slopes.
    pub fn pchip(knots: Vec<f64>, values: Vec<f64>) -> Self {
        let slopes = pchip_slopes(&knots, &values);
        Self::new(knots, values, slopes)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn lo(&self) -> f64 {
        self.knots[0]
    }

    pub fn hi(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    /// Index `i` of the cell `[knots[i], knots[i+1]]` used for `x`.
    pub fn cell(&self, x: f64) -> usize {
        let n = self.knots.len();
        let i = self.knots.partition_point(|&k| k <= x);
        i.saturating_sub(1).min(n - 2)
    }

    fn local(&self, i: usize, x: f64) -> (f64, f64) {
        let h = self.knots[i + 1] - self.knots[i];
        (h, (x - self.knots[i]) / h)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.cell(x);
        let (h, s) = self.local(i, x);
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.values[i]
            + h * h10 * self.slopes[i]
            + h01 * self.values[i + 1]
            + h * h11 * self.slopes[i + 1]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let i = self.cell(x);
        let (h, s) = self.local(i, x);
        let s2 = s * s;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        d00 * self.values[i]
            + d10 * self.slopes[i]
            + d01 * self.values[i + 1]
            + d11 * self.slopes[i + 1]
    }

    /// Exact integral of the interpolant over `[knots[i], x]` within cell `i`.
    fn partial_integral(&self, i: usize, x: f64) -> f64 {
        let (h, s) = self.local(i, x);
        let (s2, s3, s4) = (s * s, s * s * s, s * s * s * s);
        let i00 = s4 / 2.0 - s3 + s;
        let i10 = s4 / 4.0 - 2.0 * s3 / 3.0 + s2 / 2.0;
        let i01 = -s4 / 2.0 + s3;
        let i11 = s4 / 4.0 - s3 / 3.0;
        h * (i00 * self.values[i]
            + h * i10 * self.slopes[i]
            + i01 * self.values[i + 1]
            + h * i11 * self.slopes[i + 1])
    }

    /// Cumulative integral table: entry `i` is the integral from `knots[0]`
    /// to `knots[i]`.
    pub fn cumulative_integral(&self) -> Vec<f64> {
        let mut acc = Vec::with_capacity(self.knots.len());
        let mut total = 0.0;
        acc.push(0.0);
        for i in 0..self.knots.len() - 1 {
            total += self.partial_integral(i, self.knots[i + 1]);
            acc.push(total);
        }
        acc
    }

    /// Integral from `knots[0]` to `x`, given the table from
    /// [`Hermite::cumulative_integral`].
    pub fn integral_to(&self, cumulative: &[f64], x: f64) -> f64 {
        let i = self.cell(x);
        cumulative[i] + self.partial_integral(i, x)
    }
}

/// Knot slopes of the C² cubic spline with prescribed end slopes.
pub fn spline_slopes(x: &[f64], y: &[f64], d0: f64, dn: f64) -> Vec<f64> {
    let n = x.len();
    assert!(n >= 2 && y.len() == n);
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    // Tridiagonal system for the second derivatives (Thomas algorithm).
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut r = vec![0.0; n];
    b[0] = h[0] / 3.0;
    c[0] = h[0] / 6.0;
    r[0] = delta[0] - d0;
    for i in 1..n - 1 {
        a[i] = h[i - 1] / 6.0;
        b[i] = (h[i - 1] + h[i]) / 3.0;
        c[i] = h[i] / 6.0;
        r[i] = delta[i] - delta[i - 1];
    }
    a[n - 1] = h[n - 2] / 6.0;
    b[n - 1] = h[n - 2] / 3.0;
    r[n - 1] = dn - delta[n - 2];
    for i in 1..n {
        let w = a[i] / b[i - 1];
        b[i] -= w * c[i - 1];
        r[i] -= w * r[i - 1];
    }
    let mut m = vec![0.0; n];
    m[n - 1] = r[n - 1] / b[n - 1];
    for i in (0..n - 1).rev() {
        m[i] = (r[i] - c[i] * m[i + 1]) / b[i];
    }
    let mut d: Vec<f64> = (0..n - 1)
        .map(|i| delta[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0)
        .collect();
    d.push(delta[n - 2] + h[n - 2] * (m[n - 2] + 2.0 * m[n - 1]) / 6.0);
    d
}

/// Fritsch–Carlson monotone slopes (as in PCHIP).
pub fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    assert!(n >= 2 && y.len() == n);
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::time::{Duration, Instant};

use perp_duality::boundaries::{
    boundary_brackets, call_boundary_at, call_boundary_slope, call_smooth_fit, put_boundary_at,
    put_boundary_slope, put_smooth_fit, BoundarySide, SMOOTH_FIT_TOL,
};
use perp_duality::calibration::{calibrate, CalibrationOptions, PriceCurve};
use perp_duality::duality::analytic::{GammaExample, PsiPowerExample};
use perp_duality::duality::{
    analytic_pair_gamma, analytic_pair_psi, build_dual_pair, dual_vol, inverse_dual_vol,
    verify_duality, DualPair,
};
use perp_duality::fundamental::{
    exponent_a, exponent_b, quadratic_residual_a, quadratic_residual_b, solve_log_derivative_f,
    solve_log_derivative_g, GridSpec, LogDerivCurve,
};
use perp_duality::market::MarketParams;
use perp_duality::numerics::grid::log_space;
use perp_duality::payoff::Payoff;
use perp_duality::pricing::{perpetual_call_price, perpetual_put_price, FdGrid};
use perp_duality::vol::{Bump, ClosedFormVol, VolCurve};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Closed = Box<dyn Fn(f64) -> f64>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn fig1_market() -> MarketParams {
    MarketParams::new(0.2, 0.1).unwrap()
}

fn gamma_example() -> GammaExample {
    GammaExample::new(0.75, 1.5, 5.0 / 9.0, 1.0, fig1_market()).unwrap()
}

fn psi_example() -> PsiPowerExample {
    PsiPowerExample::new(0.97, 4.0, 1.5, 5.0 / 9.0, 1.0, fig1_market()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

macro_rules! tryf {
    ($e:expr) => {
        $e.map_err(|e| format!("{}: {e}", stringify!($e)))?
    };
}

fn exponents() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let m = MarketParams::new(rng.gen_range(0.005..0.3), rng.gen_range(0.0..0.3)).unwrap();
        let s = rng.gen_range(0.02..1.5);
        let a = tryf!(exponent_a(s, &m));
        let b = tryf!(exponent_b(s, &m));
        if (a + b - 1.0).abs() > 1e-15 {
            return Err(format!("b != 1 - a at {m:?}, vol {s}"));
        }
        worst = worst
            .max(quadratic_residual_a(a, s, &m).abs())
            .max(quadratic_residual_b(b, s, &m).abs());
        let vols = log_space(0.01, 3.0, 200);
        let mut prev = f64::NEG_INFINITY;
        for &v in &vols {
            let a = tryf!(exponent_a(v, &m));
            if !(a > prev && a < 0.0) {
                return Err(format!(
                    "a(vol) not increasing and negative at {m:?}, vol {v}"
                ));
            }
            prev = a;
        }
    }
    check(
        worst <= 1e-12,
        format!("max quadratic residual {worst:.2e}; a increasing on 100 markets"),
    )
}

fn constant_closed_forms() -> Outcome {
    let m = fig1_market();
    let s = 0.3;
    let vol = VolCurve::constant(s).unwrap();
    let g = GridSpec::default();
    let u = tryf!(solve_log_derivative_f(&vol, &m, &g));
    let v = tryf!(solve_log_derivative_g(&vol, &m, &g));
    let (a, b) = (tryf!(exponent_a(s, &m)), tryf!(exponent_b(s, &m)));
    let ys = log_space(0.01, 100.0, 60);
    let mut worst = 0.0_f64;
    let cases: Vec<(Payoff, Closed, Closed)> = vec![
        (
            Payoff::call_put(),
            Box::new(move |y| a / (a - 1.0) * y),
            Box::new(move |x| b / (b - 1.0) * x),
        ),
        (
            Payoff::power_pair(1.0, 2.0, 1.0).unwrap(),
            Box::new(move |y: f64| (a / (a - 2.0) * y).sqrt()),
            Box::new(move |x: f64| b / (b - 1.0) * x * x),
        ),
        (
            Payoff::power_pair(1.0, 4.0, 1.0).unwrap(),
            Box::new(move |y: f64| (a / (a - 4.0) * y).powf(0.25)),
            Box::new(move |x: f64| b / (b - 1.0) * x.powi(4)),
        ),
        (
            Payoff::power_gamma(0.75).unwrap(),
            Box::new(move |y| a / (a - 0.75) * y),
            Box::new(move |x| b / (b - 0.75) * x),
        ),
    ];
    for (p, xs_cf, ys_cf) in &cases {
        for &y in &ys {
            let x = tryf!(put_boundary_at(y, p, &u));
            worst = worst.max(rel(x, xs_cf(y)));
            let yy = tryf!(call_boundary_at(x, p, &v));
            worst = worst.max(rel(yy, ys_cf(x)));
        }
    }
    check(
        worst <= 1e-8,
        format!("max relative boundary error {worst:.2e} over 4 payoffs"),
    )
}

fn gamma_pair() -> Outcome {
    let e = tryf!(GammaExample::new(0.75, 1.5, 5.0 / 9.0, 1.0, fig1_market()));
    let m = e.market;
    let p = Payoff::power_gamma(0.75).unwrap();
    let g = GridSpec::default();
    let u = tryf!(solve_log_derivative_f(
        &VolCurve::ClosedForm(ClosedFormVol::GammaSigma(e)),
        &m,
        &g
    ));
    let v = tryf!(solve_log_derivative_g(
        &VolCurve::ClosedForm(ClosedFormVol::GammaEta(e)),
        &m,
        &g
    ));
    let mut bnd = 0.0_f64;
    for z in log_space(0.1, 10.0, 100) {
        bnd = bnd.max(rel(tryf!(put_boundary_at(z, &p, &u)), e.x_star(z)));
        bnd = bnd.max(rel(tryf!(call_boundary_at(z, &p, &v)), e.y_star(z)));
    }
    let grid = log_space(0.1, 10.0, 20);
    let mut gap = 0.0_f64;
    for &x in &grid {
        for &y in &grid {
            let a = tryf!(perpetual_put_price(x, y, &p, &u)).price;
            let c = tryf!(perpetual_call_price(y, x, &p, &v)).price;
            gap = gap.max((a - c).abs() / a);
        }
    }
    check(
        bnd <= 1e-5 && gap <= 1e-4,
        format!("admissible; boundary rel err {bnd:.2e}; max |P-c|/P {gap:.2e} on 20x20"),
    )
}

fn figure_one() -> Outcome {
    let ts = [0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 7.5, 10.0];
    let mut notes = Vec::new();
    let mut ok = true;
    let pairs: [(&str, DualPair); 2] = [
        (
            "gamma",
            tryf!(analytic_pair_gamma(gamma_example(), 1e-2, 1e2, 400)),
        ),
        (
            "psi",
            tryf!(analytic_pair_psi(psi_example(), 1e-2, 1e2, 400)),
        ),
    ];
    for (name, pair) in pairs {
        let r = tryf!(verify_duality(
            &pair,
            &[],
            &[],
            Some((1.0, 0.99)),
            &ts,
            &GridSpec::default(),
            &FdGrid::default()
        ));
        let (_, _, perp, perp_c) = r.perpetual_at_point.unwrap();
        let rows = &r.finite_maturity;
        let mono = rows
            .windows(2)
            .all(|w| w[1].put >= w[0].put && w[1].call >= w[0].call);
        let last = rows.last().unwrap();
        let gap = last.gap().abs() / perp;
        let (ep, ec) = (rel(last.put, perp), rel(last.call, perp));
        ok &= mono && gap < 1e-2 && ep < 2e-2 && ec < 2e-2 && rel(perp_c, perp) < 1e-6;
        notes.push(format!(
            "{name}: perp {perp:.6}, P(10) {:.6}, c(10) {:.6}, gap {gap:.1e}, monotone {mono}",
            last.put, last.call
        ));
    }
    check(ok, notes.join("; "))
}

fn round_trips() -> Outcome {
    let m = fig1_market();
    let g = GridSpec::default();
    let cases: Vec<(&str, Payoff, VolCurve, (f64, f64))> = vec![
        (
            "callput const",
            Payoff::call_put(),
            VolCurve::constant(0.3).unwrap(),
            (1e-2, 1e2),
        ),
        (
            "callput step",
            Payoff::call_put(),
            VolCurve::logistic_step(0.2, 0.4, 1.0, 0.5).unwrap(),
            (1e-2, 1e2),
        ),
        (
            "gamma const",
            Payoff::power_gamma(0.75).unwrap(),
            VolCurve::constant(0.5).unwrap(),
            (1e-2, 1e2),
        ),
        (
            "gamma closed-form",
            Payoff::power_gamma(0.75).unwrap(),
            VolCurve::ClosedForm(ClosedFormVol::GammaSigma(gamma_example())),
            (1e-2, 1e2),
        ),
        (
            "psi const",
            Payoff::power_pair(0.97, 4.0, 1.0).unwrap(),
            VolCurve::constant(0.2).unwrap(),
            (0.3, 3.0),
        ),
        (
            "psi closed-form",
            Payoff::power_pair(0.97, 4.0, 1.0).unwrap(),
            VolCurve::ClosedForm(ClosedFormVol::PsiPowerSigma(psi_example())),
            (0.3, 3.0),
        ),
    ];
    let ys = log_space(1e-3, 1e3, 2000);
    let mut worst = 0.0_f64;
    let mut notes = Vec::new();
    for (name, p, s, (lo, hi)) in cases {
        let (eta, _) = tryf!(dual_vol(&s, &p, &m, &ys, &g));
        if !eta.is_complete() {
            return Err(format!(
                "{name}: dual conditions fail {:?}",
                eta.report.violations
            ));
        }
        let xs = log_space(lo, hi, 200);
        let (back, _) = tryf!(inverse_dual_vol(&eta.curve, &p, &m, &xs, &g));
        let err = xs
            .iter()
            .zip(&back.values)
            .map(|(&x, &v)| rel(v, s.eval(x)))
            .fold(0.0, f64::max);
        worst = worst.max(err);
        notes.push(format!("{name} {err:.1e}"));
    }
    check(
        worst <= 1e-5,
        format!("max relative error {worst:.2e} ({})", notes.join(", ")),
    )
}

fn reciprocity() -> Outcome {
    let m = fig1_market();
    let g = GridSpec::default();
    let ys = log_space(1e-2, 1e2, 1000);
    let mut pairs: Vec<(&str, DualPair)> = vec![
        (
            "gamma analytic",
            tryf!(analytic_pair_gamma(gamma_example(), 1e-2, 1e2, 400)),
        ),
        (
            "psi analytic",
            tryf!(analytic_pair_psi(psi_example(), 1e-2, 1e2, 400)),
        ),
    ];
    for (name, p, s) in [
        (
            "callput const",
            Payoff::call_put(),
            VolCurve::constant(0.3).unwrap(),
        ),
        (
            "callput step",
            Payoff::call_put(),
            VolCurve::logistic_step(0.2, 0.4, 1.0, 0.5).unwrap(),
        ),
        (
            "gamma const",
            Payoff::power_gamma(0.75).unwrap(),
            VolCurve::constant(0.5).unwrap(),
        ),
        (
            "psi const",
            Payoff::power_pair(0.97, 4.0, 1.0).unwrap(),
            VolCurve::constant(0.2).unwrap(),
        ),
    ] {
        pairs.push((
            name,
            tryf!(build_dual_pair(s, &p, &m, &log_space(1e-3, 1e3, 2000), &g)),
        ));
    }
    let mut worst = 0.0_f64;
    let mut notes = Vec::new();
    for (name, pair) in &pairs {
        // Two decades inside each pair's boundary span.
        let (lo, hi) = pair.x_star.span();
        let mid = (lo * hi).sqrt();
        let sample: Vec<f64> = if hi / lo >= 100.0 {
            ys.iter()
                .cloned()
                .filter(|&y| y >= mid / 10.0 && y <= mid * 10.0)
                .collect()
        } else {
            return Err(format!(
                "{name}: boundary span [{lo}, {hi}] is under two decades"
            ));
        };
        let e = tryf!(pair.reciprocity_error(&sample));
        worst = worst.max(e);
        notes.push(format!("{name} {e:.1e}"));
    }
    check(
        worst <= 1e-6,
        format!("max |y*(x*(y))-y|/y {worst:.2e} ({})", notes.join(", ")),
    )
}

fn comparison() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = GridSpec::default();
    let cp = Payoff::call_put();
    let pts = log_space(0.2, 5.0, 10);
    let mut checked = 0usize;
    for k in 0..20 {
        let m = MarketParams::new(rng.gen_range(0.02..0.2), rng.gen_range(0.0..0.2)).unwrap();
        let low = rng.gen_range(0.15..0.4);
        let s1 = tryf!(VolCurve::logistic_step(
            low,
            low * rng.gen_range(0.5..2.0),
            rng.gen_range(0.5..2.0),
            0.5
        ));
        let s2 = if k % 2 == 0 {
            tryf!(s1.clone().scaled(rng.gen_range(1.02..1.5)))
        } else {
            tryf!(s1.clone().bumped(vec![Bump {
                lo: 0.05,
                hi: 20.0,
                amplitude: rng.gen_range(0.05..0.5)
            }]))
        };
        let (u1, u2) = (
            tryf!(solve_log_derivative_f(&s1, &m, &g)),
            tryf!(solve_log_derivative_f(&s2, &m, &g)),
        );
        let (v1, v2) = (
            tryf!(solve_log_derivative_g(&s1, &m, &g)),
            tryf!(solve_log_derivative_g(&s2, &m, &g)),
        );
        for &x in &pts {
            for &y in &pts {
                let (a1, a2) = (
                    tryf!(perpetual_put_price(x, y, &cp, &u1)),
                    tryf!(perpetual_put_price(x, y, &cp, &u2)),
                );
                let (c1, c2) = (
                    tryf!(perpetual_call_price(y, x, &cp, &v1)),
                    tryf!(perpetual_call_price(y, x, &cp, &v2)),
                );
                if a1.price > a2.price || c1.price > c2.price {
                    return Err(format!("pair {k}: prices not ordered at ({x}, {y})"));
                }
                if a1.boundary_point < a2.boundary_point || c1.boundary_point > c2.boundary_point {
                    return Err(format!("pair {k}: boundaries not ordered at ({x}, {y})"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!(
        "{checked} points over 20 ordered pairs: P, c, y* increase and x* decreases with vol"
    ))
}

fn calibration() -> Outcome {
    let m = fig1_market();
    let g = GridSpec::default();
    let strikes = log_space(0.1, 4.0, 400);
    let e = gamma_example();
    let p = Payoff::power_gamma(0.75).unwrap();
    let sigma = VolCurve::ClosedForm(ClosedFormVol::GammaSigma(e));
    let pc = tryf!(PriceCurve::synthetic(
        &sigma,
        &p,
        &m,
        1.0,
        strikes.clone(),
        &g
    ));
    let opts = CalibrationOptions {
        x_lo_fraction: 0.2,
        ..CalibrationOptions::default()
    };
    let res = tryf!(calibrate(&pc, &p, &m, &opts));
    let fig = res
        .sigma
        .nodes
        .iter()
        .zip(&res.sigma.values)
        .map(|(&x, &s)| rel(s, e.sigma(x)))
        .fold(0.0, f64::max);

    let cp = Payoff::call_put();
    let flat = VolCurve::constant(0.3).unwrap();
    let pc = tryf!(PriceCurve::synthetic(&flat, &cp, &m, 1.0, strikes, &g));
    let res = tryf!(calibrate(&pc, &cp, &m, &opts));
    let cst = res
        .sigma
        .values
        .iter()
        .map(|&s| rel(s, 0.3))
        .fold(0.0, f64::max);
    check(
        fig <= 1e-2 && cst <= 1e-3,
        format!("gamma pair max rel err {fig:.2e} on [0.2, 1]; constant call-put {cst:.2e}"),
    )
}

struct Probe<'a> {
    name: &'a str,
    payoff: Payoff,
    sigma: VolCurve,
    eta: VolCurve,
    ys: Vec<f64>,
}

fn properties() -> Outcome {
    let m = fig1_market();
    let g = GridSpec::default();
    let probes = vec![
        Probe {
            name: "callput step",
            payoff: Payoff::call_put(),
            sigma: VolCurve::logistic_step(0.2, 0.4, 1.0, 0.5).unwrap(),
            eta: VolCurve::logistic_step(0.3, 0.25, 2.0, 0.3).unwrap(),
            ys: log_space(0.01, 100.0, 80),
        },
        Probe {
            name: "gamma analytic",
            payoff: Payoff::power_gamma(0.75).unwrap(),
            sigma: VolCurve::ClosedForm(ClosedFormVol::GammaSigma(gamma_example())),
            eta: VolCurve::ClosedForm(ClosedFormVol::GammaEta(gamma_example())),
            ys: log_space(0.01, 100.0, 80),
        },
        Probe {
            name: "psi analytic",
            payoff: Payoff::power_pair(0.97, 4.0, 1.0).unwrap(),
            sigma: VolCurve::ClosedForm(ClosedFormVol::PsiPowerSigma(psi_example())),
            eta: VolCurve::ClosedForm(ClosedFormVol::PsiPowerEta(psi_example())),
            ys: log_space(0.01, 100.0, 80),
        },
        Probe {
            name: "power pair bumped",
            payoff: Payoff::power_pair(1.0, 2.0, 1.0).unwrap(),
            sigma: VolCurve::constant(0.3)
                .unwrap()
                .bumped(vec![Bump {
                    lo: 0.1,
                    hi: 10.0,
                    amplitude: 0.3,
                }])
                .unwrap(),
            eta: VolCurve::constant(0.25).unwrap(),
            ys: log_space(0.01, 100.0, 80),
        },
    ];
    let (mut riccati, mut fit) = (0.0_f64, 0.0_f64);
    let mut points = 0usize;
    for pr in &probes {
        let u: LogDerivCurve = tryf!(solve_log_derivative_f(&pr.sigma, &m, &g));
        let v: LogDerivCurve = tryf!(solve_log_derivative_g(&pr.eta, &m, &g));
        riccati = riccati.max(u.max_residual()).max(v.max_residual());
        for &y in &pr.ys {
            let x = tryf!(put_boundary_at(y, &pr.payoff, &u));
            let (lo, hi) = tryf!(boundary_brackets(
                &pr.payoff,
                BoundarySide::Put,
                pr.sigma.upper_bound(),
                &m,
                y
            ));
            if !(x >= lo && x < hi) {
                return Err(format!("{}: x*({y}) = {x} outside [{lo}, {hi})", pr.name));
            }
            fit = fit.max(tryf!(put_smooth_fit(&pr.payoff, &u, x, y)).abs() / hi);
            tryf!(put_boundary_slope(x, y, pr.sigma.eval(x), &pr.payoff, &m));

            let xc = x;
            let yc = tryf!(call_boundary_at(xc, &pr.payoff, &v));
            let (lo, hi) = tryf!(boundary_brackets(
                &pr.payoff,
                BoundarySide::Call,
                pr.eta.upper_bound(),
                &m,
                xc
            ));
            if !(yc > lo && yc <= hi) {
                return Err(format!("{}: y*({xc}) = {yc} outside ({lo}, {hi}]", pr.name));
            }
            fit = fit.max(tryf!(call_smooth_fit(&pr.payoff, &v, xc, yc)).abs() / hi);
            tryf!(call_boundary_slope(xc, yc, pr.eta.eval(yc), &pr.payoff, &m));
            points += 2;
        }
    }
    check(
        riccati <= 1e-8 && fit <= SMOOTH_FIT_TOL && fit <= 1e-8,
        format!(
            "Riccati residual {riccati:.2e}; smooth-fit residual {fit:.2e}; brackets and sign conditions hold at {points} points"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("exponents", exponents, Duration::from_secs(1)),
        (
            "constant-vol closed forms",
            constant_closed_forms,
            Duration::from_secs(5),
        ),
        ("analytic gamma pair", gamma_pair, Duration::from_secs(30)),
        (
            "finite-maturity convergence",
            figure_one,
            Duration::from_secs(120),
        ),
        ("duality round trips", round_trips, Duration::from_secs(60)),
        ("reciprocity", reciprocity, Duration::from_secs(60)),
        ("comparison principle", comparison, Duration::from_secs(60)),
        (
            "calibration round trip",
            calibration,
            Duration::from_secs(60),
        ),
        ("property suite", properties, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = run();
        let dt = t.elapsed();
        let over = dt > *budget;
        let (tag, msg) = match &out {
            Ok(m) if !over => ("PASS", m.clone()),
            Ok(m) => (
                "FAIL",
                format!("{m}; runtime {dt:.1?} over budget {budget:?}"),
            ),
            Err(m) => ("FAIL", m.clone()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag} criterion {} ({name}) [{dt:.2?}]: {msg}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

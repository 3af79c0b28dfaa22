//! Exponential-integral family and bracketed scalar root finding.
//!
//! `exp_integral_e1` covers both signs: for x > 0 it is the classical
//! E1(x) = int_x^inf e^-t / t dt, and for x < 0 the principal-value
//! continuation E1(x) = -Ei(-x).

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Largest |exponent argument| before e^x over/underflows in f64.
const EXP_LIMIT: f64 = 708.0;

/// E1 evaluated with an explicit saturation flag.
///
/// The flag is set when |x| is beyond the representable exponent range
/// and the returned value is a signed saturation (0 for large positive x,
/// -MAX for large negative x).
pub fn exp_integral_e1_checked(x: f64) -> Result<(f64, bool)> {
    if x == 0.0 {
        return Err(Error::Domain(
            "E1 has a logarithmic singularity at x = 0".into(),
        ));
    }
    if !x.is_finite() {
        return Err(Error::Domain(format!("E1 argument not finite: {x}")));
    }
    if x > EXP_LIMIT {
        return Ok((0.0, true));
    }
    if x < -EXP_LIMIT {
        return Ok((-f64::MAX, true));
    }
    let v = if x > 0.0 { e1_positive(x) } else { -ei_positive(-x) };
    Ok((v, false))
}

/// E1(x) for x != 0, saturation treated as an ordinary value.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    exp_integral_e1_checked(x).map(|(v, _)| v)
}

/// Ei(x) for x > 0 (used by the negative-argument continuation and tests).
pub fn exp_integral_ei(x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::Domain(format!("Ei continuation expects x > 0, got {x}")));
    }
    if x > EXP_LIMIT {
        return Ok(f64::MAX);
    }
    Ok(ei_positive(x))
}

fn e1_positive(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x <= 1.0 {
        // -gamma - ln x - sum (-x)^n / (n n!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for n in 1..=60 {
            term *= -x / n as f64;
            let contrib = term / n as f64;
            sum += contrib;
            if contrib.abs() < 1e-17 * (1.0 + sum.abs()) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        // Descending continued fraction (specfun-style), good to ~1e-15.
        let m = (80.0 / x) as usize + 25;
        let mut t0 = 0.0;
        for k in (1..=m).rev() {
            let kf = k as f64;
            t0 = kf / (1.0 + kf / (x + t0));
        }
        (-x).exp() / (x + t0)
    }
}

fn ei_positive(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x <= 45.0 {
        // gamma + ln x + sum x^n / (n n!): all terms positive, no cancellation.
        let mut sum = 0.0;
        let mut term = 1.0;
        for n in 1..=200 {
            term *= x / n as f64;
            let contrib = term / n as f64;
            sum += contrib;
            if contrib < 1e-17 * sum {
                break;
            }
        }
        EULER_GAMMA + x.ln() + sum
    } else {
        // Asymptotic: e^x/x * sum k!/x^k, truncated at the smallest term.
        let mut sum = 1.0;
        let mut term = 1.0;
        for k in 1..=(x as usize) {
            let next = term * k as f64 / x;
            if next >= term {
                break;
            }
            term = next;
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        x.exp() / x * sum
    }
}

/// A bracketed scalar root problem.
pub struct BracketedProblem<'a> {
    pub objective: &'a dyn Fn(f64) -> f64,
    pub lo: f64,
    pub hi: f64,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
}

impl<'a> BracketedProblem<'a> {
    pub fn new(objective: &'a dyn Fn(f64) -> f64, lo: f64, hi: f64) -> Self {
        BracketedProblem {
            objective,
            lo,
            hi,
            tol_abs: 1e-12,
            tol_rel: 1e-14,
            max_iter: 200,
        }
    }
}

/// Deterministic bracketed root search: bisection with secant acceleration,
/// falling back to pure bisection whenever the secant step fails to contract.
pub fn find_root(problem: &BracketedProblem<'_>) -> Result<f64> {
    let f = problem.objective;
    let (mut a, mut b) = (problem.lo, problem.hi);
    if !(a < b) {
        return Err(Error::Domain(format!("invalid bracket [{a}, {b}]")));
    }
    let mut fa = f(a);
    let mut fb = f(b);
    if !fa.is_finite() || !fb.is_finite() {
        return Err(Error::Numeric(format!(
            "objective not finite at bracket: f({a})={fa}, f({b})={fb}"
        )));
    }
    if fa.abs() <= problem.tol_abs {
        return Ok(a);
    }
    if fb.abs() <= problem.tol_abs {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoSignChange { lo: a, hi: b, flo: fa, fhi: fb });
    }

    let mut best = a;
    let mut best_res = fa.abs();
    for _ in 0..problem.max_iter {
        // Secant candidate from the current bracket endpoints.
        let mid = 0.5 * (a + b);
        let secant = b - fb * (b - a) / (fb - fa);
        let x = if secant.is_finite() && secant > a && secant < b {
            // Bias toward the midpoint when the secant barely moves.
            let min_step = 0.01 * (b - a);
            if (secant - a).min(b - secant) < min_step { mid } else { secant }
        } else {
            mid
        };
        let fx = f(x);
        if !fx.is_finite() {
            return Err(Error::Numeric(format!("objective not finite at {x}")));
        }
        if fx.abs() < best_res {
            best = x;
            best_res = fx.abs();
        }
        if fx.abs() <= problem.tol_abs {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        if (b - a) <= problem.tol_rel * x.abs() {
            return Ok(best);
        }
        // Width floor independent of tol_abs: stop once the bracket is at
        // floating-point resolution.
        if (b - a) <= 4.0 * f64::EPSILON * (a.abs().max(b.abs()) + 1e-300) {
            return Ok(best);
        }
    }
    Err(Error::Convergence {
        iters: problem.max_iter,
        best,
        residual: best_res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Independent oracle: adaptive Simpson quadrature of int_x^inf e^-t/t dt,
    // mapped to a finite interval via truncation at x + 60.
    fn e1_quadrature(x: f64) -> f64 {
        fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, eps: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * eps {
                left + right + delta / 15.0
            } else {
                simpson(f, a, m, fa, flm, fm, eps / 2.0, depth - 1)
                    + simpson(f, m, b, fm, frm, fb, eps / 2.0, depth - 1)
            }
        }
        let f = |t: f64| (-t).exp() / t;
        let b = x + 60.0;
        let m = 0.5 * (x + b);
        // E1(x) ~ e^-x/x, so the error budget must scale with e^-x.
        simpson(&f, x, b, f(x), f(m), f(b), 1e-15 * (-x).exp(), 40)
    }

    // Series oracle for Ei(x) = gamma + ln x + sum x^n/(n n!), small x.
    fn ei_series(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for n in 1..=120 {
            term *= x / n as f64;
            sum += term / n as f64;
        }
        EULER_GAMMA + x.ln() + sum
    }

    #[test]
    fn e1_at_one_matches_quadrature() {
        let v = exp_integral_e1(1.0).unwrap();
        assert_relative_eq!(v, 0.219_383_934_395_520, max_relative = 1e-12);
        assert_relative_eq!(v, e1_quadrature(1.0), max_relative = 1e-10);
    }

    #[test]
    fn e1_quadrature_agreement_on_grid() {
        for &x in &[0.05, 0.3, 0.7, 1.5, 3.0, 7.0, 15.0, 30.0] {
            let v = exp_integral_e1(x).unwrap();
            assert_relative_eq!(v, e1_quadrature(x), max_relative = 1e-10);
        }
    }

    #[test]
    fn e1_asymptotic_envelope() {
        // 0 < E1(x) < e^-x / x, and x e^x E1(x) -> 1.
        let x = 50.0;
        let v = exp_integral_e1(x).unwrap();
        assert!(v > 0.0 && v < (-x).exp() / x);
        assert!((v * x * x.exp() - 1.0).abs() < 1.0 / x);
    }

    #[test]
    fn e1_negative_is_minus_ei() {
        let v = exp_integral_e1(-1.0).unwrap();
        assert_relative_eq!(v, -1.895_117_816_355_937, max_relative = 1e-12);
        assert_relative_eq!(v, -ei_series(1.0), max_relative = 1e-13);
        for &x in &[0.1, 0.5, 2.0, 10.0, 35.0] {
            let continuation = exp_integral_e1(-x).unwrap();
            assert_relative_eq!(continuation, -exp_integral_ei(x).unwrap(), max_relative = 1e-14);
        }
    }

    #[test]
    fn e1_zero_is_domain_error() {
        assert!(matches!(exp_integral_e1(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn e1_saturates_with_flag() {
        let (v, sat) = exp_integral_e1_checked(800.0).unwrap();
        assert!(sat);
        assert_eq!(v, 0.0);
        let (v, sat) = exp_integral_e1_checked(-800.0).unwrap();
        assert!(sat);
        assert!(v < 0.0);
    }

    #[test]
    fn e1_derivative_recurrence() {
        // d/dx E1(x) = -e^-x / x, central differences on a log grid.
        let mut x: f64 = 1e-3;
        while x <= 50.0 {
            let h = 1e-5 * x.max(1e-2);
            let d = (exp_integral_e1(x + h).unwrap() - exp_integral_e1(x - h).unwrap()) / (2.0 * h);
            let exact = -(-x).exp() / x;
            assert!(
                ((d - exact) / exact).abs() < 1e-6,
                "derivative mismatch at x={x}: {d} vs {exact}"
            );
            x *= 3.0;
        }
    }

    #[test]
    fn find_root_sqrt2() {
        let f = |t: f64| t * t - 2.0;
        let p = BracketedProblem::new(&f, 0.0, 2.0);
        let r = find_root(&p).unwrap();
        assert_relative_eq!(r, std::f64::consts::SQRT_2, max_relative = 1e-10);
    }

    #[test]
    fn find_root_identity() {
        let f = |t: f64| t;
        let p = BracketedProblem::new(&f, -1.0, 1.0);
        let r = find_root(&p).unwrap();
        assert!(r.abs() < 1e-10);
    }

    #[test]
    fn find_root_e1_equation() {
        // E1(r) = 2 ln 2 has a root in [0.05, 0.5].
        let target = 2.0 * std::f64::consts::LN_2;
        let f = move |t: f64| exp_integral_e1(t).unwrap() - target;
        let p = BracketedProblem::new(&f, 0.05, 0.5);
        let r = find_root(&p).unwrap();
        assert!((exp_integral_e1(r).unwrap() - target).abs() < 1e-12);
    }

    #[test]
    fn find_root_no_sign_change() {
        let f = |t: f64| t * t + 1.0;
        let p = BracketedProblem::new(&f, -1.0, 1.0);
        assert!(matches!(find_root(&p), Err(Error::NoSignChange { .. })));
    }

    #[test]
    fn find_root_idempotent_under_refinement() {
        let f = |t: f64| t * t - 2.0;
        let p = BracketedProblem::new(&f, 0.0, 2.0);
        let r = find_root(&p).unwrap();
        let delta = 1e-3;
        let refined = BracketedProblem::new(&f, r - delta, r + delta);
        let r2 = find_root(&refined).unwrap();
        assert!((r - r2).abs() < 1e-9);
    }
}

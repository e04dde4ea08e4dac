use crate::error::{Error, Result};

/// Iteration cap for [`newton_root`].
pub const MAX_NEWTON_ITER: usize = 100;

/// Safeguarded Newton iteration on a sign-changing bracket.
///
/// Newton steps that leave the current bracket (or hit a zero derivative)
/// are replaced by bisection, so every iterate stays inside the bracket.
/// Returns once `|f(x)| <= tol`, or when the bracket has shrunk to adjacent
/// floating-point numbers.
pub fn newton_root<F, D>(f: F, df: D, x0: f64, tol: f64, bracket: (f64, f64)) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo.abs() <= tol {
        return Ok(lo);
    }
    if f_hi.abs() <= tol {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::NoRootBracketed { lo, hi });
    }
    let lo_negative = f_lo < 0.0;

    let mut x = if x0 > lo && x0 < hi { x0 } else { 0.5 * (lo + hi) };
    for _ in 0..MAX_NEWTON_ITER {
        let fx = f(x);
        if fx.abs() <= tol {
            return Ok(x);
        }
        if (fx < 0.0) == lo_negative {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        let slope = df(x);
        let step = x - fx / slope;
        x = if slope.is_finite() && slope != 0.0 && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NoConvergence { iterations: MAX_NEWTON_ITER })
}

/// Plain bisection, kept as an independent reference for the Newton solver.
pub fn bisect<F: Fn(f64) -> f64>(f: F, bracket: (f64, f64), iterations: usize) -> Result<f64> {
    let (mut lo, mut hi) = bracket;
    let f_lo = f(lo);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_lo.signum() == f(hi).signum() {
        return Err(Error::NoRootBracketed { lo, hi });
    }
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_root_of_four() {
        let r = newton_root(|x| x * x - 4.0, |x| 2.0 * x, 1.0, 1e-14, (0.0, 3.0)).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn root_at_endpoint_is_returned() {
        let r = newton_root(|x| x - 3.0, |_| 1.0, 1.0, 1e-14, (0.0, 3.0)).unwrap();
        assert_eq!(r, 3.0);
        let r = newton_root(|x| x, |_| 1.0, 1.0, 0.0, (0.0, 3.0)).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn missing_sign_change_is_reported() {
        let e = newton_root(|x| x * x + 1.0, |x| 2.0 * x, 1.0, 1e-12, (0.0, 3.0));
        assert!(matches!(e, Err(Error::NoRootBracketed { .. })));
    }

    #[test]
    fn flat_derivative_falls_back_to_bisection() {
        // derivative reported as zero everywhere: pure bisection must still converge
        let r = newton_root(|x| x.powi(3) - 0.5, |_| 0.0, 0.2, 1e-13, (0.0, 1.0)).unwrap();
        assert!((r - 0.5f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn harvesting_equation_matches_bisection() {
        // one EHU with Σh = 0.05 at the default constants
        let c1 = 0.75 * 0.53 * 10.0 * 0.025 * 0.05;
        let c2 = 0.53 * 10.0 * 0.05 / 1e-10;
        let e_th = 1e-6;
        let f = |b: f64| b * c1 * (c2 * b).ln_1p() - e_th;
        let df = |b: f64| c1 * (c2 * b).ln_1p() + b * c1 * c2 / (1.0 + c2 * b);
        let r = newton_root(f, df, 0.012, 1e-20, (0.0, 0.024)).unwrap();
        let reference = bisect(f, (0.0, 0.024), 200).unwrap();
        assert!((r - reference).abs() <= 1e-12 * reference);
        assert!((r / 1.8623345668528883e-05 - 1.0).abs() < 1e-10);
    }
}

//! Adaptive Simpson quadrature.

use crate::scalar::Scalar;

/// `int_a^b f` to absolute tolerance `tol` (recursion capped at depth 50).
pub fn adaptive_simpson<T: Scalar>(f: &impl Fn(T) -> T, a: T, b: T, tol: T) -> T {
    let fa = f(a);
    let fb = f(b);
    let m = (a + b) * T::half();
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    refine(f, a, b, fa, fm, fb, whole, tol, 50)
}

fn simpson<T: Scalar>(a: T, b: T, fa: T, fm: T, fb: T) -> T {
    (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn refine<T: Scalar>(f: &impl Fn(T) -> T, a: T, b: T, fa: T, fm: T, fb: T, whole: T, tol: T, depth: u32) -> T {
    let m = (a + b) * T::half();
    let (lm, rm) = ((a + m) * T::half(), (m + b) * T::half());
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    // stop once the correction is at rounding level
    let floor = T::epsilon() * T::lit(64.0) * (left.abs() + right.abs());
    if depth == 0 || delta.abs() <= (T::lit(15.0) * tol).max(floor) {
        return left + right + delta / T::lit(15.0);
    }
    refine(f, a, m, fa, flm, fm, left, tol * T::half(), depth - 1)
        + refine(f, m, b, fm, frm, fb, right, tol * T::half(), depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_integrals() {
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-11);
        let v = adaptive_simpson(&|x: f64| 1.0 / (1.0 - x), 0.0, 0.9, 1e-12);
        assert!((v + 0.1f64.ln()).abs() < 1e-10);
    }
}

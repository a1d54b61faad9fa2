//! Small numerical kernels shared by the analytic and numeric paths.

use std::sync::OnceLock;

/// `(e^t - 1) / t`, continuous at zero.
pub fn exprel(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        1.0 + 0.5 * t
    } else {
        t.exp_m1() / t
    }
}

/// `(e^t - 1 - t) / t^2`, continuous at zero.
pub fn exprel2(t: f64) -> f64 {
    if t.abs() < 1e-3 {
        0.5 + t / 6.0 + t * t / 24.0 + t * t * t / 120.0
    } else {
        (t.exp_m1() - t) / (t * t)
    }
}

/// `∫_0^len e^{a (len - s) + c s} ds`, evaluated without overflow of the smaller exponent.
pub fn exp_convolution(a: f64, c: f64, len: f64) -> f64 {
    if len <= 0.0 {
        return 0.0;
    }
    let hi = a.max(c);
    len * (hi * len).exp() * exprel(-(a - c).abs() * len)
}

/// Real roots of `a x^2 + b x + c = 0` in descending order, computed without cancellation.
pub fn quadratic_roots(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 || a == 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let t = -0.5 * (b + b.signum() * s);
    let (r1, r2) = if t == 0.0 { (0.0, 0.0) } else { (t / a, c / t) };
    Some(if r1 >= r2 { (r1, r2) } else { (r2, r1) })
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

pub(crate) fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

pub(crate) fn gl64() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(64))
}

/// Composite Gauss–Legendre quadrature of `f` over `[a, b]` with `panels` equal panels.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    panels: usize,
    rule: &(Vec<f64>, Vec<f64>),
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let mut s = 0.0;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            s += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * s;
    }
    total
}

/// Newton iteration safeguarded by bisection on a sign-changing bracket `[lo, hi]`.
///
/// `f` returns the value and derivative. Stops when the bracket (or Newton step)
/// is below `tol * max(1, |x|)`.
pub fn newton_bisect<F: FnMut(f64) -> (f64, f64)>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Option<f64> {
    let (flo, _) = f(lo);
    let (fhi, _) = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    let increasing = fhi > 0.0;
    let mut x = hi;
    for _ in 0..400 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Some(x);
        }
        if (fx > 0.0) == increasing {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx.is_finite() && dfx != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let scale = tol * next.abs().max(1.0);
        if (next - x).abs() <= scale || (hi - lo) <= scale {
            return Some(next);
        }
        x = next;
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exprel_is_continuous_at_zero() {
        assert!((exprel(1e-9) - 1.0).abs() < 1e-9);
        assert!((exprel(1.0) - (1f64.exp() - 1.0)).abs() < 1e-15);
        assert!((exprel2(1e-4) - exprel2(-1e-4)).abs() < 1e-4);
        assert!((exprel2(2.0) - (2f64.exp() - 3.0) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn convolution_matches_direct_formula() {
        let (a, c, l): (f64, f64, f64) = (0.7, -1.3, 2.5);
        let direct = ((c * l).exp() - (a * l).exp()) / (c - a);
        assert!((exp_convolution(a, c, l) - direct).abs() < 1e-14);
        // resonant case
        assert!((exp_convolution(0.4, 0.4, 2.0) - 2.0 * 0.8f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn quadrature_integrates_polynomials_exactly() {
        let rule = gl16();
        let v = integrate(|x| x.powi(7) - 3.0 * x * x, 0.0, 2.0, 1, rule);
        assert!((v - (256.0 / 8.0 - 8.0)).abs() < 1e-12);
        let s: f64 = gl64().1.iter().sum();
        assert!((s - 2.0).abs() < 1e-13);
    }

    #[test]
    fn quadratic_roots_are_stable() {
        let (r1, r2) = quadratic_roots(1.0, 1.0, -2.0).unwrap();
        assert_eq!((r1, r2), (1.0, -2.0));
        let (big, small) = quadratic_roots(1.0, -1e8, 1.0).unwrap();
        assert!((big - 1e8).abs() < 1e-6);
        assert!((small - 1e-8).abs() < 1e-22);
    }

    #[test]
    fn newton_bisect_finds_cubic_root() {
        let root = newton_bisect(|x| (x * x * x - 2.0, 3.0 * x * x), 0.0, 4.0, 1e-14).unwrap();
        assert!((root - 2f64.cbrt()).abs() < 1e-13);
        assert!(newton_bisect(|x| (x * x + 1.0, 2.0 * x), -1.0, 1.0, 1e-12).is_none());
    }
}

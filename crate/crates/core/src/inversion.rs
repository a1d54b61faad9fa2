//! Euler-summation inversion of Laplace transforms.

use num_complex::Complex64;

/// Inverts `transform` at `t > 0` with the Euler algorithm using `2m + 1` terms.
pub fn euler_invert<F: Fn(Complex64) -> Complex64>(transform: &F, t: f64, m: usize) -> f64 {
    let mf = m as f64;
    let a = mf * std::f64::consts::LN_10 / 3.0;
    let scale = 10f64.powf(mf / 3.0);
    // eta_k: 1/2 at k = 0, 1 up to m, then binomial tail weights
    let mut eta = vec![1.0; 2 * m + 1];
    eta[0] = 0.5;
    eta[2 * m] = 0.5f64.powi(m as i32);
    let mut binom = 1.0;
    for k in 1..m {
        binom *= (m - k + 1) as f64 / k as f64;
        eta[2 * m - k] = eta[2 * m - k + 1] + 0.5f64.powi(m as i32) * binom;
    }
    let mut total = 0.0;
    for (k, e) in eta.iter().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let s = Complex64::new(a, std::f64::consts::PI * k as f64) / t;
        total += sign * e * transform(s).re;
    }
    scale * total / t
}

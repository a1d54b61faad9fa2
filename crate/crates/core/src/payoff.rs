//! Piecewise-linear payoffs with a linear tail.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::exprel;

/// Tolerance below which slope increases are treated as rounding noise.
pub const CONCAVITY_TOL: f64 = 1e-10;

/// A continuous function on `[0, ∞)`, linear between `knots` and with slope
/// `tail_slope` beyond the last knot.
///
/// The type itself accepts any shape; [`PayoffFunction::check_admissible`]
/// tests the concavity and slope conditions needed by the threshold optimizer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PayoffFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    tail_slope: f64,
}

impl PayoffFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, tail_slope: f64) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::Domain(format!(
                "payoff needs matching nonempty knots and values ({} vs {})",
                knots.len(),
                values.len()
            )));
        }
        if knots[0] != 0.0 {
            return Err(Error::Domain(format!(
                "first payoff knot must be 0, got {}",
                knots[0]
            )));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(
                "payoff knots must be strictly increasing".into(),
            ));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) || !tail_slope.is_finite() {
            return Err(Error::Domain(
                "payoff knots, values and tail slope must be finite".into(),
            ));
        }
        let slopes = knots
            .windows(2)
            .zip(values.windows(2))
            .map(|(x, v)| (v[1] - v[0]) / (x[1] - x[0]))
            .collect();
        Ok(PayoffFunction {
            knots,
            values,
            slopes,
            tail_slope,
        })
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        PayoffFunction {
            knots: vec![0.0],
            values: vec![c],
            slopes: Vec::new(),
            tail_slope: 0.0,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Slopes between consecutive knots.
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    pub fn x_max(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    fn piece(&self, x: f64) -> usize {
        self.knots.partition_point(|&k| k <= x).saturating_sub(1)
    }

    /// `w(x)`; arguments below zero are clamped to zero.
    pub fn value(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        let n = self.knots.len();
        let k = self.piece(x);
        if k + 1 >= n {
            self.values[n - 1] + self.tail_slope * (x - self.knots[n - 1])
        } else {
            self.values[k] + self.slopes[k] * (x - self.knots[k])
        }
    }

    /// Right derivative `w'_+(x)`.
    pub fn right_derivative(&self, x: f64) -> f64 {
        let k = self.piece(x.max(0.0));
        if k < self.slopes.len() {
            self.slopes[k]
        } else {
            self.tail_slope
        }
    }

    /// Slope at `0+`.
    pub fn initial_slope(&self) -> f64 {
        self.slopes.first().copied().unwrap_or(self.tail_slope)
    }

    /// Largest increase between consecutive slopes (tail included); zero for concave payoffs.
    pub fn concavity_violation(&self) -> f64 {
        self.slopes
            .iter()
            .chain(std::iter::once(&self.tail_slope))
            .collect::<Vec<_>>()
            .windows(2)
            .map(|w| (w[1] - w[0]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Concave, `w'(0+) <= β`, nonnegative slopes and `w'(∞) <= 1`.
    pub fn check_admissible(&self, beta: f64) -> Result<()> {
        let scale = 1.0 + beta;
        let violation = self.concavity_violation();
        if violation > CONCAVITY_TOL * scale {
            return Err(Error::assumption(
                "concave_payoff",
                format!("payoff slopes increase by up to {violation:e}"),
            ));
        }
        let s0 = self.initial_slope();
        if s0 > beta + CONCAVITY_TOL * scale {
            return Err(Error::assumption(
                "payoff_initial_slope",
                format!("payoff slope at 0+ is {s0}, above beta = {beta}"),
            ));
        }
        let min_slope = self.slopes.iter().copied().fold(self.tail_slope, f64::min);
        if min_slope < -CONCAVITY_TOL * scale {
            return Err(Error::assumption(
                "payoff_nondecreasing",
                format!("payoff has negative slope {min_slope}"),
            ));
        }
        if self.tail_slope > 1.0 + CONCAVITY_TOL * scale {
            return Err(Error::assumption(
                "payoff_tail_slope",
                format!("payoff tail slope {} exceeds 1", self.tail_slope),
            ));
        }
        Ok(())
    }

    /// Least concave majorant on the same knots.
    pub fn concave_majorant(&self) -> PayoffFunction {
        let n = self.knots.len();
        // Beyond the knot maximizing v_k - tail * x_k the majorant is the tail ray.
        let mut support = 0;
        let mut best = f64::NEG_INFINITY;
        for k in 0..n {
            let s = self.values[k] - self.tail_slope * self.knots[k];
            if s >= best - 1e-15 * s.abs().max(1.0) {
                best = s;
                support = k;
            }
        }
        let mut hull: Vec<usize> = Vec::with_capacity(support + 1);
        for k in 0..=support {
            while hull.len() >= 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                let cross = (self.knots[b] - self.knots[a]) * (self.values[k] - self.values[a])
                    - (self.values[b] - self.values[a]) * (self.knots[k] - self.knots[a]);
                if cross >= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(k);
        }
        let mut values = self.values.clone();
        for w in hull.windows(2) {
            let (a, b) = (w[0], w[1]);
            let s = (self.values[b] - self.values[a]) / (self.knots[b] - self.knots[a]);
            for k in a + 1..b {
                values[k] = self.values[a] + s * (self.knots[k] - self.knots[a]);
            }
        }
        for k in support + 1..n {
            values[k] =
                self.values[support] + self.tail_slope * (self.knots[k] - self.knots[support]);
        }
        PayoffFunction::new(self.knots.clone(), values, self.tail_slope)
            .expect("majorant keeps the knot grid")
    }

    /// Clamps every slope (tail included) into `[lo, hi]`, keeping `w(0)`.
    pub fn clip_slopes(&self, lo: f64, hi: f64, tail_hi: f64) -> PayoffFunction {
        let mut values = Vec::with_capacity(self.values.len());
        values.push(self.values[0]);
        for (k, s) in self.slopes.iter().enumerate() {
            let s = s.clamp(lo, hi);
            let last = values[k];
            values.push(last + s * (self.knots[k + 1] - self.knots[k]));
        }
        PayoffFunction::new(
            self.knots.clone(),
            values,
            self.tail_slope.clamp(lo, tail_hi),
        )
        .expect("clipping keeps the knot grid")
    }

    /// `∫_lo^hi w'_+(z) e^{rate (anchor - z)} dz`.
    ///
    /// `hi` may be infinite when `rate > 0`; with `rate == 0` this is `w(hi) - w(lo)`.
    pub fn exp_moment(&self, rate: f64, anchor: f64, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(0.0);
        if !(hi > lo) {
            return 0.0;
        }
        let n = self.knots.len();
        let mut k = self.piece(lo);
        let mut total = 0.0;
        loop {
            let (a, b, s) = if k + 1 < n {
                (self.knots[k], self.knots[k + 1], self.slopes[k])
            } else {
                (self.knots[n - 1], f64::INFINITY, self.tail_slope)
            };
            let (a, b) = (a.max(lo), b.min(hi));
            if b > a && s != 0.0 {
                if b.is_infinite() {
                    debug_assert!(
                        rate > 0.0,
                        "infinite exponential moment needs a decaying rate"
                    );
                    total += s * (rate * (anchor - a)).exp() / rate;
                } else {
                    let len = b - a;
                    total += s * len * (rate * (anchor - a)).exp() * exprel(-rate * len);
                }
            }
            if b >= hi || k + 1 >= n {
                break;
            }
            k += 1;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gl64, integrate};

    fn sample() -> PayoffFunction {
        PayoffFunction::new(vec![0.0, 0.5, 1.5, 3.0], vec![0.2, 0.8, 1.3, 1.5], 0.05).unwrap()
    }

    #[test]
    fn evaluation_and_slopes() {
        let w = sample();
        assert!((w.value(0.25) - 0.5).abs() < 1e-15);
        assert!((w.value(4.0) - 1.55).abs() < 1e-15);
        assert_eq!(w.value(-1.0), 0.2);
        assert!((w.right_derivative(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(w.right_derivative(10.0), 0.05);
        assert_eq!(w.concavity_violation(), 0.0);
        assert!(w.check_admissible(1.5).is_ok());
        assert!(w.check_admissible(1.1).is_err());
    }

    #[test]
    fn exp_moment_matches_quadrature() {
        let w = sample();
        for &(rate, anchor, lo, hi) in &[
            (0.7, 2.0, 0.0, 1.0),
            (-1.3, 0.4, 0.2, 2.7),
            (0.0, 0.0, 0.3, 5.0),
            (2.0, 1.0, 1.0, 8.0),
        ] {
            let mut q = 0.0;
            let mut pts = vec![lo];
            pts.extend(w.knots().iter().copied().filter(|&k| k > lo && k < hi));
            pts.push(hi);
            for p in pts.windows(2) {
                q += integrate(
                    |z| w.right_derivative(z) * (rate * (anchor - z)).exp(),
                    p[0],
                    p[1],
                    4,
                    gl64(),
                );
            }
            let e = w.exp_moment(rate, anchor, lo, hi);
            assert!((e - q).abs() < 1e-13 * q.abs().max(1.0), "{e} vs {q}");
        }
        assert!((w.exp_moment(0.0, 0.0, 0.3, 5.0) - (w.value(5.0) - w.value(0.3))).abs() < 1e-14);
        let inf = w.exp_moment(1.0, 0.0, 0.0, f64::INFINITY);
        let finite = w.exp_moment(1.0, 0.0, 0.0, 60.0);
        assert!((inf - finite).abs() < 1e-15);
    }

    #[test]
    fn majorant_of_concave_is_identity_and_fixes_dents() {
        let w = sample();
        assert_eq!(w.concave_majorant(), w);
        let dented =
            PayoffFunction::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 0.5, 1.6, 2.0], 0.2).unwrap();
        let m = dented.concave_majorant();
        assert_eq!(m.concavity_violation(), 0.0);
        for (a, b) in m.values().iter().zip(dented.values()) {
            assert!(a >= b);
        }
        assert!((m.value(1.0) - 0.8).abs() < 1e-15);

        let steep_tail = PayoffFunction::new(vec![0.0, 1.0], vec![0.0, 0.1], 0.5).unwrap();
        let m = steep_tail.concave_majorant();
        assert!((m.value(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clipping_bounds_slopes() {
        let w = PayoffFunction::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 2.5], 1.5).unwrap();
        let c = w.clip_slopes(0.0, 1.5, 1.0);
        assert_eq!(c.slopes(), &[1.5, 0.5]);
        assert_eq!(c.tail_slope(), 1.0);
        assert_eq!(c.value(0.0), 0.0);
    }
}

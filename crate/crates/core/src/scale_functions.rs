//! Scale functions of a spectrally negative Lévy process `X` and of its
//! refracted version `Y = X - δt`, with their integrals and convolutions.
//!
//! The two closed-form families give exponential sums `W(x) = Σ A_k e^{ρ_k x}`
//! where `ρ_k` are the real roots of `ψ(θ) = q`. General densities fall back to
//! Euler inversion of the (shifted) Laplace transform.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inversion::euler_invert;
use crate::levy_model::{right_inverse, LevyFamily, LevyModel, Process};
use crate::numerics::{exp_convolution, exprel, exprel2, gl16, gl64, integrate, quadratic_roots};

/// `Σ coef_k e^{rate_k x}` on `x >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpSum {
    pub(crate) terms: Vec<(f64, f64)>,
}

impl ExpSum {
    pub fn terms(&self) -> &[(f64, f64)] {
        &self.terms
    }

    pub fn value(&self, x: f64) -> f64 {
        self.terms.iter().map(|&(a, r)| a * (r * x).exp()).sum()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.terms.iter().map(|&(a, r)| a * r * (r * x).exp()).sum()
    }

    /// `∫_0^x`.
    pub fn integral(&self, x: f64) -> f64 {
        self.terms.iter().map(|&(a, r)| a * x * exprel(r * x)).sum()
    }

    /// `∫_0^x ∫_0^y`.
    pub fn double_integral(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, r)| a * x * x * exprel2(r * x))
            .sum()
    }

    /// Value at `0+`.
    pub fn at_zero(&self) -> f64 {
        self.terms.iter().map(|t| t.0).sum()
    }

    /// `Σ coef_k conv(rate_k, rho, len)`: the convolution of this sum with `e^{rho s}` over `[0, len]`.
    pub fn convolve_exp(&self, rho: f64, len: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(b, tau)| b * exp_convolution(tau, rho, len))
            .sum()
    }
}

/// Which integrand is convolved against the refracted scale function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConvolutionMode {
    W,
    WPrime,
    Z,
}

/// Which function is integrated against `e^{-φ y}` in [`ScaleFunctionSet::exp_tail_integral`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailMode {
    W,
    WPrime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Representation {
    ExponentialSum,
    NumericInversion,
}

#[derive(Debug, Clone)]
enum Repr {
    Sums { x: ExpSum, y: ExpSum },
    Numeric,
}

/// Scale functions of `X` and `Y = X - δt` at a fixed discount rate `q`.
#[derive(Debug, Clone)]
pub struct ScaleFunctionSet {
    model: LevyModel,
    delta: f64,
    q: f64,
    phi_x: f64,
    phi_y: f64,
    repr: Repr,
}

/// Euler terms used by the numeric path and by its error estimate.
const EULER_TERMS: usize = 15;
const EULER_CHECK_TERMS: usize = 11;

impl ScaleFunctionSet {
    /// Closed form for the Brownian and Cramér–Lundberg families, numeric inversion otherwise.
    pub fn build(model: &LevyModel, delta: f64, q: f64) -> Result<Self> {
        let phi_x = right_inverse(model, delta, q, Process::X)?;
        let phi_y = right_inverse(model, delta, q, Process::Y)?;
        let repr = match model.family() {
            LevyFamily::BrownianDrift | LevyFamily::CramerLundbergExp => Repr::Sums {
                x: exp_sum(model, 0.0, q)?,
                y: exp_sum(model, delta, q)?,
            },
            LevyFamily::GeneralNumeric => Repr::Numeric,
        };
        Ok(ScaleFunctionSet {
            model: model.clone(),
            delta,
            q,
            phi_x,
            phi_y,
            repr,
        })
    }

    /// Forces the numeric-inversion path, whatever the family.
    pub fn build_numeric(model: &LevyModel, delta: f64, q: f64) -> Result<Self> {
        let mut set = Self::build(model, delta, q)?;
        set.repr = Repr::Numeric;
        Ok(set)
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `Φ(q)` for `X`, `φ(q)` for `Y`.
    pub fn phi(&self, which: Process) -> f64 {
        match which {
            Process::X => self.phi_x,
            Process::Y => self.phi_y,
        }
    }

    pub fn representation(&self) -> Representation {
        match self.repr {
            Repr::Sums { .. } => Representation::ExponentialSum,
            Repr::Numeric => Representation::NumericInversion,
        }
    }

    /// Exponential-sum coefficients `(A_k, ρ_k)`, when available.
    pub fn exp_sum(&self, which: Process) -> Option<&ExpSum> {
        match &self.repr {
            Repr::Sums { x, y } => Some(match which {
                Process::X => x,
                Process::Y => y,
            }),
            Repr::Numeric => None,
        }
    }

    /// Copy with one exponential-sum coefficient scaled by `1 + rel`; used to exercise the self-check.
    pub fn perturbed(&self, which: Process, index: usize, rel: f64) -> Self {
        let mut out = self.clone();
        if let Repr::Sums { x, y } = &mut out.repr {
            let sum = match which {
                Process::X => x,
                Process::Y => y,
            };
            if let Some(t) = sum.terms.get_mut(index) {
                t.0 *= 1.0 + rel;
            }
        }
        out
    }

    fn drift_cut(&self, which: Process) -> f64 {
        match which {
            Process::X => 0.0,
            Process::Y => self.delta,
        }
    }

    /// `W(0+)` (`1/c` or `1/(c-δ)` for bounded variation, 0 otherwise).
    pub fn w_at_zero(&self, which: Process) -> f64 {
        match &self.repr {
            Repr::Sums { .. } => self.exp_sum(which).unwrap().at_zero(),
            Repr::Numeric => self.model.scale_at_zero(self.drift_cut(which)),
        }
    }

    /// `W^{(q)}(x)` or `𝕎^{(q)}(x)`; zero for `x < 0`, right limit at `x = 0`.
    pub fn w(&self, which: Process, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(0.0);
        }
        if x == 0.0 {
            return Ok(self.w_at_zero(which));
        }
        match &self.repr {
            Repr::Sums { .. } => Ok(self.exp_sum(which).unwrap().value(x)),
            Repr::Numeric => self.invert(which, x, 0),
        }
    }

    /// Derivative for `x > 0`.
    pub fn w_prime(&self, which: Process, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!(
                "scale-function derivative needs x > 0, got {x}"
            )));
        }
        match &self.repr {
            Repr::Sums { .. } => Ok(self.exp_sum(which).unwrap().derivative(x)),
            Repr::Numeric => {
                let shifted = self.invert_shifted(which, x, Kernel::Derivative)?;
                let w = self.invert(which, x, 0)?;
                Ok(self.phi(which) * w + (self.phi(which) * x).exp() * shifted)
            }
        }
    }

    /// `W̄(x) = ∫_0^x W`; zero for `x <= 0`.
    pub fn wbar(&self, which: Process, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        match &self.repr {
            Repr::Sums { .. } => Ok(self.exp_sum(which).unwrap().integral(x)),
            Repr::Numeric => self.invert(which, x, 1),
        }
    }

    /// `Z(x) = 1 + q W̄(x)`.
    pub fn z(&self, which: Process, x: f64) -> Result<f64> {
        Ok(1.0 + self.q * self.wbar(which, x)?)
    }

    /// `Z̄(x) = ∫_0^x Z`, equal to `x` for `x <= 0`.
    pub fn zbar(&self, which: Process, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(x);
        }
        let wbb = match &self.repr {
            Repr::Sums { .. } => self.exp_sum(which).unwrap().double_integral(x),
            Repr::Numeric => self.invert(which, x, 2)?,
        };
        Ok(x + self.q * wbb)
    }

    /// `∫_0^∞ e^{-φ(q) y} W(y + b) dy` (or with `W'`), `φ` the refracted right inverse.
    pub fn exp_tail_integral(&self, b: f64, mode: TailMode) -> Result<f64> {
        let phi = self.phi_y;
        if !(phi > self.phi_x) {
            return Err(Error::Numerical(format!(
                "tail integral diverges: phi = {phi} does not exceed Phi = {}",
                self.phi_x
            )));
        }
        let b = b.max(0.0);
        match &self.repr {
            Repr::Sums { x, .. } => Ok(x
                .terms
                .iter()
                .map(|&(a, r)| {
                    let weight = match mode {
                        TailMode::W => a,
                        TailMode::WPrime => a * r,
                    };
                    weight * (r * b).exp() / (phi - r)
                })
                .sum()),
            Repr::Numeric => {
                let y_max = 30.0 / (phi - self.phi_x);
                let mut err = None;
                let mut f = |y: f64| {
                    let v = match mode {
                        TailMode::W => self.w(Process::X, y + b),
                        TailMode::WPrime => self.w_prime(Process::X, y + b),
                    };
                    match v {
                        Ok(v) => (-phi * y).exp() * v,
                        Err(e) => {
                            err.get_or_insert(e);
                            0.0
                        }
                    }
                };
                let total = graded_integral(&mut f, y_max, gl16());
                match err {
                    Some(e) => Err(e),
                    None => Ok(total),
                }
            }
        }
    }

    /// `∫_b^x 𝕎(x - y) K(y) dy` for `K ∈ {W, W', Z}` of `X`; zero when `x <= b`.
    pub fn refracted_convolution(&self, x: f64, b: f64, mode: ConvolutionMode) -> Result<f64> {
        if x <= b {
            return Ok(0.0);
        }
        match &self.repr {
            Repr::Sums { x: wx, y: wy } => {
                let len = x - b;
                let mut total = 0.0;
                for &(a, r) in &wx.terms {
                    let weight = match mode {
                        ConvolutionMode::W => a,
                        ConvolutionMode::WPrime => a * r,
                        ConvolutionMode::Z => self.q * a / r,
                    };
                    total += weight * (r * b).exp() * wy.convolve_exp(r, len);
                }
                if mode == ConvolutionMode::Z {
                    // constant part of Z, analytically 1 - q Σ A_k/ρ_k = 0
                    let z0 = 1.0 - self.q * wx.terms.iter().map(|&(a, r)| a / r).sum::<f64>();
                    total += z0 * wy.convolve_exp(0.0, len);
                }
                Ok(total)
            }
            Repr::Numeric => {
                let mut err = None;
                let total = integrate(
                    |y| {
                        let v = (|| -> Result<f64> {
                            let k = match mode {
                                ConvolutionMode::W => self.w(Process::X, y)?,
                                ConvolutionMode::WPrime => {
                                    if y > 0.0 {
                                        self.w_prime(Process::X, y)?
                                    } else {
                                        0.0
                                    }
                                }
                                ConvolutionMode::Z => self.z(Process::X, y)?,
                            };
                            Ok(self.w(Process::Y, x - y)? * k)
                        })();
                        v.unwrap_or_else(|e| {
                            err.get_or_insert(e);
                            0.0
                        })
                    },
                    b,
                    x,
                    4,
                    gl64(),
                );
                match err {
                    Some(e) => Err(e),
                    None => Ok(total),
                }
            }
        }
    }

    /// Laplace-transform residuals, the two convolution identities and boundary values.
    pub fn self_check(&self, grid: &[f64]) -> Result<SelfCheckReport> {
        let mut laplace = Vec::new();
        for which in [Process::X, Process::Y] {
            let growth = self.phi(which);
            for shift in [1.0, 2.0] {
                let theta = self.phi_y + shift;
                let t_max = 40.0 / (theta - growth);
                let mut err = None;
                let mut f = |x: f64| match self.w(which, x) {
                    Ok(v) => (-theta * x).exp() * v,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                };
                let rule = if self.representation() == Representation::ExponentialSum {
                    gl64()
                } else {
                    gl16()
                };
                let numeric = graded_integral(&mut f, t_max, rule);
                if let Some(e) = err {
                    return Err(e);
                }
                let psi = self.model.psi_complex(Complex64::new(theta, 0.0)).re
                    - self.drift_cut(which) * theta;
                let exact = 1.0 / (psi - self.q);
                laplace.push(LaplaceResidual {
                    process: which,
                    theta,
                    truncation: t_max,
                    residual: (numeric - exact).abs(),
                });
            }
        }

        let w0 = self.w_at_zero(Process::X);
        let mut wbar_identity: f64 = 0.0;
        let mut wprime_identity: f64 = 0.0;
        for &x in grid.iter().filter(|&&x| x > 0.0) {
            let conv = self.refracted_convolution(x, 0.0, ConvolutionMode::W)?;
            let lhs = self.delta * conv;
            let rhs = self.wbar(Process::Y, x)? - self.wbar(Process::X, x)?;
            wbar_identity = wbar_identity.max((lhs - rhs).abs());

            let conv_p = self.refracted_convolution(x, 0.0, ConvolutionMode::WPrime)?;
            let lhs = self.delta * conv_p;
            let rhs = (1.0 - self.delta * w0) * self.w(Process::Y, x)? - self.w(Process::X, x)?;
            wprime_identity = wprime_identity.max((lhs - rhs).abs());
        }

        let mut boundary: f64 = 0.0;
        for which in [Process::X, Process::Y] {
            let expected = self.model.scale_at_zero(self.drift_cut(which));
            boundary = boundary
                .max(self.w(which, -1.0)?.abs())
                .max((self.w(which, 0.0)? - expected).abs())
                .max((self.z(which, 0.0)? - 1.0).abs())
                .max((self.z(which, -0.5)? - 1.0).abs())
                .max(self.zbar(which, 0.0)?.abs())
                .max((self.zbar(which, -0.5)? + 0.5).abs());
        }

        Ok(SelfCheckReport {
            laplace,
            wbar_identity,
            wprime_identity,
            boundary,
        })
    }

    fn invert(&self, which: Process, x: f64, order: i32) -> Result<f64> {
        let kernel = match order {
            0 => Kernel::Plain,
            1 => Kernel::Integral,
            _ => Kernel::DoubleIntegral,
        };
        Ok((self.phi(which) * x).exp() * self.invert_shifted(which, x, kernel)?)
    }

    /// Inverts `e^{-φx}` times the requested function, whose transform is analytic right of 0.
    fn invert_shifted(&self, which: Process, x: f64, kernel: Kernel) -> Result<f64> {
        let phi = self.phi(which);
        let cut = self.drift_cut(which);
        let w0 = self.w_at_zero(which);
        let q = self.q;
        // Values at 0+ of the shifted function; removing them as a step keeps the
        // inverted function continuous at the origin, where Euler summation is weak.
        let step = match kernel {
            Kernel::Plain => w0,
            Kernel::Derivative => self.shifted_derivative_at_zero(which),
            Kernel::Integral | Kernel::DoubleIntegral => 0.0,
        };
        let transform = |u: Complex64| {
            let s = u + phi;
            let g = 1.0 / (self.model.psi_complex(s) - s * cut - q);
            let f = match kernel {
                Kernel::Plain => g,
                Kernel::Derivative => u * g - w0,
                Kernel::Integral => g / s,
                Kernel::DoubleIntegral => g / (s * s),
            };
            f - step / u
        };
        let fine = step + euler_invert(&transform, x, EULER_TERMS);
        let coarse = step + euler_invert(&transform, x, EULER_CHECK_TERMS);
        let gap = (fine - coarse).abs();
        if !fine.is_finite() || gap > 1e-5 * fine.abs().max(1.0) {
            return Err(Error::Numerical(format!(
                "Laplace inversion unsettled at x = {x}: {EULER_TERMS}-term value {fine}, \
                 {EULER_CHECK_TERMS}-term value {coarse}, contour abscissa {:.4} (shift {phi:.6})",
                EULER_TERMS as f64 * std::f64::consts::LN_10 / (3.0 * x)
            )));
        }
        Ok(fine)
    }
}

impl ScaleFunctionSet {
    /// `W'(0+) - φ W(0+)`, the value at `0+` of the derivative of `e^{-φx} W(x)`.
    fn shifted_derivative_at_zero(&self, which: Process) -> f64 {
        let sigma = self.model.sigma();
        if sigma > 0.0 {
            return 2.0 / (sigma * sigma);
        }
        let rate = self.model.jump_rate();
        match self.model.effective_drift() {
            Some(c) if rate.is_finite() => {
                let c = c - self.drift_cut(which);
                (rate + self.q) / (c * c) - self.phi(which) / c
            }
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Kernel {
    Plain,
    Derivative,
    Integral,
    DoubleIntegral,
}

/// `∫_0^t_max f` on geometrically refined panels near the origin.
fn graded_integral<F: FnMut(f64) -> f64>(
    f: &mut F,
    t_max: f64,
    rule: &(Vec<f64>, Vec<f64>),
) -> f64 {
    let mut total = 0.0;
    let mut hi = t_max;
    for _ in 0..16 {
        let lo = 0.5 * hi;
        total += integrate(&mut *f, lo, hi, 1, rule);
        hi = lo;
    }
    total + integrate(&mut *f, 0.0, hi, 1, gl16())
}

fn exp_sum(model: &LevyModel, cut: f64, q: f64) -> Result<ExpSum> {
    let fail = || Error::Numerical(format!("psi(theta) = {q} has no two real roots"));
    match model.family() {
        LevyFamily::BrownianDrift => {
            let s2 = 0.5 * model.sigma() * model.sigma();
            let (r1, r2) = quadratic_roots(s2, model.gamma() - cut, -q).ok_or_else(fail)?;
            let a = 1.0 / (s2 * (r1 - r2));
            Ok(ExpSum {
                terms: vec![(a, r1), (-a, r2)],
            })
        }
        LevyFamily::CramerLundbergExp => {
            let c = model.effective_drift().unwrap() - cut;
            let mu = model.jump_mean_param();
            let (r1, r2) =
                quadratic_roots(c, c * mu - model.jump_rate() - q, -q * mu).ok_or_else(fail)?;
            Ok(ExpSum {
                terms: vec![
                    ((mu + r1) / (c * (r1 - r2)), r1),
                    ((mu + r2) / (c * (r2 - r1)), r2),
                ],
            })
        }
        LevyFamily::GeneralNumeric => Err(Error::Unsupported(
            "general Lévy densities have no exponential-sum scale function".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceResidual {
    pub process: Process,
    pub theta: f64,
    pub truncation: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfCheckReport {
    pub laplace: Vec<LaplaceResidual>,
    /// `max |δ ∫_0^x 𝕎(x-y) W(y) dy - (𝕎̄(x) - W̄(x))|` over the grid.
    pub wbar_identity: f64,
    /// `max |δ ∫_0^x 𝕎(y) W'(x-y) dy - ((1 - δW(0)) 𝕎(x) - W(x))|` over the grid.
    pub wprime_identity: f64,
    pub boundary: f64,
}

impl SelfCheckReport {
    pub fn max_residual(&self) -> f64 {
        self.laplace
            .iter()
            .map(|l| l.residual)
            .fold(0.0, f64::max)
            .max(self.wbar_identity)
            .max(self.wprime_identity)
            .max(self.boundary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::LevyDensity;
    use proptest::prelude::*;

    fn bm_set() -> ScaleFunctionSet {
        let m = LevyModel::brownian_drift(1.0, 2f64.sqrt()).unwrap();
        ScaleFunctionSet::build(&m, 0.5, 0.6).unwrap()
    }

    fn cl_set() -> ScaleFunctionSet {
        let m = LevyModel::cramer_lundberg(2.0, 1.0, 1.0).unwrap();
        ScaleFunctionSet::build(&m, 0.5, 0.6).unwrap()
    }

    fn grid() -> Vec<f64> {
        (1..=40).map(|k| 0.25 * k as f64).collect()
    }

    #[test]
    fn boundary_conventions() {
        for set in [bm_set(), cl_set()] {
            for p in [Process::X, Process::Y] {
                assert_eq!(set.w(p, -1.0).unwrap(), 0.0);
                assert_eq!(set.z(p, -0.5).unwrap(), 1.0);
                assert_eq!(set.wbar(p, -0.5).unwrap(), 0.0);
                assert_eq!(set.zbar(p, -0.5).unwrap(), -0.5);
                assert_eq!(set.z(p, 0.0).unwrap(), 1.0);
                assert_eq!(set.zbar(p, 0.0).unwrap(), 0.0);
            }
        }
        assert!((cl_set().w(Process::X, 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((cl_set().w(Process::Y, 0.0).unwrap() - 1.0 / 1.5).abs() < 1e-15);
        assert!(bm_set().w(Process::X, 0.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn derivative_limits_and_finite_differences() {
        let set = bm_set();
        // 2 / sigma^2 = 1
        assert!((set.w_prime(Process::X, 1e-12).unwrap() - 1.0).abs() < 1e-9);
        for s in [bm_set(), cl_set()] {
            for p in [Process::X, Process::Y] {
                let h = 1e-5;
                let fd = (s.w(p, 1.0 + h).unwrap() - s.w(p, 1.0 - h).unwrap()) / (2.0 * h);
                assert!((fd - s.w_prime(p, 1.0).unwrap()).abs() < 1e-7);
            }
        }
        // W'(0+) = (λ + q) / c^2 for the compound Poisson family
        let cl = cl_set();
        let expected = (1.0 + 0.6) / 4.0;
        assert!((cl.w_prime(Process::X, 1e-13).unwrap() - expected).abs() < 1e-10);
        assert!(matches!(cl.w_prime(Process::X, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn integrals_match_definitions() {
        for set in [bm_set(), cl_set()] {
            for p in [Process::X, Process::Y] {
                for x in [0.3, 1.7, 4.0] {
                    let q = integrate(|y| set.w(p, y).unwrap(), 0.0, x, 8, gl64());
                    assert!((set.wbar(p, x).unwrap() - q).abs() < 1e-12 * q.max(1.0));
                    let zq = integrate(|y| set.z(p, y).unwrap(), 0.0, x, 8, gl64());
                    assert!((set.zbar(p, x).unwrap() - zq).abs() < 1e-12 * zq.max(1.0));
                    let z = set.z(p, x).unwrap();
                    assert!((z - 1.0 - set.q() * set.wbar(p, x).unwrap()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn tail_integral_identities() {
        for set in [bm_set(), cl_set()] {
            let phi = set.phi(Process::Y);
            let mut prev = 0.0;
            for b in [0.0, 0.5, 1.0, 3.0] {
                let iw = set.exp_tail_integral(b, TailMode::W).unwrap();
                let iwp = set.exp_tail_integral(b, TailMode::WPrime).unwrap();
                let w = set.w(Process::X, b).unwrap();
                assert!((phi * iw - (w + iwp)).abs() < 1e-9 * iw.max(1.0));
                assert!(iw > prev);
                prev = iw;
                let q = integrate(
                    |y| (-phi * y).exp() * set.w(Process::X, y + b).unwrap(),
                    0.0,
                    250.0,
                    500,
                    gl64(),
                );
                assert!((iw - q).abs() < 1e-9 * q.max(1.0), "{iw} vs {q}");
            }
        }
    }

    #[test]
    fn convolutions_match_quadrature() {
        for set in [bm_set(), cl_set()] {
            for &(x, b) in &[(2.0, 0.5), (3.0, 0.0), (0.4, 0.1)] {
                for mode in [
                    ConvolutionMode::W,
                    ConvolutionMode::WPrime,
                    ConvolutionMode::Z,
                ] {
                    let k = |y: f64| match mode {
                        ConvolutionMode::W => set.w(Process::X, y).unwrap(),
                        ConvolutionMode::WPrime => set.w_prime(Process::X, y).unwrap(),
                        ConvolutionMode::Z => set.z(Process::X, y).unwrap(),
                    };
                    let q = integrate(
                        |y| set.w(Process::Y, x - y).unwrap() * k(y),
                        b,
                        x,
                        16,
                        gl64(),
                    );
                    let c = set.refracted_convolution(x, b, mode).unwrap();
                    assert!(
                        (c - q).abs() < 1e-11 * q.abs().max(1.0),
                        "{mode:?}: {c} vs {q}"
                    );
                }
            }
            assert_eq!(
                set.refracted_convolution(1.0, 2.0, ConvolutionMode::W)
                    .unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn self_check_passes_and_detects_corruption() {
        for set in [bm_set(), cl_set()] {
            let rep = set.self_check(&grid()).unwrap();
            assert!(rep.max_residual() < 1e-8, "{rep:?}");
            let bad = set
                .perturbed(Process::X, 1, 0.01)
                .self_check(&grid())
                .unwrap();
            assert!(bad.max_residual() > 1e-3, "{bad:?}");
        }
    }

    #[test]
    fn numeric_inversion_agrees_with_closed_form() {
        for set in [bm_set(), cl_set()] {
            let num = ScaleFunctionSet::build_numeric(set.model(), set.delta(), set.q()).unwrap();
            for p in [Process::X, Process::Y] {
                for x in [0.2, 1.0, 3.0] {
                    let a = set.w(p, x).unwrap();
                    let b = num.w(p, x).unwrap();
                    assert!((a - b).abs() < 1e-7 * a.max(1.0), "W {p:?} {x}: {a} vs {b}");
                    let a = set.w_prime(p, x).unwrap();
                    let b = num.w_prime(p, x).unwrap();
                    assert!(
                        (a - b).abs() < 1e-6 * a.abs().max(1.0),
                        "W' {p:?} {x}: {a} vs {b}"
                    );
                    let a = set.zbar(p, x).unwrap();
                    let b = num.zbar(p, x).unwrap();
                    assert!(
                        (a - b).abs() < 1e-7 * a.max(1.0),
                        "Zbar {p:?} {x}: {a} vs {b}"
                    );
                }
            }
            let a = set.exp_tail_integral(0.7, TailMode::W).unwrap();
            let b = num.exp_tail_integral(0.7, TailMode::W).unwrap();
            assert!((a - b).abs() < 1e-6 * a, "{a} vs {b}");
            let a = set
                .refracted_convolution(2.0, 0.5, ConvolutionMode::Z)
                .unwrap();
            let b = num
                .refracted_convolution(2.0, 0.5, ConvolutionMode::Z)
                .unwrap();
            assert!((a - b).abs() < 1e-6 * a, "{a} vs {b}");
        }
    }

    #[test]
    fn general_density_path_runs_self_check() {
        let (c, lambda, mu) = (2.0, 1.0, 1.0);
        let small = lambda * (1.0 - (-mu as f64).exp() * (1.0 + mu)) / mu;
        let density = LevyDensity::new(move |z: f64| lambda * mu * (mu * z).exp());
        let g = LevyModel::general_numeric(c - small, 0.0, density).unwrap();
        let set = ScaleFunctionSet::build(&g, 0.5, 0.6).unwrap();
        assert_eq!(set.representation(), Representation::NumericInversion);
        let closed = cl_set();
        for x in [0.5, 2.0] {
            let a = closed.w(Process::Y, x).unwrap();
            let b = set.w(Process::Y, x).unwrap();
            assert!((a - b).abs() < 1e-7 * a, "{a} vs {b}");
        }
        let rep = set.self_check(&[0.5, 1.5]).unwrap();
        assert!(rep.max_residual() < 1e-6, "{rep:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn scale_functions_are_monotone(gamma in -1.0f64..2.0, sigma in 0.3f64..2.0, c in 1.0f64..4.0,
                                        lambda in 0.1f64..2.0, mu in 0.5f64..3.0, q in 0.05f64..2.0) {
            let delta = 0.4;
            let models = [LevyModel::brownian_drift(gamma, sigma).unwrap(),
                          LevyModel::cramer_lundberg(c, lambda, mu).unwrap()];
            for m in models {
                let set = ScaleFunctionSet::build(&m, delta, q).unwrap();
                for p in [Process::X, Process::Y] {
                    let mut prev_w = 0.0;
                    let mut prev_z = 1.0;
                    for k in 1..=200 {
                        let x = 0.05 * k as f64;
                        let w = set.w(p, x).unwrap();
                        let z = set.z(p, x).unwrap();
                        prop_assert!(w >= prev_w && w >= 0.0);
                        prop_assert!(z >= prev_z && z >= 1.0);
                        prev_w = w;
                        prev_z = z;
                    }
                }
            }
        }
    }
}

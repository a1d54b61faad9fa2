//! The exponential-horizon bail-out problem: value of a refraction threshold
//! `b`, the barrier score `g`, the optimal threshold and its verification.

use serde::Serialize;

use crate::error::{Error, Result};
pub use crate::levy_model::AuxiliaryProblem;
use crate::levy_model::Process;
pub use crate::payoff::PayoffFunction;
use crate::scale_functions::{ExpSum, ScaleFunctionSet};

/// Side of a one-sided limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Default)]
struct Blocks {
    z: f64,
    zbar: f64,
    wx: f64,
    conv_w: f64,
    conv_wp: f64,
    conv_z: f64,
    /// `𝕎̄(x - b)` and `𝕎(x - b)`
    ybar: f64,
    yw: f64,
    q1a: f64,
    q1b: f64,
    q2: f64,
    t1: f64,
    t2: f64,
    t3: f64,
}

/// Value and derivative of the refraction-reflection strategy at a fixed threshold.
///
/// Construction caches every `b`-dependent quantity, so evaluating on a grid
/// costs one pass over the payoff knots per point.
#[derive(Debug, Clone)]
pub struct BarrierNpv<'a> {
    prob: &'a AuxiliaryProblem,
    wx: ExpSum,
    wy: ExpSum,
    phi: f64,
    alpha: f64,
    b: f64,
    /// `∫_0^∞ e^{-φy} W(y+b) dy`
    iw: f64,
    wb: f64,
    /// `∫_0^b w'(z) e^{ρ_k (b - z)} dz` per root of the free process
    moments: Vec<f64>,
    s1: f64,
    s1_prime: f64,
    g1: f64,
    /// `∫_b^∞ w'(z) e^{-φ (z - b)} dz`
    s2: f64,
    /// coefficient of the scale-function block `D(x)` in the derivative
    cd: f64,
    g: f64,
    h: f64,
    h_tail: f64,
}

impl<'a> BarrierNpv<'a> {
    pub fn new(prob: &'a AuxiliaryProblem, b: f64) -> Result<Self> {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::Domain(format!(
                "threshold must be finite and >= 0, got {b}"
            )));
        }
        let alpha = prob.alpha();
        let set = ScaleFunctionSet::build(prob.model(), prob.delta(), alpha)?;
        let (wx, wy) = match (set.exp_sum(Process::X), set.exp_sum(Process::Y)) {
            (Some(x), Some(y)) => (x.clone(), y.clone()),
            _ => {
                return Err(Error::Unsupported(
                    "threshold problems need exponential-sum scale functions".into(),
                ))
            }
        };
        let phi = set.phi(Process::Y);
        let delta = prob.delta();
        let beta = prob.beta();
        let r = prob.r();
        let w = prob.payoff();

        let iw: f64 = wx
            .terms
            .iter()
            .map(|&(a, k)| a * (k * b).exp() / (phi - k))
            .sum();
        let iwp: f64 = wx
            .terms
            .iter()
            .map(|&(a, k)| a * k * (k * b).exp() / (phi - k))
            .sum();
        let wb = wx.value(b);
        let zb = 1.0 + alpha * wx.integral(b);
        let moments: Vec<f64> = wx
            .terms
            .iter()
            .map(|&(_, k)| w.exp_moment(k, b, 0.0, b))
            .collect();
        let s1 = wx
            .terms
            .iter()
            .zip(&moments)
            .map(|(&(a, k), m)| a / (phi - k) * m)
            .sum();
        let s1_prime = wx
            .terms
            .iter()
            .zip(&moments)
            .map(|(&(a, k), m)| a * k / (phi - k) * m)
            .sum();
        let g1 = wx
            .terms
            .iter()
            .zip(&moments)
            .map(|(&(a, _), m)| a * m)
            .sum();
        let s2 = w.exp_moment(phi, b, b, f64::INFINITY);
        let cd = (beta * zb - 1.0 + beta * alpha * iw) / (phi * iw);
        let g =
            beta * zb - 1.0 - cd * wb + r * (wb * s1 / iw - g1) + r * wb * s2 / (phi * delta * iw);
        Ok(BarrierNpv {
            prob,
            wx,
            wy,
            phi,
            alpha,
            b,
            iw,
            wb,
            moments,
            s1,
            s1_prime,
            g1,
            s2,
            cd,
            g,
            h: 1.0 - wb / (phi * iw),
            h_tail: iwp / (phi * iw),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.b
    }

    /// `φ(α)`, the right inverse of the refracted exponent.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// The barrier score `g(b)`; its sign decides whether raising the threshold pays.
    pub fn g(&self) -> f64 {
        self.g
    }

    /// `h(b) = 1 - W(b) / (φ I_W(b))`, always positive.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// `h(b)` in its tail-derivative form `I_{W'}(b) / (φ I_W(b))`.
    pub fn h_tail_form(&self) -> f64 {
        self.h_tail
    }

    /// Scale-function blocks at `x`. Above the threshold the two growing
    /// exponential modes (`e^{Φx}` and `e^{φ(x-b)}`) are left out: their
    /// coefficients cancel exactly in every quantity assembled from the blocks,
    /// and dropping them keeps far-field evaluation free of cancellation.
    fn blocks(&self, x: f64) -> Blocks {
        let w = self.prob.payoff();
        let (alpha, b) = (self.alpha, self.b);
        let above = x > b;
        let len = (x - b).max(0.0);
        let xs = &self.wx.terms;
        let ys = &self.wy.terms;
        let keep = |i: usize| !above || i != 0;
        let ey = |j: usize| if keep(j) { (ys[j].1 * len).exp() } else { 0.0 };
        // Σ_j B_j (e^{τ_j L} - e^{ρ L}) / (τ_j - ρ), with masked growing modes
        let conv = |k: usize, rho: f64| -> f64 {
            if !above {
                return self.wy.convolve_exp(rho, len);
            }
            let ex = if keep(k) { (rho * len).exp() } else { 0.0 };
            ys.iter()
                .enumerate()
                .map(|(j, &(bj, t))| bj * (ey(j) - ex) / (t - rho))
                .sum()
        };

        let mut bl = Blocks::default();
        let mut z0 = 1.0;
        for (k, (&(a, rho), m)) in xs.iter().zip(&self.moments).enumerate() {
            let c = conv(k, rho);
            let eb = (rho * b).exp();
            bl.conv_w += a * eb * c;
            bl.conv_wp += a * rho * eb * c;
            bl.conv_z += alpha * a / rho * eb * c;
            bl.t2 += a * c * m;
            bl.q1b += a * rho * c * m;
            z0 -= alpha * a / rho;
        }
        // the constant part of Z is zero up to rounding but is kept for symmetry
        bl.conv_z += z0
            * if above {
                ys.iter()
                    .enumerate()
                    .map(|(j, &(bj, t))| bj * (ey(j) - 1.0) / t)
                    .sum()
            } else {
                self.wy.convolve_exp(0.0, len)
            };

        let w0 = w.value(0.0);
        if above {
            let dwb = w.value(b) - w0;
            for (k, (&(a, rho), m)) in xs.iter().zip(&self.moments).enumerate() {
                let ex = if keep(k) { (rho * x).exp() } else { 0.0 };
                let em = if keep(k) { (rho * len).exp() * m } else { 0.0 };
                bl.z += a * (ex - 1.0) / rho;
                bl.zbar += a * (ex - 1.0 - rho * x) / (rho * rho);
                bl.wx += a * ex;
                bl.q1a += a * em;
                bl.t1 += a / rho * (em - dwb);
            }
            bl.z = 1.0 + alpha * bl.z;
            bl.zbar = x + alpha * bl.zbar;
            let dw = w.value(x) - w.value(b);
            for (j, &(bj, t)) in ys.iter().enumerate() {
                let mj = if keep(j) {
                    w.exp_moment(t, x, b, x)
                } else {
                    -w.exp_moment(t, x, x, f64::INFINITY)
                };
                bl.ybar += bj * (ey(j) - 1.0) / t;
                bl.yw += bj * ey(j);
                bl.q2 += bj * mj;
                bl.t3 += bj / t * (mj - dw);
            }
        } else {
            bl.z = 1.0 + alpha * self.wx.integral(x);
            bl.zbar = x + alpha * self.wx.double_integral(x);
            bl.wx = self.wx.value(x);
            bl.yw = self.wy.value(0.0);
            for &(a, rho) in xs {
                bl.q1a += a * w.exp_moment(rho, x, 0.0, x);
                bl.t1 += a / rho * (w.exp_moment(rho, x, 0.0, x) - (w.value(x) - w0));
            }
        }
        bl
    }

    /// `v_b(x)`; linear with slope `β` below zero.
    pub fn value(&self, x: f64) -> f64 {
        if x < 0.0 {
            return self.value(0.0) + self.prob.beta() * x;
        }
        let p = self.prob;
        let (alpha, delta, beta, r, phi) = (self.alpha, p.delta(), p.beta(), p.r(), self.phi);
        let bl = self.blocks(x);
        let e = bl.z + alpha * delta * bl.conv_w;
        let z1 = -delta * bl.ybar
            + beta * (bl.zbar + p.model().mean() / alpha)
            + beta * delta * bl.conv_z
            - self.cd / alpha * e;
        let z2 = r * p.payoff().value(0.0) / alpha
            + r * (e * self.s1 / (alpha * self.iw) - bl.t1 - delta * bl.t2)
            + r * (e * self.s2 / (phi * delta * alpha * self.iw) - bl.t3);
        z1 + z2
    }

    /// `v_b'(x)` for `x > 0`, `x != b`.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) || x == self.b {
            return Err(Error::Domain(format!(
                "derivative is only defined off 0 and the threshold {} (got x = {x}); \
                 use a one-sided limit",
                self.b
            )));
        }
        Ok(self.derivative_formula(x, x > self.b))
    }

    /// One-sided limit of `v_b'` at any `x >= 0`.
    pub fn derivative_limit(&self, x: f64, side: Side) -> f64 {
        match side {
            Side::Left if x <= 0.0 => self.prob.beta(),
            Side::Left => self.derivative_formula(x, x > self.b),
            Side::Right => self.derivative_formula(x.max(0.0), x >= self.b),
        }
    }

    fn derivative_formula(&self, x: f64, above: bool) -> f64 {
        let p = self.prob;
        let (alpha, delta, beta, r, phi) = (self.alpha, p.delta(), p.beta(), p.r(), self.phi);
        let bl = self.blocks(x);
        let d = bl.wx + delta * bl.conv_wp;
        let mut v = beta * bl.z + beta * delta * alpha * bl.conv_w - self.cd * d
            + r * (d * self.s1 / self.iw - bl.q1a - delta * bl.q1b)
            + r * (d * self.s2 / (phi * delta * self.iw) - bl.q2);
        if above {
            v += delta * bl.yw * self.g;
        }
        v
    }

    /// `E_x[e^{-α κ}]` and `E_x[∫_0^κ e^{-αt} w'(Γ(t)) dt]`, `κ` the first passage
    /// below zero of the refracted (unreflected) process with threshold `b`.
    pub fn resolvent_blocks(&self, x: f64) -> (f64, f64) {
        let (alpha, delta, phi) = (self.alpha, self.prob.delta(), self.phi);
        let bl = self.blocks(x.max(0.0));
        let d = bl.wx + delta * bl.conv_wp;
        let kill = bl.z + delta * alpha * bl.conv_w - alpha / (phi * self.h) * d;
        let at_b =
            (self.wb * self.s1 / self.iw - self.g1) + self.wb * self.s2 / (phi * delta * self.iw);
        let occupation = at_b / self.h * d / (phi * self.iw)
            + (d * (self.g1 + self.s1_prime) / (phi * self.iw) - bl.q1a - delta * bl.q1b)
            + (d * self.s2 / (phi * delta * self.iw) - bl.q2);
        (kill, occupation)
    }

    /// `β E_x[e^{-ακ}] + r E_x[∫_0^κ e^{-αt} w'(Γ(t)) dt]`, i.e.
    /// `β - E_x[∫_0^κ e^{-αt} (βα - r w'(Γ(t))) dt]`.
    pub fn resolvent_slope(&self, x: f64) -> f64 {
        let (kill, occupation) = self.resolvent_blocks(x);
        self.prob.beta() * kill + self.prob.r() * occupation
    }

    /// `g(b)` rebuilt from the passage representation `g/h = β - 1 - E_b[...]`.
    pub fn g_from_resolvent(&self) -> f64 {
        self.h * (self.resolvent_slope(self.b) - 1.0)
    }
}

/// `v_b(x)`.
pub fn npv(prob: &AuxiliaryProblem, b: f64, x: f64) -> Result<f64> {
    Ok(BarrierNpv::new(prob, b)?.value(x))
}

/// `v_b'(x)` for `x > 0`, `x != b`.
pub fn npv_derivative(prob: &AuxiliaryProblem, b: f64, x: f64) -> Result<f64> {
    BarrierNpv::new(prob, b)?.derivative(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierScore {
    pub g: f64,
    pub h: f64,
    /// `h` from the tail-derivative ratio; equal to `h` up to rounding.
    pub h_tail_form: f64,
    /// `g` from the passage-time representation; equal to `g` up to rounding.
    pub g_from_resolvent: f64,
}

/// `g(b)` and `h(b)` together with their alternative representations.
pub fn barrier_score(prob: &AuxiliaryProblem, b: f64) -> Result<BarrierScore> {
    let e = BarrierNpv::new(prob, b)?;
    Ok(BarrierScore {
        g: e.g(),
        h: e.h(),
        h_tail_form: e.h_tail_form(),
        g_from_resolvent: e.g_from_resolvent(),
    })
}

/// Options for the threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdOptions {
    /// Absolute tolerance on `b*`.
    pub tol: f64,
    /// Give up once `Φ(α) b` exceeds this while `g` is still nonnegative.
    pub max_growth: f64,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions {
            tol: 1e-12,
            max_growth: 600.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SingleRegimeSolution {
    #[serde(skip)]
    problem: AuxiliaryProblem,
    pub b_star: f64,
    pub g_at_zero: f64,
    pub g_residual: f64,
    pub h_at_b_star: f64,
    /// `(b, g(b))` at every bracket-growth step.
    pub bracket_trace: Vec<(f64, f64)>,
    pub bisection_steps: usize,
}

impl SingleRegimeSolution {
    pub fn problem(&self) -> &AuxiliaryProblem {
        &self.problem
    }

    pub fn evaluator(&self) -> BarrierNpv<'_> {
        BarrierNpv::new(&self.problem, self.b_star)
            .expect("solution threshold was evaluated before")
    }

    pub fn value(&self, x: f64) -> f64 {
        self.evaluator().value(x)
    }

    /// `v'_{b*}(x)` for `x > 0`, `x != b*`.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        self.evaluator().derivative(x)
    }
}

/// `b* = inf{b >= 0 : g(b) < 0}`.
pub fn optimal_threshold(prob: &AuxiliaryProblem) -> Result<SingleRegimeSolution> {
    optimal_threshold_with(prob, ThresholdOptions::default())
}

pub fn optimal_threshold_with(
    prob: &AuxiliaryProblem,
    opts: ThresholdOptions,
) -> Result<SingleRegimeSolution> {
    prob.check_payoff()?;
    let score = |b: f64| BarrierNpv::new(prob, b).map(|e| e.g());
    let g0 = score(0.0)?;
    let mut trace = vec![(0.0, g0)];
    let solution = |b_star: f64, g: f64, trace: Vec<(f64, f64)>, steps: usize| -> Result<_> {
        let h = BarrierNpv::new(prob, b_star)?.h();
        Ok(SingleRegimeSolution {
            problem: prob.clone(),
            b_star,
            g_at_zero: g0,
            g_residual: g,
            h_at_b_star: h,
            bracket_trace: trace,
            bisection_steps: steps,
        })
    };
    if g0 <= 0.0 {
        return solution(0.0, g0, trace, 0);
    }

    let big_phi =
        crate::levy_model::right_inverse(prob.model(), prob.delta(), prob.alpha(), Process::X)?;
    let mut lo = 0.0;
    let mut g_lo = g0;
    let mut hi = (0.5 / big_phi).min(1.0);
    let mut g_hi = score(hi)?;
    trace.push((hi, g_hi));
    while g_hi >= 0.0 {
        if big_phi * hi > opts.max_growth || !g_hi.is_finite() {
            return Err(Error::Numerical(format!(
                "no sign change of g up to b = {hi}; trace (b, g): {trace:?}"
            )));
        }
        lo = hi;
        g_lo = g_hi;
        hi *= 2.0;
        g_hi = score(hi)?;
        trace.push((hi, g_hi));
    }

    let mut steps = 0;
    while hi - lo > opts.tol && steps < 200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = score(mid)?;
        steps += 1;
        if g_mid >= 0.0 {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
            g_hi = g_mid;
        }
    }
    // final secant step inside the bracket
    let b_star = if g_lo > g_hi {
        (lo + (hi - lo) * g_lo / (g_lo - g_hi)).clamp(lo, hi)
    } else {
        0.5 * (lo + hi)
    };
    let g_star = score(b_star)?;
    solution(b_star, g_star, trace, steps)
}

/// Outcome of the optimality checks on a grid.
#[derive(Debug, Clone, Serialize)]
pub struct OptimalityReport {
    pub b_star: f64,
    pub tolerance: f64,
    /// `max(|v'(b*-) - 1|, |v'(b*+) - 1|)`, when `b* > 0`.
    pub smooth_fit_residual: Option<f64>,
    /// Jump of `v'` (bounded variation) or of `v''` (unbounded variation) across `b*`.
    pub kink_at_threshold: f64,
    /// `min (v' - 1)` on grid points in `(0, b*)`.
    pub min_slope_excess_below: Option<f64>,
    /// `max (v' - β)` on grid points in `(0, b*)`.
    pub max_slope_over_beta_below: Option<f64>,
    /// `max (v' - 1)` on grid points above `b*`.
    pub max_slope_excess_above: Option<f64>,
    /// `min v'` on grid points above `b*`.
    pub min_slope_above: Option<f64>,
    /// Largest increase of `v'` between consecutive grid points.
    pub monotonicity_violation: f64,
    pub slope_at_zero: f64,
    /// `min_x v(x) - v(0)` over the grid.
    pub lower_bound_gap: f64,
    /// `max |optimal_derivative - npv_derivative|` over the grid.
    pub derivative_route_gap: f64,
    pub passed: bool,
}

/// Grid used by default for verification: `n` points on `(0, x_max]`.
pub fn verification_grid(sol: &SingleRegimeSolution, n: usize) -> Vec<f64> {
    let prob = sol.problem();
    let big_phi =
        crate::levy_model::right_inverse(prob.model(), prob.delta(), prob.alpha(), Process::X)
            .unwrap_or(1.0);
    let x_max = (6.0 * sol.b_star)
        .max(8.0 / big_phi)
        .max(1.0)
        .min(40.0 / big_phi.max(1e-3));
    (1..=n).map(|k| x_max * k as f64 / n as f64).collect()
}

pub fn verify_optimality(sol: &SingleRegimeSolution, grid: &[f64]) -> OptimalityReport {
    let tol = 1e-9;
    let prob = sol.problem();
    let e = sol.evaluator();
    let b = sol.b_star;
    let beta = prob.beta();
    let slope = |x: f64| {
        if x == b {
            e.derivative_limit(x, Side::Left)
        } else {
            e.derivative_formula(x, x > b)
        }
    };

    let smooth_fit_residual = (b > 0.0).then(|| {
        let l = (e.derivative_limit(b, Side::Left) - 1.0).abs();
        let r = (e.derivative_limit(b, Side::Right) - 1.0).abs();
        l.max(r)
    });
    let set = ScaleFunctionSet::build(prob.model(), prob.delta(), prob.alpha());
    let kink = match &set {
        Ok(s) if prob.model().has_bounded_variation() => {
            prob.delta() * s.w_at_zero(Process::Y) * e.g()
        }
        Ok(s) => prob.delta() * s.w_prime(Process::Y, 1e-14).unwrap_or(f64::NAN) * e.g(),
        Err(_) => f64::NAN,
    };

    let pts: Vec<f64> = grid.iter().copied().filter(|&x| x > 0.0).collect();
    let slopes: Vec<f64> = pts.iter().map(|&x| slope(x)).collect();
    let below: Vec<f64> = pts
        .iter()
        .zip(&slopes)
        .filter(|(x, _)| **x < b)
        .map(|(_, s)| *s)
        .collect();
    let above: Vec<f64> = pts
        .iter()
        .zip(&slopes)
        .filter(|(x, _)| **x > b)
        .map(|(_, s)| *s)
        .collect();
    let fold_min = |v: &[f64], f: &dyn Fn(f64) -> f64| {
        (!v.is_empty()).then(|| v.iter().map(|&s| f(s)).fold(f64::INFINITY, f64::min))
    };
    let fold_max = |v: &[f64], f: &dyn Fn(f64) -> f64| {
        (!v.is_empty()).then(|| v.iter().map(|&s| f(s)).fold(f64::NEG_INFINITY, f64::max))
    };
    let min_slope_excess_below = fold_min(&below, &|s| s - 1.0);
    let max_slope_over_beta_below = fold_max(&below, &|s| s - beta);
    let max_slope_excess_above = fold_max(&above, &|s| s - 1.0);
    let min_slope_above = fold_min(&above, &|s| s);
    let monotonicity_violation = slopes
        .windows(2)
        .map(|w| (w[1] - w[0]).max(0.0))
        .fold(0.0, f64::max);
    let slope_at_zero = e.derivative_limit(0.0, Side::Right);
    let v0 = e.value(0.0);
    let lower_bound_gap = pts.iter().map(|&x| e.value(x) - v0).fold(0.0, f64::min);
    let derivative_route_gap = pts
        .iter()
        .zip(&slopes)
        .map(|(&x, s)| (optimal_derivative_at(sol, &e, x) - s).abs())
        .fold(0.0, f64::max);

    let scale = beta.max(1.0);
    let passed = smooth_fit_residual.map_or(true, |r| r < 1e-7)
        && min_slope_excess_below.map_or(true, |m| m >= -tol * scale)
        && max_slope_over_beta_below.map_or(true, |m| m <= tol * scale)
        && max_slope_excess_above.map_or(true, |m| m <= tol * scale)
        && min_slope_above.map_or(true, |m| m >= -tol * scale)
        && monotonicity_violation <= 1e-8 * scale
        && slope_at_zero <= beta + tol * scale
        && lower_bound_gap >= -tol * scale
        && derivative_route_gap < 1e-7 * scale;

    OptimalityReport {
        b_star: b,
        tolerance: tol,
        smooth_fit_residual,
        kink_at_threshold: kink,
        min_slope_excess_below,
        max_slope_over_beta_below,
        max_slope_excess_above,
        min_slope_above,
        monotonicity_violation,
        slope_at_zero,
        lower_bound_gap,
        derivative_route_gap,
        passed,
    }
}

/// `v'_{b*}(x)` from its passage-time representation, independent of the
/// derivative of the value formula.
pub fn optimal_derivative(sol: &SingleRegimeSolution, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!(
            "optimal derivative needs x >= 0, got {x}"
        )));
    }
    Ok(optimal_derivative_at(sol, &sol.evaluator(), x))
}

fn optimal_derivative_at(sol: &SingleRegimeSolution, e: &BarrierNpv<'_>, x: f64) -> f64 {
    if sol.b_star > 0.0 {
        return e.resolvent_slope(x);
    }
    // b* = 0: the refracted process starts above the threshold at once.
    let prob = sol.problem();
    let (alpha, beta, r, phi) = (prob.alpha(), prob.beta(), prob.r(), e.phi);
    let w = prob.payoff();
    let wy = e.wy.value(x);
    let zy = 1.0 + alpha * e.wy.integral(x);
    let tail = w.exp_moment(phi, 0.0, 0.0, f64::INFINITY);
    let near: f64 =
        e.wy.terms
            .iter()
            .map(|&(bj, t)| bj * w.exp_moment(t, x, 0.0, x))
            .sum();
    beta * (zy - alpha / phi * wy) + r * (wy * tail - near)
}

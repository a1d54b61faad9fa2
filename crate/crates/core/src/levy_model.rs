//! Spectrally negative Lévy models, their Laplace exponents and right inverses,
//! and the regime-switching model data with its admissibility checks.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{gl16, newton_bisect, quadratic_roots};
use crate::payoff::PayoffFunction;

/// Smallest refraction rate accepted by the solver.
pub const MIN_DELTA: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LevyFamily {
    /// Brownian motion with drift (unbounded variation).
    BrownianDrift,
    /// Premium drift minus compound-Poisson exponential claims (bounded variation).
    CramerLundbergExp,
    /// User-supplied Lévy density on the negative half-line; handled by numerical inversion.
    GeneralNumeric,
}

/// Which process a quantity refers to: the free process `X` or the refracted `Y = X - δt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Process {
    X,
    Y,
}

/// Density of the Lévy measure on `(-∞, 0)`.
#[derive(Clone)]
pub struct LevyDensity(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl LevyDensity {
    pub fn new<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        LevyDensity(Arc::new(f))
    }

    pub fn eval(&self, z: f64) -> f64 {
        (self.0)(z)
    }
}

impl fmt::Debug for LevyDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("LevyDensity(<fn>)")
    }
}

/// A spectrally negative Lévy process.
///
/// `gamma` is the Lévy–Khintchine drift (truncation at `|z| < 1`). For the
/// Cramér–Lundberg family the premium rate `c` is stored as well, since that is
/// how such models are usually parametrized.
#[derive(Debug, Clone)]
pub struct LevyModel {
    family: LevyFamily,
    gamma: f64,
    sigma: f64,
    jump_rate: f64,
    jump_mean_param: f64,
    premium: Option<f64>,
    levy_density: Option<LevyDensity>,
    jumps: Arc<JumpQuadrature>,
}

impl LevyModel {
    pub fn brownian_drift(gamma: f64, sigma: f64) -> Result<Self> {
        if !gamma.is_finite() || !sigma.is_finite() {
            return Err(Error::Domain("gamma and sigma must be finite".into()));
        }
        if sigma <= 0.0 {
            return Err(Error::assumption(
                "positive_volatility",
                format!("Brownian model needs sigma > 0, got {sigma}"),
            ));
        }
        Ok(LevyModel {
            family: LevyFamily::BrownianDrift,
            gamma,
            sigma,
            jump_rate: 0.0,
            jump_mean_param: f64::INFINITY,
            premium: None,
            levy_density: None,
            jumps: Arc::default(),
        })
    }

    /// `X(t) = c t - Σ claims`, claims exponential with rate `mu` arriving at rate `lambda`.
    pub fn cramer_lundberg(c: f64, lambda: f64, mu: f64) -> Result<Self> {
        if !(c.is_finite() && lambda.is_finite() && mu.is_finite()) {
            return Err(Error::Domain("c, lambda and mu must be finite".into()));
        }
        if lambda < 0.0 {
            return Err(Error::Domain(format!(
                "claim rate must be >= 0, got {lambda}"
            )));
        }
        if mu <= 0.0 {
            return Err(Error::Domain(format!(
                "claim-size rate must be > 0, got {mu}"
            )));
        }
        if c <= 0.0 {
            return Err(Error::assumption(
                "non_monotone",
                format!("premium rate must be positive, got {c}"),
            ));
        }
        let small_jump_mean = lambda * (1.0 - (-mu).exp() * (1.0 + mu)) / mu;
        Ok(LevyModel {
            family: LevyFamily::CramerLundbergExp,
            gamma: c - small_jump_mean,
            sigma: 0.0,
            jump_rate: lambda,
            jump_mean_param: mu,
            premium: Some(c),
            levy_density: None,
            jumps: Arc::default(),
        })
    }

    /// General model: `ψ(θ) = γθ + σ²θ²/2 + ∫ (e^{θz} - 1 - θz 1{z > -1}) π(z) dz`.
    ///
    /// When `sigma == 0` the density is assumed to satisfy `∫_{(-1,0)} |z| π(z) dz < ∞`
    /// so that the process has bounded variation.
    pub fn general_numeric(gamma: f64, sigma: f64, density: LevyDensity) -> Result<Self> {
        if !gamma.is_finite() || !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Domain("gamma must be finite and sigma >= 0".into()));
        }
        let mut model = LevyModel {
            family: LevyFamily::GeneralNumeric,
            gamma,
            sigma,
            jump_rate: 0.0,
            jump_mean_param: f64::NAN,
            premium: None,
            jumps: Arc::new(JumpQuadrature::new(&density)),
            levy_density: Some(density),
        };
        model.jump_rate = model.jumps.mass();
        if sigma == 0.0 {
            let c = gamma - model.jumps.small_jump_moment();
            if !(c > 0.0) {
                return Err(Error::assumption(
                    "non_monotone",
                    format!("effective drift must be positive, got {c}"),
                ));
            }
            model.premium = Some(c);
        }
        Ok(model)
    }

    pub fn family(&self) -> LevyFamily {
        self.family
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Total jump intensity (may be infinite for a general density).
    pub fn jump_rate(&self) -> f64 {
        self.jump_rate
    }

    pub fn jump_mean_param(&self) -> f64 {
        self.jump_mean_param
    }

    pub fn levy_density(&self) -> Option<&LevyDensity> {
        self.levy_density.as_ref()
    }

    pub fn has_bounded_variation(&self) -> bool {
        self.sigma == 0.0
    }

    /// Effective drift `c = γ - ∫_{(-1,0)} z Π(dz)` for bounded-variation models.
    pub fn effective_drift(&self) -> Option<f64> {
        self.premium
    }

    /// `E[X_1] = ψ'(0+)`.
    pub fn mean(&self) -> f64 {
        match self.family {
            LevyFamily::BrownianDrift => self.gamma,
            LevyFamily::CramerLundbergExp => {
                self.premium.unwrap_or(self.gamma) - self.jump_rate / self.jump_mean_param
            }
            LevyFamily::GeneralNumeric => self.gamma + self.jumps.large_jump_moment(),
        }
    }

    /// Right limit of the scale function `W^{(q)}(0)` of the process with drift reduced by `delta`.
    pub fn scale_at_zero(&self, delta: f64) -> f64 {
        match self.premium {
            Some(c) if self.sigma == 0.0 => 1.0 / (c - delta),
            _ => 0.0,
        }
    }

    pub(crate) fn psi_complex(&self, s: Complex64) -> Complex64 {
        match self.family {
            LevyFamily::BrownianDrift => s * self.gamma + s * s * (0.5 * self.sigma * self.sigma),
            LevyFamily::CramerLundbergExp => {
                let c = self.premium.unwrap_or(self.gamma);
                s * c - s * self.jump_rate / (s + self.jump_mean_param)
            }
            LevyFamily::GeneralNumeric => {
                let diffusive = s * self.gamma + s * s * (0.5 * self.sigma * self.sigma);
                let density = self
                    .levy_density
                    .as_ref()
                    .expect("general model has a density");
                let jumps = if s.im == 0.0 {
                    Complex64::new(self.jumps.real_integral(s.re), 0.0)
                } else {
                    self.jumps.complex_integral(s, density)
                };
                diffusive + jumps
            }
        }
    }
}

/// Number of dyadic levels `[-2^{-k}, -2^{-k-1}]` used to resolve the density near the origin.
const DYADIC_LEVELS: usize = 44;

/// Precomputed quadrature of a Lévy density on `(-∞, 0)`.
#[derive(Debug, Clone, Default)]
struct JumpQuadrature {
    /// Per dyadic level on `(-1, 0)`: nodes `(z, weight * π(z))`.
    levels: Vec<Vec<(f64, f64)>>,
    /// Nodes for `(-∞, -1]` through the substitution `z = -1/u`.
    outer: Vec<(f64, f64)>,
    level_mass: Vec<f64>,
    level_moment: Vec<f64>,
    outer_mass: f64,
}

impl JumpQuadrature {
    fn new(density: &LevyDensity) -> Self {
        let rule = gl16();
        let mut levels = Vec::with_capacity(DYADIC_LEVELS);
        let mut hi: f64 = 1.0;
        for _ in 0..DYADIC_LEVELS {
            let lo = 0.5 * hi;
            let h = hi - lo;
            let nodes: Vec<(f64, f64)> = rule
                .0
                .iter()
                .zip(&rule.1)
                .map(|(x, w)| {
                    let z = -(lo + 0.5 * h * (x + 1.0));
                    (z, 0.5 * h * w * density.eval(z))
                })
                .collect();
            levels.push(nodes);
            hi = lo;
        }
        let mut outer = Vec::new();
        let mut hi: f64 = 1.0;
        for _ in 0..40 {
            let lo = 0.5 * hi;
            let h = hi - lo;
            for (x, w) in rule.0.iter().zip(&rule.1) {
                let u = lo + 0.5 * h * (x + 1.0);
                let z = -1.0 / u;
                outer.push((z, 0.5 * h * w * density.eval(z) / (u * u)));
            }
            hi = lo;
        }
        let level_mass = levels.iter().map(|l| l.iter().map(|n| n.1).sum()).collect();
        let level_moment = levels
            .iter()
            .map(|l| l.iter().map(|n| n.0 * n.1).sum())
            .collect();
        let outer_mass = outer.iter().map(|n| n.1).sum();
        JumpQuadrature {
            levels,
            outer,
            level_mass,
            level_moment,
            outer_mass,
        }
    }

    fn mass(&self) -> f64 {
        self.level_mass.iter().sum::<f64>() + self.outer_mass
    }

    fn small_jump_moment(&self) -> f64 {
        self.level_moment.iter().sum()
    }

    fn large_jump_moment(&self) -> f64 {
        self.outer.iter().map(|n| n.0 * n.1).sum()
    }

    /// `∫ (e^{sz} - 1 - sz 1{z > -1}) π(z) dz` for real `s >= 0`.
    fn real_integral(&self, s: f64) -> f64 {
        let mut total = 0.0;
        for level in &self.levels {
            for &(z, w) in level {
                total += ((s * z).exp_m1() - s * z) * w;
            }
        }
        for &(z, w) in &self.outer {
            total += (s * z).exp_m1() * w;
        }
        total
    }

    /// Same integral on the inversion contour (`Re s > 0`).
    ///
    /// Near the origin (`|sz| <= 1`) the integrand is smooth and uses the fixed
    /// nodes; further out `e^{sz}` oscillates and is integrated on panels no longer
    /// than one period, up to where `e^{Re(s) z}` has decayed below `e^{-40}`.
    /// The non-oscillating compensator terms there come from the fixed nodes.
    fn complex_integral(&self, s: Complex64, density: &LevyDensity) -> Complex64 {
        let k0 = (s.norm().log2().ceil().max(0.0) as usize).min(DYADIC_LEVELS);
        let mut total = Complex64::new(0.0, 0.0);
        for level in &self.levels[k0..] {
            for &(z, w) in level {
                let sz = s * z;
                total += (sz.exp() - 1.0 - sz) * w;
            }
        }
        let far_mass: f64 = self.level_mass[..k0].iter().sum::<f64>() + self.outer_mass;
        let far_moment: f64 = self.level_moment[..k0].iter().sum();
        total -= Complex64::new(far_mass, 0.0) + s * far_moment;

        let rule = gl16();
        let max_width = 2.0 * std::f64::consts::PI / s.im.abs().max(1.0);
        // beyond `cut` the factor |e^{sz}| is below e^{-40}
        let cut = 40.0 / s.re;
        let panel = |a: f64, b: f64, total: &mut Complex64| {
            let b = b.min(cut);
            if a >= b {
                return;
            }
            let n = ((b - a) / max_width).ceil().max(1.0) as usize;
            let h = (b - a) / n as f64;
            for p in 0..n {
                let lo = a + p as f64 * h;
                for (x, w) in rule.0.iter().zip(&rule.1) {
                    let z = -(lo + 0.5 * h * (x + 1.0));
                    *total += (s * z).exp() * (0.5 * h * w * density.eval(z));
                }
            }
        };
        let mut hi: f64 = 1.0;
        let mut bands = Vec::new();
        for _ in 0..k0 {
            bands.push((0.5 * hi, hi));
            hi *= 0.5;
        }
        for (a, b) in bands {
            panel(a, b, &mut total);
        }
        panel(1.0, f64::INFINITY, &mut total);
        total
    }
}

/// `ψ_X(θ)` for `θ >= 0`.
pub fn laplace_exponent(model: &LevyModel, theta: f64) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(Error::Domain(format!(
            "Laplace exponent needs theta >= 0, got {theta}"
        )));
    }
    Ok(model.psi_complex(Complex64::new(theta, 0.0)).re)
}

/// `ψ_Y(θ) = ψ_X(θ) - δθ` for the refracted process.
pub fn laplace_exponent_refracted(model: &LevyModel, delta: f64, theta: f64) -> Result<f64> {
    check_refraction(model, delta)?;
    Ok(laplace_exponent(model, theta)? - delta * theta)
}

fn check_refraction(model: &LevyModel, delta: f64) -> Result<()> {
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!(
            "dividend rate must be >= 0, got {delta}"
        )));
    }
    if let Some(c) = model.effective_drift() {
        if model.has_bounded_variation() && c <= delta {
            return Err(Error::assumption(
                "drift_exceeds_dividend_rate",
                format!("bounded-variation drift c = {c} must exceed dividend rate {delta}"),
            ));
        }
    }
    Ok(())
}

/// Largest root of `ψ(θ) = q` for `X` (`Φ(q)`) or for `Y = X - δt` (`φ(q)`).
pub fn right_inverse(model: &LevyModel, delta: f64, q: f64, which: Process) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::Domain(format!("right inverse needs q > 0, got {q}")));
    }
    let d = match which {
        Process::X => 0.0,
        Process::Y => {
            check_refraction(model, delta)?;
            delta
        }
    };
    let fail = || {
        Error::Numerical(format!(
            "no root of psi(theta) - {d} theta = {q} found for {:?} model",
            model.family
        ))
    };
    match model.family {
        LevyFamily::BrownianDrift => {
            let s2 = 0.5 * model.sigma * model.sigma;
            quadratic_roots(s2, model.gamma - d, -q)
                .map(|r| r.0)
                .ok_or_else(fail)
        }
        LevyFamily::CramerLundbergExp => {
            let c = model.premium.unwrap_or(model.gamma) - d;
            let mu = model.jump_mean_param;
            quadratic_roots(c, c * mu - model.jump_rate - q, -q * mu)
                .map(|r| r.0)
                .ok_or_else(fail)
        }
        LevyFamily::GeneralNumeric => {
            let f = |t: f64| model.psi_complex(Complex64::new(t, 0.0)).re - d * t - q;
            let mut hi = 1.0;
            let mut grown = 0;
            while f(hi) <= 0.0 {
                hi *= 2.0;
                grown += 1;
                if grown > 200 || !hi.is_finite() {
                    return Err(fail());
                }
            }
            let eps = 1e-7;
            newton_bisect(
                |t| {
                    let h = eps * t.max(1.0);
                    (f(t), (f(t + h) - f(t - h)) / (2.0 * h))
                },
                0.0,
                hi,
                1e-13,
            )
            .ok_or_else(fail)
        }
    }
}

/// Law of the jump `J_ij <= 0` applied to the surplus at a regime switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpLaw {
    Zero,
    /// `J = -size` with `size >= 0`.
    PointMass {
        size: f64,
    },
    /// `-J` exponential with the given rate.
    Exponential {
        rate: f64,
    },
}

impl JumpLaw {
    /// `E[-J]`.
    pub fn mean_size(&self) -> f64 {
        match *self {
            JumpLaw::Zero => 0.0,
            JumpLaw::PointMass { size } => size,
            JumpLaw::Exponential { rate } => 1.0 / rate,
        }
    }
}

/// A finite-state Markov-modulated model.
#[derive(Debug, Clone)]
pub struct RegimeModel {
    pub names: Vec<String>,
    pub generator: Vec<Vec<f64>>,
    pub levy: Vec<LevyModel>,
    pub delta: Vec<f64>,
    pub discount: Vec<f64>,
    pub switch_jumps: Vec<Vec<JumpLaw>>,
    pub beta: f64,
}

impl RegimeModel {
    pub fn n_states(&self) -> usize {
        self.levy.len()
    }

    /// Total switching intensity `q_i` out of state `i`.
    pub fn leave_rate(&self, i: usize) -> f64 {
        self.generator[i]
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| q)
            .sum()
    }

    /// `max_i q_i / (q_i + r(i))`, the contraction modulus of the value-iteration operators.
    pub fn contraction_factor(&self) -> f64 {
        (0..self.n_states())
            .map(|i| {
                let q = self.leave_rate(i);
                q / (q + self.discount[i])
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// First failing check as an error, if any.
    pub fn into_result(self) -> Result<()> {
        match self.checks.into_iter().find(|c| !c.passed) {
            Some(c) => Err(Error::Assumption {
                name: c.name,
                reason: c.reason,
            }),
            None => Ok(()),
        }
    }

    fn push(&mut self, name: &str, passed: bool, reason: String) {
        self.checks.push(CheckOutcome {
            name: name.to_string(),
            passed,
            reason,
        });
    }
}

/// Checks every standing assumption of the regime-switching problem. Never fails; inspect the report.
pub fn validate(regime: &RegimeModel) -> ValidationReport {
    let mut report = ValidationReport { checks: Vec::new() };
    let n = regime.n_states();

    let shapes_ok = n > 0
        && regime.names.len() == n
        && regime.delta.len() == n
        && regime.discount.len() == n
        && regime.generator.len() == n
        && regime.generator.iter().all(|row| row.len() == n)
        && regime.switch_jumps.len() == n
        && regime.switch_jumps.iter().all(|row| row.len() == n);
    report.push(
        "dimensions",
        shapes_ok,
        if shapes_ok {
            format!("{n} states")
        } else {
            "state names, rates, generator and jump table must all have one entry per state".into()
        },
    );
    if !shapes_ok {
        return report;
    }

    let beta_ok = regime.beta > 1.0 && regime.beta.is_finite();
    report.push(
        "injection_cost_exceeds_one",
        beta_ok,
        if beta_ok {
            format!("beta = {}", regime.beta)
        } else {
            format!("beta must exceed 1 (got {})", regime.beta)
        },
    );

    let mut gen_problems = Vec::new();
    for (i, row) in regime.generator.iter().enumerate() {
        let mut sum = 0.0;
        for (j, &q) in row.iter().enumerate() {
            if !q.is_finite() {
                gen_problems.push(format!("Q[{i}][{j}] is not finite"));
            }
            if i != j && q < 0.0 {
                gen_problems.push(format!("Q[{i}][{j}] = {q} is negative"));
            }
            sum += q;
        }
        let scale = row.iter().map(|q| q.abs()).fold(1.0, f64::max);
        if sum.abs() > 1e-10 * scale {
            gen_problems.push(format!("row {i} sums to {sum}"));
        }
    }
    report.push(
        "generator_matrix",
        gen_problems.is_empty(),
        if gen_problems.is_empty() {
            "off-diagonal rates nonnegative, rows sum to zero".into()
        } else {
            gen_problems.join("; ")
        },
    );

    let bad_r: Vec<String> = regime
        .discount
        .iter()
        .enumerate()
        .filter(|(_, &r)| !(r > 0.0 && r.is_finite()))
        .map(|(i, r)| format!("r({i}) = {r}"))
        .collect();
    report.push(
        "positive_discount",
        bad_r.is_empty(),
        if bad_r.is_empty() {
            "all discount rates positive".into()
        } else {
            format!("discount rates must be positive: {}", bad_r.join(", "))
        },
    );

    let bad_delta: Vec<String> = regime
        .delta
        .iter()
        .enumerate()
        .filter(|(_, &d)| !(d >= MIN_DELTA && d.is_finite()))
        .map(|(i, d)| format!("delta({i}) = {d}"))
        .collect();
    report.push(
        "dividend_rate_positive",
        bad_delta.is_empty(),
        if bad_delta.is_empty() {
            format!("all dividend rates at least {MIN_DELTA:e}")
        } else {
            format!(
                "dividend rates must be at least {MIN_DELTA:e}: {}",
                bad_delta.join(", ")
            )
        },
    );

    let bad_mean: Vec<String> = regime
        .levy
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.mean().is_finite())
        .map(|(i, m)| format!("state {i}: mean {}", m.mean()))
        .collect();
    report.push(
        "finite_mean",
        bad_mean.is_empty(),
        if bad_mean.is_empty() {
            "every state has E[X_1] > -inf".into()
        } else {
            bad_mean.join("; ")
        },
    );

    let mut jump_problems = Vec::new();
    for (i, row) in regime.switch_jumps.iter().enumerate() {
        for (j, law) in row.iter().enumerate() {
            let ok = match *law {
                JumpLaw::Zero => true,
                JumpLaw::PointMass { size } => size >= 0.0 && size.is_finite(),
                JumpLaw::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            };
            if !ok {
                jump_problems.push(format!(
                    "J[{i}][{j}] = {law:?} has no finite nonnegative mean size"
                ));
            }
        }
    }
    report.push(
        "finite_switch_jump_mean",
        jump_problems.is_empty(),
        if jump_problems.is_empty() {
            "max E[-J_ij] finite".into()
        } else {
            jump_problems.join("; ")
        },
    );

    let mut drift_problems = Vec::new();
    for (i, m) in regime.levy.iter().enumerate() {
        if m.has_bounded_variation() {
            if let Some(c) = m.effective_drift() {
                if c <= regime.delta[i] {
                    drift_problems.push(format!(
                        "state {i}: drift c = {c} does not exceed dividend rate {}",
                        regime.delta[i]
                    ));
                }
            }
        }
    }
    report.push(
        "drift_exceeds_dividend_rate",
        drift_problems.is_empty(),
        if drift_problems.is_empty() {
            "c(i) > delta(i) for every bounded-variation state".into()
        } else {
            drift_problems.join("; ")
        },
    );

    report
}

/// The exponential-horizon problem: maximize discounted (at `q`) dividends minus
/// `β` times injections plus `e^{-qζ} w(U(ζ))`, with `ζ ~ Exp(r)`.
#[derive(Debug, Clone)]
pub struct AuxiliaryProblem {
    pub(crate) model: LevyModel,
    pub(crate) delta: f64,
    pub(crate) beta: f64,
    pub(crate) q: f64,
    pub(crate) r: f64,
    pub(crate) payoff: PayoffFunction,
}

impl AuxiliaryProblem {
    /// Validates the model-side assumptions. `r = 0` is allowed and means no
    /// exponential horizon (the terminal payoff then never matters).
    pub fn new(
        model: LevyModel,
        delta: f64,
        beta: f64,
        q: f64,
        r: f64,
        payoff: PayoffFunction,
    ) -> Result<Self> {
        if !(beta > 1.0) || !beta.is_finite() {
            return Err(Error::assumption(
                "injection_cost_exceeds_one",
                format!("beta must exceed 1 (got {beta})"),
            ));
        }
        if !(delta >= MIN_DELTA) || !delta.is_finite() {
            return Err(Error::assumption(
                "dividend_rate_positive",
                format!("dividend rate must be at least {MIN_DELTA:e} (got {delta})"),
            ));
        }
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::assumption(
                "positive_discount",
                format!("discount rate must be positive (got {q})"),
            ));
        }
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!(
                "horizon rate must be >= 0 (got {r})"
            )));
        }
        check_refraction(&model, delta)?;
        if !model.mean().is_finite() {
            return Err(Error::assumption("finite_mean", "E[X_1] must be finite"));
        }
        Ok(AuxiliaryProblem {
            model,
            delta,
            beta,
            q,
            r,
            payoff,
        })
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn alpha(&self) -> f64 {
        self.q + self.r
    }

    pub fn payoff(&self) -> &PayoffFunction {
        &self.payoff
    }

    /// Whether the payoff is concave with `w'(0+) <= β` and `w'(∞) ∈ [0, 1]`,
    /// which the threshold optimization requires.
    pub fn check_payoff(&self) -> Result<()> {
        self.payoff.check_admissible(self.beta)
    }
}

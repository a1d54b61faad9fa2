//! Markov-modulated problem: the lifted payoff, the one-epoch operators `T_b`
//! and `Θ`, and the contraction iteration for the value function.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy_model::{right_inverse, validate, AuxiliaryProblem, JumpLaw, Process, RegimeModel};
use crate::payoff::{PayoffFunction, CONCAVITY_TOL};
use crate::scale_functions::ScaleFunctionSet;
use crate::single_regime::{optimal_threshold_with, BarrierNpv, Side, ThresholdOptions};

/// Per-state functions sampled on a shared grid, linear in between and with a
/// linear tail beyond the last grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueFunction {
    grid: Vec<f64>,
    values: Vec<Vec<f64>>,
    tail_slopes: Vec<f64>,
}

impl ValueFunction {
    pub fn new(grid: Vec<f64>, values: Vec<Vec<f64>>, tail_slopes: Vec<f64>) -> Result<Self> {
        if grid.first() != Some(&0.0) || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(
                "grid must start at 0 and be strictly increasing".into(),
            ));
        }
        if values.len() != tail_slopes.len() || values.iter().any(|v| v.len() != grid.len()) {
            return Err(Error::Domain(format!(
                "need one value vector of length {} and one tail slope per state",
                grid.len()
            )));
        }
        if values
            .iter()
            .flatten()
            .chain(&tail_slopes)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Domain(
                "values and tail slopes must be finite".into(),
            ));
        }
        Ok(ValueFunction {
            grid,
            values,
            tail_slopes,
        })
    }

    pub fn constant(grid: Vec<f64>, n_states: usize, c: f64) -> Result<Self> {
        let values = vec![vec![c; grid.len()]; n_states];
        Self::new(grid, values, vec![0.0; n_states])
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn tail_slope(&self, i: usize) -> f64 {
        self.tail_slopes[i]
    }

    pub fn n_states(&self) -> usize {
        self.values.len()
    }

    pub fn x_max(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// `f(x, i)`; arguments below zero are clamped to zero.
    pub fn eval(&self, i: usize, x: f64) -> f64 {
        let x = x.max(0.0);
        let g = &self.grid;
        let v = &self.values[i];
        let n = g.len();
        if x >= g[n - 1] {
            return v[n - 1] + self.tail_slopes[i] * (x - g[n - 1]);
        }
        let k = g.partition_point(|&t| t <= x) - 1;
        v[k] + (v[k + 1] - v[k]) * (x - g[k]) / (g[k + 1] - g[k])
    }

    /// State `i` as a payoff function on the same knots.
    pub fn as_payoff(&self, i: usize) -> PayoffFunction {
        PayoffFunction::new(
            self.grid.clone(),
            self.values[i].clone(),
            self.tail_slopes[i],
        )
        .expect("value functions hold validated grids")
    }

    /// The same functions resampled on another grid.
    pub fn resample(&self, grid: Vec<f64>) -> Result<Self> {
        let values = (0..self.n_states())
            .map(|i| grid.iter().map(|&x| self.eval(i, x)).collect())
            .collect();
        Self::new(grid, values, self.tail_slopes.clone())
    }

    /// `max_i sup_x |f(x,i) - g(x,i)|` over the grid points of both functions.
    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n_states().min(other.n_states()) {
            for &x in self.grid.iter().chain(&other.grid) {
                d = d.max((self.eval(i, x) - other.eval(i, x)).abs());
            }
        }
        d
    }

    /// Largest increase of consecutive grid slopes over all states.
    pub fn concavity_violation(&self) -> f64 {
        (0..self.n_states())
            .map(|i| self.as_payoff(i).concavity_violation())
            .fold(0.0, f64::max)
    }
}

/// Refraction threshold for every state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdVector {
    pub b: Vec<f64>,
}

/// `n` equally spaced points on `[0, x_max]`.
pub fn uniform_grid(x_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|k| x_max * k as f64 / (n - 1) as f64).collect()
}

/// Value of state `j`'s function after a switch jump of law `law` from level `x`,
/// with an immediate injection when the jump overshoots zero.
fn lifted_knots(f: &ValueFunction, law: JumpLaw) -> Vec<f64> {
    let g = f.grid();
    match law {
        JumpLaw::Zero => g.to_vec(),
        JumpLaw::PointMass { size } => g.iter().flat_map(|&x| [x, x + size]).collect(),
        JumpLaw::Exponential { rate } => {
            // past the grid the lift approaches a line at rate `rate`
            let mut out = g.to_vec();
            let h = g[1] - g[0];
            let mut step = h;
            let end = f.x_max() + 36.0 / rate;
            while f.x_max() + step < end {
                out.push(f.x_max() + step);
                step *= 1.5;
            }
            out.push(end);
            out
        }
    }
}

/// `E[f(x + J, j)]` with the injection branch `β(x + J) + f(0, j)` on `{x + J < 0}`,
/// at sorted knots `xs`.
fn jump_average(f: &ValueFunction, j: usize, law: JumpLaw, beta: f64, xs: &[f64]) -> Vec<f64> {
    let f0 = f.eval(j, 0.0);
    match law {
        JumpLaw::Zero => xs.iter().map(|&x| f.eval(j, x)).collect(),
        JumpLaw::PointMass { size } => xs
            .iter()
            .map(|&x| {
                if x >= size {
                    f.eval(j, x - size)
                } else {
                    beta * (x - size) + f0
                }
            })
            .collect(),
        JumpLaw::Exponential { rate } => {
            // I(x) = ∫_0^x f(u) η e^{-η(x-u)} du, exact for f linear between knots;
            // `xs` contains every grid point of f.
            let mut out = Vec::with_capacity(xs.len());
            let mut acc = 0.0;
            let mut prev = 0.0;
            for &x in xs {
                let h = x - prev;
                if h > 0.0 {
                    let fa = f.eval(j, prev);
                    let s = (f.eval(j, x) - fa) / h;
                    let decay = (-rate * h).exp();
                    let one_minus = -(-rate * h).exp_m1();
                    acc = decay * acc + fa * one_minus + s * (h - one_minus / rate);
                }
                prev = x;
                out.push(acc + (-rate * x).exp() * (f0 - beta / rate));
            }
            out
        }
    }
}

/// Merges knots closer than `tol` so that slopes stay well conditioned.
fn merge_knots(mut xs: Vec<f64>, tol: f64) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(xs.len());
    for x in xs {
        match out.last() {
            Some(&last) if x - last <= tol => {}
            _ => out.push(x),
        }
    }
    out
}

/// `f̃(·, i)`: the expected post-switch value of `f` when leaving state `i`.
///
/// Exact at the knots for point-mass and exponential jump laws. An absorbing
/// state has no switches and gets the zero payoff.
pub fn lift_payoff(regime: &RegimeModel, f: &ValueFunction, i: usize) -> Result<PayoffFunction> {
    let n = regime.n_states();
    if i >= n || f.n_states() != n {
        return Err(Error::Domain(format!(
            "state {i} / function with {} states for a {n}-state model",
            f.n_states()
        )));
    }
    let q_i = regime.leave_rate(i);
    if q_i == 0.0 {
        return Ok(PayoffFunction::zero());
    }
    let targets: Vec<(usize, f64, JumpLaw)> = (0..n)
        .filter(|&j| j != i && regime.generator[i][j] > 0.0)
        .map(|j| (j, regime.generator[i][j] / q_i, regime.switch_jumps[i][j]))
        .collect();
    let h = f.grid()[1] - f.grid()[0];
    let knots = merge_knots(
        targets
            .iter()
            .flat_map(|&(_, _, law)| lifted_knots(f, law))
            .collect(),
        1e-9 * h,
    );
    let mut values = vec![0.0; knots.len()];
    let mut tail = 0.0;
    for &(j, p, law) in &targets {
        let part = jump_average(f, j, law, regime.beta, &knots);
        for (v, a) in values.iter_mut().zip(part) {
            *v += p * a;
        }
        tail += p * f.tail_slope(j);
    }
    PayoffFunction::new(knots, values, tail)
}

/// Options for one `Θ` step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaOptions {
    /// Concavity violations of the lifted payoff above this are projected away.
    pub projection_tol: f64,
    /// Violations above this mean the input is not in the admissible class.
    pub membership_tol: f64,
    pub threshold: ThresholdOptions,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        ThetaOptions {
            projection_tol: CONCAVITY_TOL,
            membership_tol: 1e-6,
            threshold: ThresholdOptions::default(),
        }
    }
}

/// Lifted payoff projected onto the admissible class, with the violation found.
fn admissible_lift(
    regime: &RegimeModel,
    f: &ValueFunction,
    i: usize,
    opts: &ThetaOptions,
) -> Result<(PayoffFunction, f64)> {
    let beta = regime.beta;
    let raw = lift_payoff(regime, f, i)?;
    let violation = raw.concavity_violation();
    let scale = 1.0 + beta;
    if violation > opts.membership_tol * scale {
        return Err(Error::assumption(
            "lifted_payoff_concave",
            format!("lifted payoff of state {i} has slope increases up to {violation:e}"),
        ));
    }
    let projected = if violation > opts.projection_tol * scale {
        raw.concave_majorant()
    } else {
        raw
    };
    Ok((projected.clip_slopes(0.0, beta, 1.0), violation))
}

/// The single-regime problem solved in state `i` over one regime epoch: discount
/// `r(i)`, horizon rate `q_i` and terminal payoff `w`.
pub fn epoch_problem(
    regime: &RegimeModel,
    i: usize,
    payoff: PayoffFunction,
) -> Result<AuxiliaryProblem> {
    AuxiliaryProblem::new(
        regime.levy[i].clone(),
        regime.delta[i],
        regime.beta,
        regime.discount[i],
        regime.leave_rate(i),
        payoff,
    )
}

fn sample(e: &BarrierNpv<'_>, grid: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let b = e.threshold();
    let values = grid.iter().map(|&x| e.value(x)).collect();
    let slopes = grid
        .iter()
        .map(|&x| {
            if x == b || x == 0.0 {
                e.derivative_limit(x, if x == 0.0 { Side::Right } else { Side::Left })
            } else {
                e.derivative(x).expect("grid point off 0 and the threshold")
            }
        })
        .collect();
    let tail = e
        .derivative_limit(*grid.last().unwrap(), Side::Left)
        .clamp(0.0, 1.0);
    (values, slopes, tail)
}

/// `T_b f`: value of one regime epoch under thresholds `b`, continued by `f`
/// after the switch. Sampled on `f`'s grid.
pub fn apply_t(
    regime: &RegimeModel,
    b: &ThresholdVector,
    f: &ValueFunction,
) -> Result<ValueFunction> {
    let n = regime.n_states();
    if b.b.len() != n {
        return Err(Error::Domain(format!(
            "need {n} thresholds, got {}",
            b.b.len()
        )));
    }
    let grid = f.grid();
    let per_state: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let prob = epoch_problem(regime, i, lift_payoff(regime, f, i)?)?;
            let e = BarrierNpv::new(&prob, b.b[i])?;
            let (v, _, tail) = sample(&e, grid);
            Ok((v, tail))
        })
        .collect::<Result<_>>()?;
    let (values, tails) = per_state.into_iter().unzip();
    ValueFunction::new(grid.to_vec(), values, tails)
}

/// Result of one `Θ` step.
#[derive(Debug, Clone, Serialize)]
pub struct ThetaStep {
    pub value: ValueFunction,
    pub thresholds: ThresholdVector,
    /// `∂_x Θf(x, i)` on the grid.
    pub derivatives: Vec<Vec<f64>>,
    /// Largest concavity violation of the lifted payoffs before projection.
    pub lift_violation: f64,
}

/// `(Θf, b^f)`: per state, the optimal threshold for the lifted problem and its value.
pub fn apply_theta(
    regime: &RegimeModel,
    f: &ValueFunction,
) -> Result<(ValueFunction, ThresholdVector)> {
    apply_theta_with(regime, f, &ThetaOptions::default()).map(|s| (s.value, s.thresholds))
}

pub fn apply_theta_with(
    regime: &RegimeModel,
    f: &ValueFunction,
    opts: &ThetaOptions,
) -> Result<ThetaStep> {
    let n = regime.n_states();
    if f.n_states() != n {
        return Err(Error::Domain(format!(
            "function has {} states, model has {n}",
            f.n_states()
        )));
    }
    let grid = f.grid();
    let per_state: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (payoff, violation) = admissible_lift(regime, f, i, opts)?;
            let prob = epoch_problem(regime, i, payoff)?;
            let sol = optimal_threshold_with(&prob, opts.threshold)?;
            let (v, d, tail) = sample(&sol.evaluator(), grid);
            Ok((v, d, tail, sol.b_star, violation))
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(n);
    let mut derivatives = Vec::with_capacity(n);
    let mut tails = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut lift_violation: f64 = 0.0;
    for (v, d, t, bs, viol) in per_state {
        values.push(v);
        derivatives.push(d);
        tails.push(t);
        b.push(bs);
        lift_violation = lift_violation.max(viol);
    }
    Ok(ThetaStep {
        value: ValueFunction::new(grid.to_vec(), values, tails)?,
        thresholds: ThresholdVector { b },
        derivatives,
        lift_violation,
    })
}

/// A priori bounds `V_- < V < V_+`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueBounds {
    pub lower: f64,
    pub upper: f64,
}

/// `V_+ = max δ / min r`; `V_-` is `-β` times the largest discounted cost of
/// reflecting `X^i - δ_+ t` at zero (closed form), plus the cost of switch
/// jumps over all regime epochs.
pub fn value_bounds(regime: &RegimeModel) -> Result<ValueBounds> {
    validate(regime).into_result()?;
    let n = regime.n_states();
    let delta_plus = regime.delta.iter().copied().fold(0.0, f64::max);
    let r_minus = regime
        .discount
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let mut reflection: f64 = 0.0;
    for m in &regime.levy {
        // E_0[∫ e^{-rt} dR] = 1/Φ(r) - ψ'(0+)/r for the process reflected at its infimum
        let inv_phi = match right_inverse(m, delta_plus, r_minus, Process::Y) {
            Ok(phi) => 1.0 / phi,
            // a nonincreasing process: every downward move is injected
            Err(Error::Assumption { .. }) => 0.0,
            Err(e) => return Err(e),
        };
        reflection = reflection.max(inv_phi - (m.mean() - delta_plus) / r_minus);
    }
    let rho = regime.contraction_factor();
    let jump = (0..n)
        .flat_map(|i| regime.switch_jumps[i].iter().map(|l| l.mean_size()))
        .fold(0.0, f64::max);
    let jump_cost = if rho < 1.0 {
        jump * rho / (1.0 - rho)
    } else {
        0.0
    };
    Ok(ValueBounds {
        lower: -regime.beta * (reflection + jump_cost),
        upper: delta_plus / r_minus,
    })
}

/// Starting point of the value iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Initialization {
    Zero,
    Upper,
    Lower,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Target sup-norm distance to the fixed point.
    pub tol: f64,
    pub max_iter: usize,
    pub grid_points: usize,
    /// Fixed right end of the grid; chosen and expanded automatically when `None`.
    pub x_max: Option<f64>,
    pub init: Initialization,
    pub theta: ThetaOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-6,
            max_iter: 1000,
            grid_points: 801,
            x_max: None,
            init: Initialization::Zero,
            theta: ThetaOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖v_n - v_{n-1}‖`
    pub step: f64,
    pub thresholds: Vec<f64>,
    pub x_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeSolution {
    pub value: ValueFunction,
    pub thresholds: ThresholdVector,
    /// `∂_x V(x, i)` on the grid, from the last step's closed form.
    pub derivatives: Vec<Vec<f64>>,
    pub trace: Vec<IterationRecord>,
    pub contraction_factor: f64,
    /// Stop once a step is below this; guarantees distance `tol` to the fixed point.
    pub stopping_step: f64,
    pub bounds: ValueBounds,
    /// States without switches, solved as plain infinite-horizon problems.
    pub absorbing_states: Vec<usize>,
}

impl RegimeSolution {
    /// `‖T_{b*} V - V‖`.
    pub fn fixed_point_residual(&self, regime: &RegimeModel) -> Result<f64> {
        Ok(apply_t(regime, &self.thresholds, &self.value)?.sup_distance(&self.value))
    }
}

/// Length scale over which the slope of the epoch value settles, per state.
fn settling_length(regime: &RegimeModel, i: usize) -> Result<f64> {
    let alpha = regime.discount[i] + regime.leave_rate(i);
    let set = ScaleFunctionSet::build(&regime.levy[i], regime.delta[i], alpha)?;
    let slowest = set
        .exp_sum(Process::Y)
        .and_then(|s| {
            s.terms()
                .iter()
                .map(|t| t.1)
                .filter(|&t| t < 0.0)
                .reduce(f64::max)
        })
        .map_or(set.phi(Process::Y), f64::abs);
    Ok(1.0 / slowest)
}

fn initial_function(
    regime: &RegimeModel,
    grid: Vec<f64>,
    init: Initialization,
    bounds: &ValueBounds,
) -> Result<ValueFunction> {
    let c = match init {
        Initialization::Zero => 0.0,
        Initialization::Upper => bounds.upper,
        Initialization::Lower => bounds.lower,
        Initialization::Constant(c) => c,
    };
    ValueFunction::constant(grid, regime.n_states(), c)
}

/// Iterates `v_{n+1} = Θ v_n` from a constant until the step is below
/// `tol (1 - ρ) / ρ`, `ρ` the contraction factor.
pub fn solve(regime: &RegimeModel, opts: &SolveOptions) -> Result<RegimeSolution> {
    validate(regime).into_result()?;
    let n = regime.n_states();
    let bounds = value_bounds(regime)?;
    let rho = regime.contraction_factor();
    let stopping_step = if rho > 0.0 {
        opts.tol * (1.0 - rho) / rho
    } else {
        f64::INFINITY
    };
    let absorbing_states: Vec<usize> = (0..n).filter(|&i| regime.leave_rate(i) == 0.0).collect();

    let (mut v, auto) = match opts.x_max {
        Some(x_max) => (
            initial_function(
                regime,
                uniform_grid(x_max, opts.grid_points),
                opts.init,
                &bounds,
            )?,
            false,
        ),
        None => {
            let mut floor: f64 = 1.0;
            for i in 0..n {
                floor = floor.max(15.0 * settling_length(regime, i)?);
            }
            let probe = initial_function(
                regime,
                uniform_grid(floor, opts.grid_points),
                opts.init,
                &bounds,
            )?;
            let b = apply_theta_with(regime, &probe, &opts.theta)?.thresholds.b;
            let x_max = floor.max(6.0 * b.iter().copied().fold(0.0, f64::max));
            (
                initial_function(
                    regime,
                    uniform_grid(x_max, opts.grid_points),
                    opts.init,
                    &bounds,
                )?,
                true,
            )
        }
    };

    let mut trace = Vec::new();
    for iteration in 1..=opts.max_iter {
        let step = apply_theta_with(regime, &v, &opts.theta)?;
        let b_max = step.thresholds.b.iter().copied().fold(0.0, f64::max);
        if auto && b_max > 0.5 * v.x_max() {
            let x_max = (2.0 * v.x_max()).max(6.0 * b_max);
            v = v.resample(uniform_grid(x_max, opts.grid_points))?;
            trace.push(IterationRecord {
                iteration,
                step: f64::NAN,
                thresholds: step.thresholds.b,
                x_max,
            });
            continue;
        }
        let diff = step.value.sup_distance(&v);
        trace.push(IterationRecord {
            iteration,
            step: diff,
            thresholds: step.thresholds.b.clone(),
            x_max: v.x_max(),
        });
        v = step.value;
        if diff < stopping_step {
            return Ok(RegimeSolution {
                value: v,
                thresholds: step.thresholds,
                derivatives: step.derivatives,
                trace,
                contraction_factor: rho,
                stopping_step,
                bounds,
                absorbing_states,
            });
        }
    }
    let tail: Vec<f64> = trace.iter().rev().take(5).map(|r| r.step).collect();
    Err(Error::Numerical(format!(
        "value iteration did not reach step {stopping_step:e} in {} iterations; last steps {tail:?}",
        opts.max_iter
    )))
}

/// Lower and upper iterations run in lockstep from `V_-` and `V_+`.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope {
    pub lower: ValueFunction,
    pub upper: ValueFunction,
    /// `max_n max_{x,i} (v_n^-(x,i) - v_n^+(x,i))`; nonpositive when the order holds.
    pub worst_order_violation: f64,
    pub iterations: usize,
    pub final_gap: f64,
}

/// Runs `Θ` from both constant bounds on a fixed grid until the two iterates
/// are within `tol` of each other.
pub fn solve_envelope(
    regime: &RegimeModel,
    grid: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<Envelope> {
    let bounds = value_bounds(regime)?;
    let opts = ThetaOptions::default();
    let mut lower = ValueFunction::constant(grid.clone(), regime.n_states(), bounds.lower)?;
    let mut upper = ValueFunction::constant(grid, regime.n_states(), bounds.upper)?;
    let mut worst = f64::NEG_INFINITY;
    for iteration in 1..=max_iter {
        lower = apply_theta_with(regime, &lower, &opts)?.value;
        upper = apply_theta_with(regime, &upper, &opts)?.value;
        for i in 0..regime.n_states() {
            for (a, b) in lower.values(i).iter().zip(upper.values(i)) {
                worst = worst.max(a - b);
            }
        }
        let gap = upper.sup_distance(&lower);
        if gap < tol {
            return Ok(Envelope {
                lower,
                upper,
                worst_order_violation: worst,
                iterations: iteration,
                final_gap: gap,
            });
        }
    }
    Err(Error::Numerical(format!(
        "envelope iteration did not close to {tol:e} in {max_iter} iterations"
    )))
}

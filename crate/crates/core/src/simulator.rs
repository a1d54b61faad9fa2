//! Monte-Carlo estimates of threshold strategies, independent of the
//! scale-function analytics.
//!
//! Compound-Poisson surplus paths are simulated exactly. Brownian paths use
//! constant-drift steps that are exact away from the threshold: the step length
//! adapts to the distance from `b`, and reflection at zero uses the exact
//! running minimum of the Brownian bridge over each step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy_model::{validate, AuxiliaryProblem, JumpLaw, LevyFamily, LevyModel, RegimeModel};
use crate::payoff::PayoffFunction;
use crate::regime_switching::{value_bounds, ThresholdVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathConfig {
    /// Brownian step used near the threshold and near zero.
    pub dt: f64,
    /// Time cap; `None` picks one where the discounted remainder is below 1e-8 of the bound.
    pub horizon: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub antithetic: bool,
    /// Sample the running minimum within each Brownian step instead of
    /// reflecting only at step ends.
    pub exact_reflection: bool,
    pub keep_paths: bool,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            dt: 1e-3,
            horizon: None,
            n_paths: 100_000,
            seed: 0,
            antithetic: true,
            exact_reflection: true,
            keep_paths: false,
        }
    }
}

/// Discounted totals of one path.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PathOutcome {
    pub dividends: f64,
    pub injections: f64,
    pub payoff: f64,
}

impl PathOutcome {
    fn npv(&self, beta: f64) -> f64 {
        self.dividends - beta * self.injections + self.payoff
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NpvEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub dividends: f64,
    /// Mean discounted injected capital, before the factor `β`.
    pub injections: f64,
    pub payoff: f64,
    pub horizon: f64,
    /// Bound on the discounted value left after the horizon.
    pub truncation_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<PathOutcome>>,
}

/// Random source for one path; the antithetic partner mirrors every draw.
struct Draws {
    rng: ChaCha8Rng,
    mirror: bool,
}

impl Draws {
    fn new(seed: u64, stream: u64, mirror: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Draws { rng, mirror }
    }

    /// Uniform on `(0, 1]`.
    fn uniform(&mut self) -> f64 {
        let u: f64 = self.rng.random();
        if self.mirror {
            u.max(f64::MIN_POSITIVE)
        } else {
            1.0 - u
        }
    }

    fn normal(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        if self.mirror {
            -z
        } else {
            z
        }
    }

    fn exponential(&mut self, rate: f64) -> f64 {
        -self.uniform().ln() / rate
    }
}

#[derive(Debug, Clone, Copy)]
enum Dynamics {
    Brownian {
        gamma: f64,
        sigma: f64,
    },
    Claims {
        premium: f64,
        rate: f64,
        size_rate: f64,
    },
}

impl Dynamics {
    fn of(model: &LevyModel) -> Result<Self> {
        match model.family() {
            LevyFamily::BrownianDrift => Ok(Dynamics::Brownian {
                gamma: model.gamma(),
                sigma: model.sigma(),
            }),
            LevyFamily::CramerLundbergExp => Ok(Dynamics::Claims {
                premium: model
                    .effective_drift()
                    .expect("compound Poisson models have a premium"),
                rate: model.jump_rate(),
                size_rate: model.jump_mean_param(),
            }),
            LevyFamily::GeneralNumeric => Err(Error::Unsupported(
                "simulation covers the Brownian and compound-Poisson families only".into(),
            )),
        }
    }
}

/// Refracted-reflected dynamics in one regime.
#[derive(Debug, Clone, Copy)]
struct Epoch {
    dynamics: Dynamics,
    delta: f64,
    b: f64,
    discount: f64,
}

/// `∫_0^s e^{-qt} dt`.
fn annuity(q: f64, s: f64) -> f64 {
    if q * s < 1e-8 {
        s * (1.0 - 0.5 * q * s)
    } else {
        -(-q * s).exp_m1() / q
    }
}

struct PathState {
    u: f64,
    /// Discount factor at the current time.
    disc: f64,
    out: PathOutcome,
}

impl Epoch {
    fn run(&self, st: &mut PathState, duration: f64, cfg: &PathConfig, rng: &mut Draws) {
        match self.dynamics {
            Dynamics::Claims {
                premium,
                rate,
                size_rate,
            } => self.run_claims(st, duration, premium, rate, size_rate, rng),
            Dynamics::Brownian { gamma, sigma } => {
                self.run_brownian(st, duration, gamma, sigma, cfg, rng)
            }
        }
    }

    /// Deterministic motion for time `s` (slope `c` below `b`, `c - δ` above).
    fn drift_for(&self, st: &mut PathState, s: f64, c: f64) {
        let q = self.discount;
        let (u, b) = (st.u, self.b);
        let t_hit = if u >= b { 0.0 } else { (b - u) / c };
        if t_hit >= s {
            st.u = u + c * s;
        } else {
            let above = s - t_hit;
            st.out.dividends += st.disc * (-q * t_hit).exp() * self.delta * annuity(q, above);
            st.u = b.max(u) + (c - self.delta) * above;
        }
        st.disc *= (-q * s).exp();
    }

    fn run_claims(
        &self,
        st: &mut PathState,
        duration: f64,
        c: f64,
        rate: f64,
        size_rate: f64,
        rng: &mut Draws,
    ) {
        let mut left = duration;
        loop {
            let next = rng.exponential(rate);
            if next >= left {
                self.drift_for(st, left, c);
                return;
            }
            self.drift_for(st, next, c);
            left -= next;
            st.u -= rng.exponential(size_rate);
            if st.u < 0.0 {
                st.out.injections += st.disc * -st.u;
                st.u = 0.0;
            }
        }
    }

    fn run_brownian(
        &self,
        st: &mut PathState,
        duration: f64,
        gamma: f64,
        sigma: f64,
        cfg: &PathConfig,
        rng: &mut Draws,
    ) {
        let q = self.discount;
        let mut left = duration;
        // from distance d, a step of length h with |drift| h < d/2 crosses with
        // probability below e^{-d²/(8σ²h)}
        let safe = |d: f64| (d / (12.0 * sigma)).powi(2);
        while left > 0.0 {
            let above = st.u > self.b;
            let gap = (st.u - self.b)
                .abs()
                .min(if above { f64::INFINITY } else { st.u });
            let drift = if above { gamma - self.delta } else { gamma };
            let h = safe(gap)
                .min(0.5 * gap / drift.abs())
                .clamp(cfg.dt, 1.0)
                .min(left);
            let mid = st.disc * (-0.5 * q * h).exp();
            if above {
                st.out.dividends += st.disc * self.delta * annuity(q, h);
            }
            let s = sigma * h.sqrt();
            let end = st.u + drift * h + s * rng.normal();
            let low = if !cfg.exact_reflection {
                end.min(0.0)
            } else if end > 0.0 && 2.0 * st.u * end / (s * s) > 40.0 {
                // the bridge dips below zero with probability e^{-2 u end / s²}
                end
            } else {
                // minimum of the Brownian bridge from u to end over [0, h]
                let spread = (end - st.u).powi(2) - 2.0 * s * s * rng.uniform().ln();
                0.5 * (st.u + end - spread.sqrt())
            };
            if low < 0.0 {
                st.out.injections += mid * -low;
                st.u = end - low;
            } else {
                st.u = end;
            }
            st.disc *= (-q * h).exp();
            left -= h;
        }
    }
}

fn auto_horizon(cfg: &PathConfig, rate: f64) -> f64 {
    cfg.horizon.unwrap_or(8.0 * std::f64::consts::LN_10 / rate)
}

/// Runs `n_paths` paths (in antithetic pairs when requested) and aggregates them
/// in path order, so results do not depend on the thread count.
fn estimate<F>(
    cfg: &PathConfig,
    beta: f64,
    horizon: f64,
    truncation_bound: f64,
    path: F,
) -> Result<NpvEstimate>
where
    F: Fn(&mut Draws) -> PathOutcome + Sync,
{
    if !(cfg.dt > 0.0) || cfg.n_paths == 0 {
        return Err(Error::Domain(format!(
            "need dt > 0 and at least one path (dt = {}, paths = {})",
            cfg.dt, cfg.n_paths
        )));
    }
    let group = if cfg.antithetic { 2 } else { 1 };
    let samples = cfg.n_paths.div_ceil(group);
    let outcomes: Vec<Vec<PathOutcome>> = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            (0..group)
                .map(|g| path(&mut Draws::new(cfg.seed, k, g == 1)))
                .collect()
        })
        .collect();

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut parts = PathOutcome::default();
    for (k, grp) in outcomes.iter().enumerate() {
        let mut x = 0.0;
        for (g, o) in grp.iter().enumerate() {
            let v = o.npv(beta);
            if !v.is_finite() {
                return Err(Error::Simulation {
                    path: k * group + g,
                    reason: format!("non-finite accumulators {o:?}"),
                });
            }
            x += v / group as f64;
            parts.dividends += o.dividends;
            parts.injections += o.injections;
            parts.payoff += o.payoff;
        }
        sum += x;
        sum_sq += x * x;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = if samples > 1 {
        ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0)
    } else {
        0.0
    };
    let n = (samples * group) as f64;
    Ok(NpvEstimate {
        mean,
        stderr: (var / m).sqrt(),
        n_paths: samples * group,
        dividends: parts.dividends / n,
        injections: parts.injections / n,
        payoff: parts.payoff / n,
        horizon,
        truncation_bound,
        paths: cfg
            .keep_paths
            .then(|| outcomes.into_iter().flatten().collect()),
    })
}

/// Estimate of `v_b(x)` for the single-regime problem: dividends and
/// `β`-weighted injections discounted at `q` up to an exponential time of
/// rate `r`, when `w` is paid on the pre-kill surplus.
pub fn simulate_single_regime(
    prob: &AuxiliaryProblem,
    b: f64,
    x: f64,
    cfg: &PathConfig,
) -> Result<NpvEstimate> {
    if !(b >= 0.0) || !(x >= 0.0) {
        return Err(Error::Domain(format!(
            "need b >= 0 and x >= 0, got b = {b}, x = {x}"
        )));
    }
    let epoch = Epoch {
        dynamics: Dynamics::of(prob.model())?,
        delta: prob.delta(),
        b,
        discount: prob.q(),
    };
    let (q, r) = (prob.q(), prob.r());
    let payoff: &PayoffFunction = prob.payoff();
    let horizon = auto_horizon(cfg, q);
    let bound = (prob.delta() / q + payoff.value(0.0).abs()).max(1.0) * (-q * horizon).exp();
    estimate(cfg, prob.beta(), horizon, bound, |rng| {
        let kill = if r > 0.0 {
            rng.exponential(r)
        } else {
            f64::INFINITY
        };
        let mut st = PathState {
            u: x,
            disc: 1.0,
            out: PathOutcome::default(),
        };
        epoch.run(&mut st, kill.min(horizon), cfg, rng);
        if kill < horizon {
            st.out.payoff = st.disc * payoff.value(st.u);
        }
        st.out
    })
}

/// Estimate of `V_{π^b}(x, i)` for the regime-switching problem.
pub fn simulate_regime(
    regime: &RegimeModel,
    b: &ThresholdVector,
    x: f64,
    i: usize,
    cfg: &PathConfig,
) -> Result<NpvEstimate> {
    validate(regime).into_result()?;
    let n = regime.n_states();
    if b.b.len() != n || i >= n || !(x >= 0.0) || b.b.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::Domain(format!(
            "need {n} nonnegative thresholds, a state below {n} and x >= 0"
        )));
    }
    let epochs: Vec<Epoch> = (0..n)
        .map(|k| {
            Ok(Epoch {
                dynamics: Dynamics::of(&regime.levy[k])?,
                delta: regime.delta[k],
                b: b.b[k],
                discount: regime.discount[k],
            })
        })
        .collect::<Result<_>>()?;
    let leave: Vec<f64> = (0..n).map(|k| regime.leave_rate(k)).collect();
    let r_min = regime
        .discount
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let horizon = auto_horizon(cfg, r_min);
    let bounds = value_bounds(regime)?;
    let bound = bounds.upper.max(-bounds.lower) * (-r_min * horizon).exp();
    estimate(cfg, regime.beta, horizon, bound, |rng| {
        let mut st = PathState {
            u: x,
            disc: 1.0,
            out: PathOutcome::default(),
        };
        let mut state = i;
        let mut t = 0.0;
        loop {
            let hold = if leave[state] > 0.0 {
                rng.exponential(leave[state])
            } else {
                f64::INFINITY
            };
            let dur = hold.min(horizon - t);
            epochs[state].run(&mut st, dur, cfg, rng);
            t += dur;
            if t >= horizon {
                return st.out;
            }
            // next state in proportion to the off-diagonal rates
            let mut pick = (1.0 - rng.uniform()) * leave[state];
            let mut next = state;
            for (j, &rate) in regime.generator[state].iter().enumerate() {
                if j == state || rate <= 0.0 {
                    continue;
                }
                next = j;
                pick -= rate;
                if pick < 0.0 {
                    break;
                }
            }
            st.u -= match regime.switch_jumps[state][next] {
                JumpLaw::Zero => 0.0,
                JumpLaw::PointMass { size } => size,
                JumpLaw::Exponential { rate } => rng.exponential(rate),
            };
            if st.u < 0.0 {
                st.out.injections += st.disc * -st.u;
                st.u = 0.0;
            }
            state = next;
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::single_regime::npv;

    fn cfg(paths: usize) -> PathConfig {
        PathConfig {
            n_paths: paths,
            seed: 7,
            ..PathConfig::default()
        }
    }

    fn payoff() -> PayoffFunction {
        PayoffFunction::new(vec![0.0, 0.5, 1.5, 3.0], vec![0.2, 0.8, 1.3, 1.5], 0.05).unwrap()
    }

    #[test]
    fn identical_seeds_reproduce_bit_for_bit() {
        let m = LevyModel::brownian_drift(1.0, 1.0).unwrap();
        let prob = AuxiliaryProblem::new(m, 0.5, 1.5, 0.1, 0.5, payoff()).unwrap();
        let a = simulate_single_regime(&prob, 1.0, 0.5, &cfg(2000)).unwrap();
        let b = simulate_single_regime(&prob, 1.0, 0.5, &cfg(2000)).unwrap();
        assert_eq!(a, b);
        let c = simulate_single_regime(
            &prob,
            1.0,
            0.5,
            &PathConfig {
                seed: 8,
                ..cfg(2000)
            },
        )
        .unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn no_dividends_below_unreachable_threshold() {
        let m = LevyModel::cramer_lundberg(1.5, 1.0, 1.0).unwrap();
        let prob = AuxiliaryProblem::new(m, 0.5, 1.5, 0.1, 0.5, PayoffFunction::zero()).unwrap();
        let e = simulate_single_regime(&prob, 1e6, 0.5, &cfg(4000)).unwrap();
        assert_eq!(e.dividends, 0.0);
        assert!(e.mean < 0.0 && e.injections > 0.0);
        assert!((e.mean + 1.5 * e.injections).abs() < 1e-12);
    }

    #[test]
    fn deterministic_drift_limit() {
        // far above b with a huge drift the surplus never returns, so the value
        // is δ ∫_0^∞ e^{-(q+r)t} dt = δ/α
        let m = LevyModel::brownian_drift(50.0, 0.1).unwrap();
        let prob = AuxiliaryProblem::new(m, 0.5, 1.5, 0.1, 0.5, PayoffFunction::zero()).unwrap();
        let e = simulate_single_regime(&prob, 1.0, 10.0, &cfg(20_000)).unwrap();
        let exact = 0.5 / 0.6;
        assert!((e.mean - exact).abs() < 3.0 * e.stderr + 1e-12, "{e:?}");
        assert_eq!(e.injections, 0.0);
    }

    #[test]
    fn agrees_with_closed_form() {
        let bm = LevyModel::brownian_drift(1.0, 2f64.sqrt()).unwrap();
        let cl = LevyModel::cramer_lundberg(2.0, 1.0, 1.0).unwrap();
        for m in [bm, cl] {
            let prob = AuxiliaryProblem::new(m, 0.5, 1.5, 0.1, 0.5, payoff()).unwrap();
            for (b, x) in [(1.0, 0.3), (0.5, 2.0)] {
                let e = simulate_single_regime(&prob, b, x, &cfg(40_000)).unwrap();
                let v = npv(&prob, b, x).unwrap();
                assert!(
                    (e.mean - v).abs() < 3.0 * e.stderr,
                    "b={b} x={x}: {v} vs {e:?}"
                );
            }
        }
    }

    #[test]
    fn one_state_chain_matches_single_regime() {
        let m = LevyModel::cramer_lundberg(2.0, 1.0, 1.0).unwrap();
        let regime = RegimeModel {
            names: vec!["only".into()],
            generator: vec![vec![0.0]],
            levy: vec![m.clone()],
            delta: vec![0.5],
            discount: vec![0.3],
            switch_jumps: vec![vec![JumpLaw::Zero]],
            beta: 1.5,
        };
        let prob = AuxiliaryProblem::new(m, 0.5, 1.5, 0.3, 0.0, PayoffFunction::zero()).unwrap();
        let c = cfg(4000);
        let a = simulate_regime(&regime, &ThresholdVector { b: vec![1.0] }, 0.7, 0, &c).unwrap();
        let s = simulate_single_regime(
            &prob,
            1.0,
            0.7,
            &PathConfig {
                horizon: Some(a.horizon),
                ..c
            },
        )
        .unwrap();
        assert_eq!(a.mean, s.mean);
        assert!((a.mean - npv(&prob, 1.0, 0.7).unwrap()).abs() < 3.0 * a.stderr);
    }
}

//! Acceptance suite: one PASS/FAIL line per criterion, run sequentially so the
//! printed timings are meaningful. Exits nonzero if any criterion fails.
//!
//! Oracles here are written against closed-form Laplace exponents and plain
//! composite Simpson quadrature, independent of the library's exponential sums.

use std::time::Instant;

use bailout_core::levy_model::{AuxiliaryProblem, JumpLaw, LevyModel, Process, RegimeModel};
use bailout_core::payoff::PayoffFunction;
use bailout_core::regime_switching::{
    apply_t, apply_theta, solve, uniform_grid, SolveOptions, ThresholdVector, ValueFunction,
};
use bailout_core::scale_functions::ScaleFunctionSet;
use bailout_core::simulator::{simulate_regime, simulate_single_regime, PathConfig};
use bailout_core::single_regime::{
    barrier_score, npv, optimal_derivative, optimal_threshold, verification_grid, Side,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = 2 * panels;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[derive(Clone, Copy)]
enum Family {
    Brownian { gamma: f64, sigma: f64 },
    Claims { c: f64, lambda: f64, mu: f64 },
}

impl Family {
    fn model(self) -> LevyModel {
        match self {
            Family::Brownian { gamma, sigma } => LevyModel::brownian_drift(gamma, sigma).unwrap(),
            Family::Claims { c, lambda, mu } => LevyModel::cramer_lundberg(c, lambda, mu).unwrap(),
        }
    }

    /// Laplace exponent with drift reduced by `cut`.
    fn psi(self, theta: f64, cut: f64) -> f64 {
        match self {
            Family::Brownian { gamma, sigma } => {
                (gamma - cut) * theta + 0.5 * sigma * sigma * theta * theta
            }
            Family::Claims { c, lambda, mu } => (c - cut) * theta - lambda * theta / (mu + theta),
        }
    }

    /// Largest root of `psi(θ) = q` by bisection.
    fn root(self, q: f64, cut: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        while self.psi(hi, cut) < q {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.psi(mid, cut) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// (family, δ, α)
fn instances() -> Vec<(Family, f64, f64)> {
    vec![
        (
            Family::Brownian {
                gamma: 1.0,
                sigma: 2f64.sqrt(),
            },
            0.5,
            0.6,
        ),
        (
            Family::Brownian {
                gamma: -0.2,
                sigma: 0.8,
            },
            0.3,
            0.2,
        ),
        (
            Family::Brownian {
                gamma: 2.0,
                sigma: 1.5,
            },
            1.0,
            1.3,
        ),
        (
            Family::Claims {
                c: 2.0,
                lambda: 1.0,
                mu: 1.0,
            },
            0.5,
            0.6,
        ),
        (
            Family::Claims {
                c: 1.2,
                lambda: 0.5,
                mu: 2.0,
            },
            0.3,
            0.1,
        ),
        (
            Family::Claims {
                c: 3.0,
                lambda: 2.0,
                mu: 0.8,
            },
            1.0,
            1.0,
        ),
    ]
}

fn concave_payoff() -> PayoffFunction {
    PayoffFunction::new(vec![0.0, 0.5, 1.5, 3.0], vec![0.2, 0.8, 1.3, 1.5], 0.05).unwrap()
}

fn brownian_problem() -> AuxiliaryProblem {
    let m = LevyModel::brownian_drift(1.0, 2f64.sqrt()).unwrap();
    AuxiliaryProblem::new(m, 0.5, 1.5, 0.1, 0.5, concave_payoff()).unwrap()
}

fn claims_problem() -> AuxiliaryProblem {
    let m = LevyModel::cramer_lundberg(2.0, 1.0, 1.0).unwrap();
    AuxiliaryProblem::new(m, 0.5, 3.0, 0.1, 0.5, concave_payoff()).unwrap()
}

/// Two compound-Poisson regimes with surplus jumps at switches; simulated exactly.
fn two_state_model() -> RegimeModel {
    RegimeModel {
        names: vec!["expansion".into(), "recession".into()],
        generator: vec![vec![-0.5, 0.5], vec![0.3, -0.3]],
        levy: vec![
            LevyModel::cramer_lundberg(2.0, 1.0, 1.0).unwrap(),
            LevyModel::cramer_lundberg(1.5, 1.2, 1.5).unwrap(),
        ],
        delta: vec![0.5, 0.4],
        discount: vec![0.1, 0.15],
        switch_jumps: vec![
            vec![JumpLaw::Zero, JumpLaw::PointMass { size: 0.3 }],
            vec![JumpLaw::Exponential { rate: 4.0 }, JumpLaw::Zero],
        ],
        beta: 3.0,
    }
}

fn symmetric_model() -> RegimeModel {
    let m = LevyModel::brownian_drift(1.0, 2f64.sqrt()).unwrap();
    RegimeModel {
        names: vec!["first".into(), "second".into()],
        generator: vec![vec![-0.4, 0.4], vec![0.4, -0.4]],
        levy: vec![m.clone(), m],
        delta: vec![0.5, 0.5],
        discount: vec![0.1, 0.1],
        switch_jumps: vec![vec![JumpLaw::Zero; 2]; 2],
        beta: 1.5,
    }
}

/// Random function whose lift is admissible: concave, nondecreasing, slope at
/// most `beta` at zero and tail slope `tail`.
fn random_admissible(rng: &mut ChaCha8Rng, grid: &[f64], tail: f64, beta: f64) -> Vec<f64> {
    let level: f64 = rng.random_range(-1.0..3.0);
    let s0: f64 = rng.random_range(tail..beta);
    let k: f64 = rng.random_range(0.2..3.0);
    grid.iter()
        .map(|&x| level + tail * x + (s0 - tail) * (1.0 - (-k * x).exp()) / k)
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    for (fam, delta, alpha) in instances() {
        let set = ScaleFunctionSet::build(&fam.model(), delta, alpha).unwrap();
        let theta = fam.root(alpha, delta) + 1.0;
        for (p, cut) in [(Process::X, 0.0), (Process::Y, delta)] {
            let growth = fam.root(alpha, cut);
            let t_max = 40.0 / (theta - growth);
            let numeric = simpson(
                |x| (-theta * x).exp() * set.w(p, x).unwrap(),
                0.0,
                t_max,
                20_000,
            );
            let exact = 1.0 / (fam.psi(theta, cut) - alpha);
            worst = worst.max((numeric - exact).abs());
        }
    }
    Outcome {
        pass: worst < 1e-6,
        detail: format!("max |∫e^(-θx)W - 1/(ψ(θ)-α)| = {worst:.2e} (limit 1e-6)"),
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for (fam, delta, alpha) in [instances()[0], instances()[3]] {
        let set = ScaleFunctionSet::build(&fam.model(), delta, alpha).unwrap();
        let w0 = set.w_at_zero(Process::X);
        for _ in 0..50 {
            let x: f64 = rng.random_range(0.01..5.0);
            let w = |y: f64| set.w(Process::X, y).unwrap();
            let wy = |y: f64| set.w(Process::Y, y).unwrap();
            let conv = simpson(|y| wy(x - y) * w(y), 0.0, x, 2000);
            let rhs = set.wbar(Process::Y, x).unwrap() - set.wbar(Process::X, x).unwrap();
            worst = worst.max((delta * conv - rhs).abs());
            // W' is evaluated strictly inside (0, x]
            let conv_p = simpson(
                |y| wy(y) * set.w_prime(Process::X, (x - y).max(1e-300)).unwrap(),
                0.0,
                x,
                2000,
            );
            let rhs = (1.0 - delta * w0) * wy(x) - w(x);
            worst = worst.max((delta * conv_p - rhs).abs());
        }
    }
    Outcome {
        pass: worst < 1e-8,
        detail: format!("max identity residual over 200 checks = {worst:.2e} (limit 1e-8)"),
    }
}

fn criterion_3() -> Outcome {
    let prob = brownian_problem();
    let sol = optimal_threshold(&prob).unwrap();
    let e = sol.evaluator();
    let fit = (e.derivative_limit(sol.b_star, Side::Left) - 1.0)
        .abs()
        .max((e.derivative_limit(sol.b_star, Side::Right) - 1.0).abs());
    let via_passage = (optimal_derivative(&sol, sol.b_star).unwrap() - 1.0).abs();
    let g = barrier_score(&prob, sol.b_star).unwrap().g;
    Outcome {
        pass: sol.b_star > 0.0 && fit < 1e-7 && via_passage < 1e-7 && g.abs() < 1e-9,
        detail: format!(
            "b* = {:.10}, |v'(b*) - 1| = {fit:.2e}, passage route {via_passage:.2e}, |g(b*)| = {:.2e}",
            sol.b_star,
            g.abs()
        ),
    }
}

fn criterion_4() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for prob in [brownian_problem(), claims_problem()] {
        let sol = optimal_threshold(&prob).unwrap();
        let e = sol.evaluator();
        let beta = prob.beta();
        let (mut lo_below, mut hi_below) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lo_above, mut hi_above) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in verification_grid(&sol, 801) {
            let d = if x == sol.b_star {
                continue;
            } else {
                e.derivative(x).unwrap()
            };
            if x < sol.b_star {
                lo_below = lo_below.min(d);
                hi_below = hi_below.max(d);
            } else {
                lo_above = lo_above.min(d);
                hi_above = hi_above.max(d);
            }
        }
        let ok_below = sol.b_star == 0.0 || (lo_below >= 1.0 - 1e-9 && hi_below <= beta);
        let ok_above = lo_above >= -1e-9 && hi_above <= 1.0 + 1e-9;
        pass &= ok_below && ok_above && sol.b_star > 0.0;
        notes.push(format!(
            "b*={:.4}: below [{lo_below:.6}, {hi_below:.6}], above [{lo_above:.6}, {hi_above:.6}]",
            sol.b_star
        ));
    }
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

fn criterion_5() -> Outcome {
    // With w = 0, g(0) = (β - 1)(1 - δ/c) - βα/(φc), which vanishes at β = 2.5 here.
    let (c, lambda, mu, delta, q, r) = (2.0, 1.0, 1.0, 0.5, 0.1, 0.5);
    let fam = Family::Claims { c, lambda, mu };
    let phi = fam.root(q + r, delta);
    let g0 = |beta: f64| {
        let prob =
            AuxiliaryProblem::new(fam.model(), delta, beta, q, r, PayoffFunction::zero()).unwrap();
        let s = barrier_score(&prob, 0.0).unwrap().g;
        let direct = (beta - 1.0) * (1.0 - delta / c) - beta * (q + r) / (phi * c);
        (s, direct, optimal_threshold(&prob).unwrap().b_star)
    };
    let base = 2.4;
    let (g_base, d_base, b_base) = g0(base);
    let (g_up, d_up, b_up) = g0(1.1 * base);
    let mut table = Vec::new();
    let mut continuous = true;
    let mut sign_changes = 0;
    let mut prev: Option<f64> = None;
    for k in 0..=24 {
        let beta = base * (1.0 + 0.1 * k as f64 / 24.0);
        let (g, direct, _) = g0(beta);
        continuous &= (g - direct).abs() < 1e-12;
        if let Some(p) = prev {
            continuous &= (g - p).abs() < 0.01;
            if (p <= 0.0) != (g <= 0.0) {
                sign_changes += 1;
            }
        }
        prev = Some(g);
        if k % 6 == 0 {
            table.push(format!("β={beta:.3}:g0={g:+.4}"));
        }
    }
    let pass = b_base == 0.0
        && g_base <= 0.0
        && b_up > 0.0
        && g_up > 0.0
        && (g_base - d_base).abs() < 1e-12
        && (g_up - d_up).abs() < 1e-12
        && continuous
        && sign_changes == 1;
    Outcome {
        pass,
        detail: format!(
            "b*(β) = {b_base}, b*(1.1β) = {b_up:.4}; {}",
            table.join(" ")
        ),
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = PathConfig {
        n_paths: 200_000,
        seed: 60,
        ..PathConfig::default()
    };
    let mut pass = true;
    let mut worst_z: f64 = 0.0;
    let mut worst_se: f64 = 0.0;
    for prob in [brownian_problem(), claims_problem()] {
        let target = 0.01 * prob.delta() / prob.alpha();
        for _ in 0..5 {
            let b: f64 = rng.random_range(0.0..3.0);
            let x: f64 = rng.random_range(0.0..4.0);
            let v = npv(&prob, b, x).unwrap();
            let est = simulate_single_regime(&prob, b, x, &cfg).unwrap();
            let z = (v - est.mean).abs() / est.stderr;
            worst_z = worst_z.max(z);
            worst_se = worst_se.max(est.stderr / target);
            pass &= z < 3.0 && est.stderr < target;
        }
    }
    Outcome {
        pass,
        detail: format!(
            "max |v - MC|/stderr = {worst_z:.2} (limit 3), max stderr/(0.01 δ/α) = {worst_se:.2}"
        ),
    }
}

fn criterion_7() -> Outcome {
    let regime = two_state_model();
    let rho = regime.contraction_factor();
    let grid = uniform_grid(30.0, 301);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let tails: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.0)).collect();
        let make = |rng: &mut ChaCha8Rng| {
            let values = tails
                .iter()
                .map(|&t| random_admissible(rng, &grid, t, regime.beta))
                .collect();
            ValueFunction::new(grid.clone(), values, tails.clone()).unwrap()
        };
        let f = make(&mut rng);
        let g = make(&mut rng);
        let (tf, _) = apply_theta(&regime, &f).unwrap();
        let (tg, _) = apply_theta(&regime, &g).unwrap();
        let ratio = tf.sup_distance(&tg) / f.sup_distance(&g);
        worst = worst.max(ratio);
    }
    Outcome {
        pass: worst <= rho + 1e-8,
        detail: format!("max ‖Θf-Θg‖/‖f-g‖ = {worst:.6} vs ρ = {rho:.6}"),
    }
}

struct Solved {
    regime: RegimeModel,
    value: ValueFunction,
    b: ThresholdVector,
    lower: f64,
    upper: f64,
}

fn criterion_8() -> (Outcome, Solved) {
    let regime = two_state_model();
    let opts = SolveOptions {
        tol: 1e-6,
        ..SolveOptions::default()
    };
    let sol = solve(&regime, &opts).unwrap();
    let residual = apply_t(&regime, &sol.thresholds, &sol.value)
        .unwrap()
        .sup_distance(&sol.value);
    let cfg = PathConfig {
        n_paths: 100_000,
        seed: 80,
        ..PathConfig::default()
    };
    let grid = sol.value.grid().to_vec();
    let picks = [
        (0usize, grid.len() / 40),
        (1, grid.len() / 12),
        (0, grid.len() / 5),
    ];
    let mut worst_z: f64 = 0.0;
    for &(i, k) in &picks {
        let x = grid[k];
        let est = simulate_regime(&regime, &sol.thresholds, x, i, &cfg).unwrap();
        worst_z = worst_z.max((sol.value.values(i)[k] - est.mean).abs() / est.stderr);
    }
    let out = Outcome {
        pass: residual < 1e-6 && worst_z < 3.0,
        detail: format!(
            "b* = {:?}, {} iterations, ‖T_b* V - V‖ = {residual:.2e}, max |V - MC|/stderr = {worst_z:.2}",
            sol.thresholds.b,
            sol.trace.len()
        ),
    };
    let solved = Solved {
        regime,
        value: sol.value,
        b: sol.thresholds,
        lower: sol.bounds.lower,
        upper: sol.bounds.upper,
    };
    (out, solved)
}

fn criterion_9(s: &Solved) -> Outcome {
    let beta = s.regime.beta;
    let g = s.value.grid();
    let mut inside = true;
    let mut worst_lip = f64::NEG_INFINITY;
    let mut worst_mono = f64::INFINITY;
    for i in 0..2 {
        let v = s.value.values(i);
        inside &= v.iter().all(|&x| s.lower < x && x < s.upper);
        for k in 1..g.len() {
            let dv = v[k] - v[k - 1];
            worst_mono = worst_mono.min(dv);
            worst_lip = worst_lip.max(dv - beta * (g[k] - g[k - 1]));
        }
    }
    Outcome {
        pass: inside && worst_mono >= 0.0 && worst_lip <= 1e-8,
        detail: format!(
            "V_- = {:.4} < V < V_+ = {:.4}: {inside}; min ΔV = {worst_mono:.2e}, max ΔV - βΔx = {worst_lip:.2e}",
            s.lower, s.upper
        ),
    }
}

fn criterion_10(s: &Solved) -> Outcome {
    let cfg = PathConfig {
        n_paths: 60_000,
        seed: 100,
        ..PathConfig::default()
    };
    let (x, i) = (1.0, 0);
    let best = simulate_regime(&s.regime, &s.b, x, i, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_z = f64::NEG_INFINITY;
    for _ in 0..10 {
        let b: Vec<f64> =
            s.b.b
                .iter()
                .map(|&t| (t * rng.random_range(0.3..1.7) + rng.random_range(-0.3..0.3)).max(0.0))
                .collect();
        let other = simulate_regime(&s.regime, &ThresholdVector { b }, x, i, &cfg).unwrap();
        let joint = (best.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        worst_z = worst_z.max((other.mean - best.mean) / joint);
    }
    Outcome {
        pass: worst_z <= 3.0,
        detail: format!(
            "optimum {:.5} ± {:.5}; max (NPV(b') - NPV(b*))/joint stderr = {worst_z:.2}",
            best.mean, best.stderr
        ),
    }
}

fn criterion_11() -> Outcome {
    let sol = solve(&symmetric_model(), &SolveOptions::default()).unwrap();
    let gap = max_abs_diff(sol.value.values(0), sol.value.values(1));
    let b = &sol.thresholds.b;
    Outcome {
        pass: b[0] == b[1] && gap < 1e-8,
        detail: format!("b* = {b:?}, ‖V(·,1) - V(·,2)‖ = {gap:.2e}"),
    }
}

fn main() {
    let mut failed = Vec::new();
    let mut report = |n: usize, limit: f64, start: Instant, o: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        let pass = o.pass && secs < limit;
        println!(
            "[{}] criterion {n:>2} ({secs:.2}s, limit {limit}s): {}",
            if pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !pass {
            failed.push(n);
        }
    };

    let t = Instant::now();
    report(1, 1.0, t, criterion_1());
    let t = Instant::now();
    report(2, 1.0, t, criterion_2());
    let t = Instant::now();
    report(3, 1.0, t, criterion_3());
    let t = Instant::now();
    report(4, 1.0, t, criterion_4());
    let t = Instant::now();
    report(5, 1.0, t, criterion_5());
    let t = Instant::now();
    report(6, 60.0, t, criterion_6());
    let t = Instant::now();
    report(7, 30.0, t, criterion_7());
    let t = Instant::now();
    let (o, solved) = criterion_8();
    report(8, 120.0, t, o);
    let t = Instant::now();
    report(9, 1.0, t, criterion_9(&solved));
    let t = Instant::now();
    report(10, 120.0, t, criterion_10(&solved));
    let t = Instant::now();
    report(11, 30.0, t, criterion_11());

    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

mod model;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bailout_core::levy_model::{validate, Process};
use bailout_core::regime_switching::{
    solve, uniform_grid, SolveOptions, ThresholdVector, ValueFunction,
};
use bailout_core::scale_functions::ScaleFunctionSet;
use bailout_core::simulator::{simulate_regime, simulate_single_regime, NpvEstimate, PathConfig};
use bailout_core::single_regime::{
    npv, optimal_threshold_with, verification_grid, verify_optimality, Side, ThresholdOptions,
};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use model::ModelDoc;
use output::{Artifacts, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("schema violation at {0}")]
    Schema(String),
    #[error("assumption `{name}` violated: {reason}")]
    Assumption { name: String, reason: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Schema(_) => 2,
            CliError::Assumption { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<bailout_core::Error> for CliError {
    fn from(e: bailout_core::Error) -> Self {
        use bailout_core::Error as E;
        match e {
            E::Assumption { name, reason } => CliError::Assumption { name, reason },
            E::Domain(m) => CliError::Schema(format!("<parameter value>: {m}")),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Optimal bail-out dividend thresholds for regime-switching surplus models.
#[derive(Debug, Parser)]
#[command(name = "bailout", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON model document.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Directory for artifacts.
    #[arg(
        long,
        global = true,
        env = "BAILOUT_OUT_DIR",
        default_value = "bailout-out"
    )]
    out: PathBuf,
    /// Override a document field, e.g. `states.0.sigma=0.8`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    grid_points: Option<usize>,
    #[arg(long, global = true)]
    x_max: Option<f64>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the model's standing assumptions.
    Check,
    /// Tabulate scale functions for each state and self-check them.
    Scale,
    /// Solve the single-regime problem described by `single`.
    SolveSingle,
    /// Solve the regime-switching fixed point.
    SolveRegime,
    /// Monte-Carlo NPV of a threshold strategy.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Initial surplus.
    #[arg(long, default_value_t = 1.0)]
    x: f64,
    /// Initial state index.
    #[arg(long, default_value_t = 0)]
    state: usize,
    /// Thresholds, one per state (comma separated).
    #[arg(long, value_delimiter = ',')]
    b: Vec<f64>,
    /// `solution.json` from `solve-regime`; supplies thresholds and the value to compare with.
    #[arg(long)]
    solution: Option<PathBuf>,
    /// Simulate the single-regime problem instead (first threshold only).
    #[arg(long)]
    single: bool,
    /// Also write one row per path.
    #[arg(long)]
    keep_paths: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let c = &cli.common;
    let path = c
        .model
        .as_ref()
        .ok_or_else(|| CliError::Schema("--model: a model document is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut doc = model::load(&text, &c.overrides)?;
    let run = &mut doc.run;
    run.tol = c.tol.or(run.tol);
    run.grid_points = c.grid_points.or(run.grid_points);
    run.x_max = c.x_max.or(run.x_max);
    run.paths = c.paths.or(run.paths);
    run.seed = c.seed.or(run.seed);
    run.dt = c.dt.or(run.dt);

    let out = Artifacts::new(&c.out, &doc)?;
    match &cli.command {
        Command::Check => check(&doc, &out),
        Command::Scale => scale(&doc, &out),
        Command::SolveSingle => solve_single(&doc, &out),
        Command::SolveRegime => solve_regime(&doc, &out),
        Command::Simulate(args) => simulate(&doc, args, &out),
    }
}

fn check(doc: &ModelDoc, out: &Artifacts) -> Result<(), CliError> {
    let report = validate(&doc.regime()?);
    let single = doc.single.as_ref().map(|_| {
        doc.single_problem()
            .and_then(|(p, _)| Ok(p.check_payoff()?))
    });
    let single_status = match &single {
        None => json!(null),
        Some(Ok(())) => json!({"passed": true}),
        Some(Err(e)) => json!({"passed": false, "reason": e.to_string()}),
    };
    out.json(
        "check.json",
        json!({"assumptions": report, "single_payoff": single_status}),
    )?;
    for c in &report.checks {
        println!(
            "{} {}: {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.reason
        );
    }
    report.into_result()?;
    if let Some(r) = single {
        r?;
    }
    Ok(())
}

fn scale(doc: &ModelDoc, out: &Artifacts) -> Result<(), CliError> {
    let regime = doc.regime()?;
    let n = doc.run.grid_points.unwrap_or(201).max(2);
    let grid = uniform_grid(doc.run.x_max.unwrap_or(10.0), n);
    let mut checks = Vec::new();
    for i in 0..regime.n_states() {
        let alpha = regime.discount[i] + regime.leave_rate(i);
        let set = ScaleFunctionSet::build(&regime.levy[i], regime.delta[i], alpha)?;
        let mut t = Table::new(&[
            "x",
            "W",
            "W_prime",
            "Z",
            "W_bar",
            "Z_bar",
            "W_refr",
            "W_refr_bar",
        ]);
        for &x in &grid {
            let w_prime = if x > 0.0 {
                set.w_prime(Process::X, x)?
            } else {
                set.exp_sum(Process::X)
                    .map_or(f64::NAN, |s| s.derivative(0.0))
            };
            t.row(&[
                x,
                set.w(Process::X, x)?,
                w_prime,
                set.z(Process::X, x)?,
                set.wbar(Process::X, x)?,
                set.zbar(Process::X, x)?,
                set.w(Process::Y, x)?,
                set.wbar(Process::Y, x)?,
            ]);
        }
        let note = format!(
            "state {} ({}): scale index alpha = r(i) + q_i = {alpha}, refraction delta = {}; \
             x in surplus units, values right limits at 0",
            i, regime.names[i], regime.delta[i]
        );
        out.csv(&format!("scale_{}.csv", regime.names[i]), &note, &t)?;
        let report = set.self_check(&grid[1..])?;
        println!(
            "{}: max self-check residual {:.3e}",
            regime.names[i],
            report.max_residual()
        );
        checks.push(json!({"state": regime.names[i], "alpha": alpha, "report": report}));
    }
    out.json("scale_check.json", json!({"states": checks}))
}

fn slope_at(e: &bailout_core::single_regime::BarrierNpv<'_>, x: f64) -> f64 {
    if x <= 0.0 {
        e.derivative_limit(0.0, Side::Right)
    } else {
        e.derivative(x)
            .unwrap_or_else(|_| e.derivative_limit(x, Side::Left))
    }
}

fn solve_single(doc: &ModelDoc, out: &Artifacts) -> Result<(), CliError> {
    let (prob, i) = doc.single_problem()?;
    let mut opts = ThresholdOptions::default();
    if let Some(t) = doc.run.tol {
        opts.tol = t;
    }
    let sol = optimal_threshold_with(&prob, opts)?;
    let n = doc.run.grid_points.unwrap_or(801).max(2);
    let grid = match doc.run.x_max {
        Some(x_max) => uniform_grid(x_max, n),
        None => verification_grid(&sol, n),
    };
    let report = verify_optimality(&sol, &grid);
    let e = sol.evaluator();
    let mut t = Table::new(&["x", "v", "v_prime"]);
    for &x in &grid {
        t.row(&[x, e.value(x), slope_at(&e, x)]);
    }
    let conventions = json!({
        "discount_rate_q": prob.q(),
        "kill_rate_r": prob.r(),
        "alpha": prob.alpha(),
        "mapping": "q is the state's discount rate r(i); r is the killing rate; scale functions use alpha = q + r",
        "units": "surplus in currency units, rates per unit time",
    });
    out.csv(
        "value.csv",
        &format!(
            "state {i}: alpha = q + r = {}; v_prime is the left limit at b*",
            prob.alpha()
        ),
        &t,
    )?;
    out.json(
        "diagnostics.json",
        json!({"conventions": conventions, "solution": sol, "optimality": report}),
    )?;
    println!(
        "b* = {:.17e}  |g(b*)| = {:.3e}",
        sol.b_star,
        sol.g_residual.abs()
    );
    if !report.passed {
        return Err(CliError::Numerical(
            "optimality verification failed; see diagnostics.json".into(),
        ));
    }
    Ok(())
}

fn solve_regime(doc: &ModelDoc, out: &Artifacts) -> Result<(), CliError> {
    let regime = doc.regime()?;
    let mut opts = SolveOptions {
        x_max: doc.run.x_max,
        ..SolveOptions::default()
    };
    if let Some(t) = doc.run.tol {
        opts.tol = t;
    }
    if let Some(n) = doc.run.grid_points {
        opts.grid_points = n;
    }
    let sol = solve(&regime, &opts)?;
    let residual = sol.fixed_point_residual(&regime)?;
    let grid = sol.value.grid();
    for i in 0..regime.n_states() {
        let mut t = Table::new(&["x", "V", "V_prime"]);
        for (k, &x) in grid.iter().enumerate() {
            t.row(&[x, sol.value.values(i)[k], sol.derivatives[i][k]]);
        }
        let note = format!(
            "state {i} ({}): discount r(i) = {}, switching rate q_i = {}, epoch alpha = r(i) + q_i",
            regime.names[i],
            regime.discount[i],
            regime.leave_rate(i)
        );
        out.csv(&format!("value_{}.csv", regime.names[i]), &note, &t)?;
    }
    let mut trace = Table::new(&["n", "step", "x_max"]);
    for r in &sol.trace {
        trace.row(&[r.iteration as f64, r.step, r.x_max]);
    }
    out.csv(
        "trace.csv",
        "step = sup-norm distance between successive iterates; NaN marks a grid expansion",
        &trace,
    )?;
    out.json(
        "solution.json",
        json!({
            "conventions": {
                "mapping": "r(i) is the discount rate of state i; q_i = -Q[i][i] its switching rate; each epoch is a single-regime problem at alpha = r(i) + q_i",
                "units": "surplus in currency units, rates per unit time",
            },
            "states": regime.names,
            "thresholds": sol.thresholds.b,
            "fixed_point_residual": residual,
            "iterations": sol.trace.len(),
            "contraction_factor": sol.contraction_factor,
            "stopping_step": sol.stopping_step,
            "bounds": sol.bounds,
            "absorbing_states": sol.absorbing_states,
            "value": sol.value,
            "trace": sol.trace,
        }),
    )?;
    println!(
        "b* = {:?}  residual {residual:.3e}  iterations {}",
        sol.thresholds.b,
        sol.trace.len()
    );
    Ok(())
}

#[derive(Deserialize)]
struct SavedSolution {
    thresholds: Vec<f64>,
    value: SavedValue,
}

#[derive(Deserialize)]
struct SavedValue {
    grid: Vec<f64>,
    values: Vec<Vec<f64>>,
    tail_slopes: Vec<f64>,
}

fn load_solution(path: &Path) -> Result<(Vec<f64>, ValueFunction), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let saved: SavedSolution = serde_path_to_error::deserialize(
        &mut serde_json::Deserializer::from_str(&text),
    )
    .map_err(|e| CliError::Schema(format!("{} {}: {}", path.display(), e.path(), e.inner())))?;
    let v = ValueFunction::new(
        saved.value.grid,
        saved.value.values,
        saved.value.tail_slopes,
    )?;
    Ok((saved.thresholds, v))
}

fn comparison(analytic: f64, est: &NpvEstimate) -> serde_json::Value {
    let z = (analytic - est.mean) / est.stderr;
    json!({"analytic": analytic, "difference": analytic - est.mean, "z": z, "within_3_stderr": z.abs() < 3.0})
}

fn simulate(doc: &ModelDoc, args: &SimulateArgs, out: &Artifacts) -> Result<(), CliError> {
    let mut cfg = PathConfig {
        keep_paths: args.keep_paths,
        ..PathConfig::default()
    };
    if let Some(n) = doc.run.paths {
        cfg.n_paths = n;
    }
    if let Some(s) = doc.run.seed {
        cfg.seed = s;
    }
    if let Some(dt) = doc.run.dt {
        cfg.dt = dt;
    }
    let saved = args.solution.as_deref().map(load_solution).transpose()?;
    let b = match (&saved, args.b.is_empty()) {
        (_, false) => args.b.clone(),
        (Some((b, _)), true) => b.clone(),
        (None, true) => {
            return Err(CliError::Schema(
                "--b: thresholds required (or pass --solution)".into(),
            ))
        }
    };
    let (est, compare, mapping) = if args.single {
        let (prob, _) = doc.single_problem()?;
        let est = simulate_single_regime(&prob, b[0], args.x, &cfg)?;
        let analytic = npv(&prob, b[0], args.x)?;
        let mapping = format!(
            "single-regime problem: discount q = {}, killing rate r = {}, alpha = {}",
            prob.q(),
            prob.r(),
            prob.alpha()
        );
        let compare = comparison(analytic, &est);
        (est, Some(compare), mapping)
    } else {
        let regime = doc.regime()?;
        if args.state >= regime.n_states() {
            return Err(CliError::Schema(format!(
                "--state: no state {}",
                args.state
            )));
        }
        let est = simulate_regime(
            &regime,
            &ThresholdVector { b: b.clone() },
            args.x,
            args.state,
            &cfg,
        )?;
        let compare = saved
            .as_ref()
            .map(|(_, v)| comparison(v.eval(args.state, args.x), &est));
        let mapping =
            "r(i) is the discount rate of state i; injections are weighted by beta".to_string();
        (est, compare, mapping)
    };
    if let Some(paths) = &est.paths {
        let mut t = Table::new(&["path", "dividends", "injections", "payoff"]);
        for (k, p) in paths.iter().enumerate() {
            t.row(&[k as f64, p.dividends, p.injections, p.payoff]);
        }
        out.csv(
            "paths.csv",
            "discounted per-path components; injections before the factor beta",
            &t,
        )?;
    }
    let mut summary = est.clone();
    summary.paths = None;
    out.json(
        "estimate.json",
        json!({
            "conventions": {"mapping": mapping, "units": "present value in currency units"},
            "x": args.x,
            "state": args.state,
            "thresholds": b,
            "path_config": cfg,
            "estimate": summary,
            "comparison": compare,
        }),
    )?;
    println!(
        "NPV = {:.10} ± {:.3e} ({} paths)",
        est.mean, est.stderr, est.n_paths
    );
    Ok(())
}

use std::path::Path;
use std::time::Instant;

use asyrgs_core::fcg::{fcg_solve, repetition_seed, sweep_tradeoff_experiment, FcgConfig};
use asyrgs_core::lsq::{solve_lsq_async, solve_lsq_sync, LsqSystem};
use asyrgs_core::mm::{load_matrix_market, load_vector, write_vector};
use asyrgs_core::replay::{replay, replay_directions, DelaySchedule};
use asyrgs_core::sparse::norm2;
use asyrgs_core::spectral::{estimate_lambda_max, exact_dense_spectrum, SpectralEstimates, DEFAULT_DENSE_CAP};
use asyrgs_core::testkit::{dense_lsq_solve, dense_solve, generate};
use asyrgs_core::theory::{bound_report, TheoryParams};
use asyrgs_core::{
    compute_stats, make_schedule, rescale_to_unit_diagonal, solve_async, solve_sync, AsyncConfig, DirectionStream,
    ErrorTrace, ReadModel, SparseMatrix, UnitDiagonalSystem,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{resolve_solver, Overrides, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{emit_table, emit_trace, emit_trajectory, write_json, Format};
use crate::{
    AsyncFlags, BenchArgs, BoundsArgs, Cli, Command, FcgArgs, MatrixArgs, OutputArgs, SimulateArgs, SolveArgs,
    SolverFlags, StatsArgs,
};

/// Result of a command that ran to completion. `failure` carries a
/// non-convergence verdict reported after the artifacts were written.
#[derive(Debug)]
pub struct Outcome {
    pub summary: Value,
    pub failure: Option<CliError>,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Outcome { summary, failure: None }
    }
}

pub fn run(cli: Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Solve(a) => solve(a),
        Command::Lsq(a) => lsq(a),
        Command::Simulate(a) => simulate(a),
        Command::Bounds(a) => bounds(a),
        Command::Stats(a) => stats(a),
        Command::Bench(a) => bench(a),
        Command::Fcg(a) => fcg(a),
    }
}

fn load_matrix(m: &MatrixArgs) -> CliResult<(SparseMatrix, String)> {
    match (&m.matrix, &m.recipe) {
        (Some(p), _) => Ok((load_matrix_market(p)?, p.display().to_string())),
        (None, Some(r)) => Ok((generate(r)?, r.to_string())),
        (None, None) => Err(CliError::Config("need --matrix or --recipe".into())),
    }
}

fn load_rhs(path: Option<&Path>, n: usize) -> CliResult<Vec<f64>> {
    let Some(p) = path else {
        return Ok(vec![1.0; n]);
    };
    let z = load_vector(p)?;
    if z.len() != n {
        return Err(CliError::Input(format!("{}: right-hand side has {} entries, expected {n}", p.display(), z.len())));
    }
    Ok(z)
}

fn unit_system(m: &MatrixArgs) -> CliResult<(UnitDiagonalSystem, String)> {
    let (b, label) = load_matrix(m)?;
    if !b.is_square() {
        return Err(CliError::Input(format!("{label}: matrix is {}x{}, expected square", b.n_rows(), b.n_cols())));
    }
    let z = load_rhs(m.rhs.as_deref(), b.n_rows())?;
    Ok((rescale_to_unit_diagonal(&b, &z)?, label))
}

fn overrides(s: &SolverFlags, p: Option<&AsyncFlags>) -> Overrides {
    Overrides {
        sweeps: s.sweeps,
        iterations: s.iterations,
        seed: s.seed,
        beta: s.beta,
        checkpoint_every: s.checkpoint_every,
        threads: p.and_then(|p| p.threads),
        plain_writes: p.is_some_and(|p| p.plain_writes),
        sync_period: p.and_then(|p| p.sync_period),
        instrument: p.is_some_and(|p| p.instrument),
        exact: s.exact,
    }
}

fn write_trace(out: &OutputArgs, command: &str, trace: &ErrorTrace, summary: &Value, meta: Option<Value>) -> CliResult<()> {
    if let Some(path) = &out.output {
        emit_trace(trace, Format::resolve(out.format, path), path, command, summary, meta)?;
    }
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn solve(a: SolveArgs) -> CliResult<Outcome> {
    let cfg = RunConfig::load(a.solver.config.as_deref())?;
    let (sys, label) = unit_system(&a.matrix)?;
    let n = sys.dim();
    let (base, acfg) = resolve_solver(&cfg, &overrides(&a.solver, Some(&a.parallel)), n)?;
    let x_star = if base.record_a_norm_error {
        Some(dense_solve(sys.matrix(), sys.rhs()).map_err(|e| CliError::from(e).context("reference solution"))?)
    } else {
        None
    };
    let x0 = vec![0.0; n];
    let start = Instant::now();
    let (x, trace, meta) = match &acfg {
        Some(ac) => {
            let r = solve_async(&sys, ac, &x0, x_star.as_deref())?;
            (r.x, r.trace, Some(to_value(&r.metadata)))
        }
        None => {
            let (x, t) = solve_sync(&sys, &base, &x0, x_star.as_deref())?;
            (x, t, None)
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let residual = sys.residual_norm(&x);
    let summary = json!({
        "command": "solve",
        "matrix": label,
        "n": n,
        "iterations": base.total_iterations,
        "threads": acfg.as_ref().map(|c| c.threads),
        "final_residual": residual,
        "relative_residual": residual / norm2(sys.rhs()),
        "a_norm_error_sq": trace.last_error(),
        "wall_time_seconds": wall,
    });
    write_trace(&a.out, "solve", &trace, &summary, meta.clone())?;
    if let Some(p) = &a.solution {
        write_vector(&sys.to_original(&x), p)?;
    }
    if let (Some(p), Some(m)) = (&a.metadata, &meta) {
        write_json(p, m)?;
    }
    Ok(Outcome::ok(summary))
}

fn lsq(a: SolveArgs) -> CliResult<Outcome> {
    let cfg = RunConfig::load(a.solver.config.as_deref())?;
    let (mat, label) = load_matrix(&a.matrix)?;
    let b = load_rhs(a.matrix.rhs.as_deref(), mat.n_rows())?;
    let sys = LsqSystem::from_rows(&mat, &b)?;
    let n = sys.n_cols();
    let (base, acfg) = resolve_solver(&cfg, &overrides(&a.solver, Some(&a.parallel)), n)?;
    let x_star = if base.record_a_norm_error {
        Some(dense_lsq_solve(sys.rows(), sys.rhs()).map_err(|e| CliError::from(e).context("reference solution"))?)
    } else {
        None
    };
    let x0 = vec![0.0; n];
    let start = Instant::now();
    let (x, trace, meta) = match &acfg {
        Some(ac) => {
            let r = solve_lsq_async(&sys, ac, &x0, x_star.as_deref())?;
            (r.x, r.trace, Some(to_value(&r.metadata)))
        }
        None => {
            let (x, t) = solve_lsq_sync(&sys, &base, &x0, x_star.as_deref())?;
            (x, t, None)
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let summary = json!({
        "command": "lsq",
        "matrix": label,
        "rows": sys.n_rows(),
        "n": n,
        "iterations": base.total_iterations,
        "threads": acfg.as_ref().map(|c| c.threads),
        "final_residual": sys.residual_norm(&x),
        "x_norm_error_sq": trace.last_error(),
        "wall_time_seconds": wall,
    });
    write_trace(&a.out, "lsq", &trace, &summary, meta.clone())?;
    if let Some(p) = &a.solution {
        write_vector(&sys.to_original(&x), p)?;
    }
    if let (Some(p), Some(m)) = (&a.metadata, &meta) {
        write_json(p, m)?;
    }
    Ok(Outcome::ok(summary))
}

fn schedule(a: &SimulateArgs, cfg: &RunConfig) -> CliResult<DelaySchedule> {
    if let Some(p) = &a.schedule_file {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::Config(format!("cannot read schedule {}: {e}", p.display())))?;
        return serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())));
    }
    let mut s = match a.schedule {
        Some(kind) => make_schedule(kind, a.tau.unwrap_or(0), a.schedule_seed.unwrap_or(0)),
        None => cfg.schedule.clone().unwrap_or_else(DelaySchedule::none),
    };
    if a.schedule.is_none() {
        if let Some(t) = a.tau {
            s.tau = t;
        }
        if let Some(seed) = a.schedule_seed {
            s.seed = seed;
        }
    }
    if let Some(p) = a.drop_probability {
        s = s.with_drop_probability(p);
    }
    Ok(s)
}

/// Checkpoints `0, every, 2·every, …` plus the final step.
fn trace_from_iterates(sys: &UnitDiagonalSystem, xs: &[Vec<f64>], every: u64, x_star: Option<&[f64]>, start: Instant) -> ErrorTrace {
    let mut t = ErrorTrace {
        a_norm_error_sq: x_star.map(|_| Vec::new()),
        ..ErrorTrace::default()
    };
    let last = xs.len() as u64 - 1;
    for (j, x) in xs.iter().enumerate() {
        let j = j as u64;
        if j % every != 0 && j != last {
            continue;
        }
        t.checkpoint_index.push(j);
        t.residual_2norm.push(sys.residual_norm(x));
        if let (Some(e), Some(s)) = (t.a_norm_error_sq.as_mut(), x_star) {
            e.push(sys.a_norm_error_sq(x, s));
        }
        t.wall_time_seconds.push(start.elapsed().as_secs_f64());
    }
    t
}

fn simulate(a: SimulateArgs) -> CliResult<Outcome> {
    let cfg = RunConfig::load(a.solver.config.as_deref())?;
    let (sys, label) = unit_system(&a.matrix)?;
    let n = sys.dim();
    let mut ov = overrides(&a.solver, None);
    if let Some(d) = &a.directions {
        if ov.sweeps.is_some() || ov.iterations.is_some() {
            return Err(CliError::Config("--directions fixes the iteration count".into()));
        }
        ov.iterations = Some(d.len() as u64);
    }
    let (base, _) = resolve_solver(&cfg, &ov, n)?;
    let model = a.model.or(cfg.model).unwrap_or(ReadModel::Consistent);
    let sched = schedule(&a, &cfg)?;
    sched.validate(base.total_iterations, model)?;
    let x_star = if base.record_a_norm_error {
        Some(dense_solve(sys.matrix(), sys.rhs())?)
    } else {
        None
    };
    let x0 = vec![0.0; n];
    let start = Instant::now();
    let explicit = a.directions.clone();
    let (x_final, trace, iterates) = if explicit.is_some() || a.trajectory.is_some() {
        let dirs = match explicit {
            Some(d) => {
                if let Some(bad) = d.iter().find(|&&r| r >= n) {
                    return Err(CliError::Config(format!("direction {bad} out of range for n = {n}")));
                }
                d
            }
            None => DirectionStream::new(base.seed, n).iter(0, base.total_iterations).collect(),
        };
        let xs = replay_directions(&sys, base.beta, &sched, model, &x0, &dirs)?;
        let every = base.checkpoint_every.max(1);
        let trace = trace_from_iterates(&sys, &xs, every, x_star.as_deref(), start);
        (xs.last().cloned().unwrap_or(x0.clone()), trace, Some(xs))
    } else {
        let r = replay(&sys, &base, &sched, model, &x0, x_star.as_deref())?;
        (r.x_final, r.trace, None)
    };
    let wall = start.elapsed().as_secs_f64();
    let summary = json!({
        "command": "simulate",
        "matrix": label,
        "n": n,
        "iterations": base.total_iterations,
        "model": model,
        "schedule": sched.descriptor(),
        "final_residual": sys.residual_norm(&x_final),
        "a_norm_error_sq": trace.last_error(),
        "wall_time_seconds": wall,
    });
    write_trace(&a.out, "simulate", &trace, &summary, None)?;
    if let (Some(p), Some(xs)) = (&a.trajectory, iterates) {
        let original: Vec<Vec<f64>> = xs.iter().map(|x| sys.to_original(x)).collect();
        emit_trajectory(&original, Format::resolve(a.out.format, p), p)?;
    }
    Ok(Outcome::ok(summary))
}

fn spectrum_of(a: &SparseMatrix, lambda_min: Option<f64>) -> CliResult<SpectralEstimates> {
    if a.n_rows() <= DEFAULT_DENSE_CAP {
        return Ok(exact_dense_spectrum(a, DEFAULT_DENSE_CAP)?);
    }
    let lmax = estimate_lambda_max(a, 1e-10, 100_000, 0)?;
    let lmin = lambda_min.ok_or_else(|| {
        CliError::Config(format!("n = {} exceeds the dense cap {DEFAULT_DENSE_CAP}; pass --lambda-min", a.n_rows()))
    })?;
    Ok(SpectralEstimates::user_supplied(lmin, lmax)?)
}

fn bounds(a: BoundsArgs) -> CliResult<Outcome> {
    let tau = a.tau.unwrap_or(0);
    let beta = a.beta.unwrap_or(1.0);
    let missing = |what: &str| CliError::Config(format!("bounds needs --{what}"));
    let p = if let Some(path) = &a.params {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut p: TheoryParams =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(t) = a.tau {
            p.tau = t;
        }
        if let Some(b) = a.beta {
            p.beta = b;
        }
        p
    } else if a.matrix.is_some() || a.recipe.is_some() {
        let m = MatrixArgs {
            matrix: a.matrix.clone(),
            recipe: a.recipe,
            rhs: None,
        };
        let (sys, _) = unit_system(&m)?;
        let stats = compute_stats(sys.matrix())?;
        let mut spec = spectrum_of(sys.matrix(), a.lambda_min)?;
        if a.lambda_min.is_some() || a.lambda_max.is_some() {
            spec = SpectralEstimates::user_supplied(
                a.lambda_min.unwrap_or(spec.lambda_min),
                a.lambda_max.unwrap_or(spec.lambda_max),
            )?;
        }
        TheoryParams::from_estimates(&stats, &spec, tau, beta)?
    } else if let (Some(smin), Some(smax)) = (a.sigma_min, a.sigma_max) {
        let n = a.n.ok_or_else(|| missing("n"))?;
        TheoryParams::for_lsq(n, smin, smax, a.rho2.unwrap_or(0.0), tau, beta)?
    } else {
        let n = a.n.ok_or_else(|| missing("n"))?;
        let lmax = a.lambda_max.ok_or_else(|| missing("lambda-max"))?;
        let lmin = match (a.lambda_min, a.kappa) {
            (Some(l), _) => l,
            (None, Some(k)) => lmax / k,
            (None, None) => return Err(missing("lambda-min or --kappa")),
        };
        TheoryParams::new(n, lmin, lmax, a.rho.unwrap_or(0.0), a.rho2.unwrap_or(0.0), tau, beta)?
    };
    p.validate()?;
    let report = bound_report(&p, a.e0, a.r)?;
    if let Some(path) = &a.output {
        write_json(path, &report)?;
    }
    let mut summary = to_value(&report);
    summary["command"] = json!("bounds");
    Ok(Outcome::ok(summary))
}

fn stats(a: StatsArgs) -> CliResult<Outcome> {
    let (b, label) = load_matrix(&a.matrix)?;
    if !b.is_square() {
        let (m, n) = (b.n_rows(), b.n_cols());
        return Err(CliError::Input(format!("{label}: matrix is {m}x{n}, expected square")));
    }
    let z = load_rhs(a.matrix.rhs.as_deref(), b.n_rows())?;
    let sys = rescale_to_unit_diagonal(&b, &z)?;
    let s = compute_stats(sys.matrix())?;
    let mut summary = to_value(&s);
    summary["command"] = json!("stats");
    summary["matrix"] = json!(label);
    if a.spectrum {
        summary["spectrum"] = to_value(&spectrum_of(sys.matrix(), None)?);
    }
    if let Some(path) = &a.output {
        write_json(path, &summary)?;
    }
    Ok(Outcome::ok(summary))
}

#[derive(Debug, Serialize)]
struct BenchRow {
    matrix: String,
    n: usize,
    nnz: usize,
    threads: usize,
    atomic_writes: bool,
    repetition: usize,
    seed: u64,
    iterations: u64,
    relative_residual: f64,
    wall_time_seconds: f64,
    iterations_per_second: f64,
    max_in_flight_spread: u64,
    collision_rate: Option<f64>,
    collision_heuristic: Option<f64>,
}

fn bench(a: BenchArgs) -> CliResult<Outcome> {
    if a.repetitions == 0 {
        return Err(CliError::Config("repetitions must be at least 1".into()));
    }
    let mut problems = Vec::new();
    for r in &a.recipes {
        problems.push((generate(r)?, r.to_string()));
    }
    for p in &a.matrices {
        problems.push((load_matrix_market(p)?, p.display().to_string()));
    }
    let start = Instant::now();
    let mut rows = Vec::new();
    for (b, label) in &problems {
        let sys = rescale_to_unit_diagonal(b, &vec![1.0; b.n_rows()])?;
        let n = sys.dim();
        let b_norm = norm2(sys.rhs());
        for &threads in &a.threads {
            for rep in 0..a.repetitions {
                let seed = repetition_seed(a.seed, rep);
                let base = asyrgs_core::SolveConfig::sweeps(n, a.sweeps, seed).with_beta(a.beta);
                let mut cfg = AsyncConfig::new(base, threads).with_instrumentation(a.instrument);
                cfg.atomic_writes = !a.plain_writes;
                cfg.validate()?;
                let r = solve_async(&sys, &cfg, &vec![0.0; n], None)?;
                let m = &r.metadata;
                rows.push(BenchRow {
                    matrix: label.clone(),
                    n,
                    nnz: sys.matrix().nnz(),
                    threads,
                    atomic_writes: cfg.atomic_writes,
                    repetition: rep,
                    seed,
                    iterations: m.total_iterations,
                    relative_residual: sys.residual_norm(&r.x) / b_norm,
                    wall_time_seconds: m.wall_time_seconds,
                    iterations_per_second: m.total_iterations as f64 / m.wall_time_seconds.max(f64::MIN_POSITIVE),
                    max_in_flight_spread: m.max_in_flight_spread,
                    collision_rate: m.collisions.map(|c| c.rate_any),
                    collision_heuristic: m.collisions.map(|c| c.heuristic_any),
                });
            }
        }
    }
    if let Some(path) = &a.out.output {
        emit_table(&rows, Format::resolve(a.out.format, path), path)?;
    }
    let worst = rows.iter().map(|r| r.relative_residual).fold(0.0f64, |m, v| if v.is_nan() { v } else { m.max(v) });
    let summary = json!({
        "command": "bench",
        "runs": rows.len(),
        "worst_relative_residual": worst,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
    });
    let failure = match a.tol {
        Some(tol) if !(worst <= tol) => Some(CliError::NonConvergence(format!(
            "worst relative residual {worst:e} above tolerance {tol:e}"
        ))),
        _ => None,
    };
    Ok(Outcome { summary, failure })
}

fn fcg(a: FcgArgs) -> CliResult<Outcome> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let (sys, label) = unit_system(&a.matrix)?;
    let n = sys.dim();
    let mut fc = cfg.fcg.clone().unwrap_or_else(|| FcgConfig::new(a.inner_sweeps.unwrap_or(1), a.seed.unwrap_or(0)));
    if let Some(s) = a.inner_sweeps {
        fc.inner_sweeps = s;
    }
    if let Some(s) = a.seed {
        fc.inner.base.seed = s;
    }
    if let Some(t) = a.threads {
        fc.inner.threads = t;
    }
    if let Some(t) = a.tol {
        fc.tol = t;
    }
    if let Some(m) = a.max_outer {
        fc.max_outer = m;
    }
    fc.validate()?;
    let start = Instant::now();

    if let Some(grid) = &a.grid {
        let rows = sweep_tradeoff_experiment(&sys, &fc, grid, a.repetitions)?;
        if let Some(path) = &a.out.output {
            emit_table(&rows, Format::resolve(a.out.format, path), path)?;
        }
        let unconverged: Vec<u64> = rows
            .iter()
            .filter(|r| r.converged_runs < r.repetitions)
            .map(|r| r.inner_sweeps)
            .collect();
        let summary = json!({
            "command": "fcg",
            "matrix": label,
            "n": n,
            "grid": grid,
            "outer_iterations": rows.iter().map(|r| r.outer_iterations).collect::<Vec<_>>(),
            "mat_ops": rows.iter().map(|r| r.mat_ops).collect::<Vec<_>>(),
            "wall_time_seconds": start.elapsed().as_secs_f64(),
        });
        let failure = (!unconverged.is_empty())
            .then(|| CliError::NonConvergence(format!("runs failed to converge for inner sweeps {unconverged:?}")));
        return Ok(Outcome { summary, failure });
    }

    let (x, report) = fcg_solve(&sys, &fc, &vec![0.0; n])?;
    let summary = json!({
        "command": "fcg",
        "matrix": label,
        "n": n,
        "inner_sweeps": fc.inner_sweeps,
        "outer_iterations": report.outer_iterations,
        "matrix_operations": report.matrix_operations,
        "converged": report.converged,
        "final_residual": sys.residual_norm(&x),
        "relative_residual": report.relative_residual,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
    });
    write_trace(&a.out, "fcg", &report.trace, &summary, None)?;
    if let Some(p) = &a.solution {
        write_vector(&sys.to_original(&x), p)?;
    }
    let failure = (!report.converged).then(|| {
        CliError::NonConvergence(format!(
            "relative residual {:e} above {:e} after {} outer iterations",
            report.relative_residual, fc.tol, report.outer_iterations
        ))
    });
    Ok(Outcome { summary, failure })
}

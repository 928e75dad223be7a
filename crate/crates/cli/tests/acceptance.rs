//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hjbqvi_cli::{parse_str, run};
use hjbqvi_core::grid::{overstep_threshold, steps_for};
use hjbqvi_core::harness::{
    check_monotonicity, penalty_monotonicity, semilag_monotonicity, MonotoneMap, Reference,
    StudyOptions, Window,
};
use hjbqvi_core::matrix::SparseMatrix;
use hjbqvi_core::{
    assemble_a, brute_force_residual, builtin, check_matrix_properties, check_stability_bound,
    cross_scheme_study, random_problem, run_refinement_study, solve_iterated_optimal_stopping,
    solve_scheme, sup_error, Controls, Error, Grid, Horizon, Problem, Scheme, SolverConfig,
    Surface,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn ensure(ok: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!("took {elapsed:.2?}, limit {limit:?}")
    })
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn problem(name: &str, pairs: &[(&str, f64)]) -> Problem {
    builtin(name, &params(pairs)).expect("builtin problem")
}

/// A solve produced while checking one of the first five criteria.
struct Run {
    label: String,
    problem: Problem,
    controls: Controls,
    sol: Surface,
}

fn solve(
    label: impl Into<String>,
    scheme: Scheme,
    problem: &Problem,
    grid: &Grid,
    cfg: &SolverConfig,
) -> Result<Run, String> {
    let label = label.into();
    let controls = Controls::new(problem, grid.rho()).map_err(|e| e.to_string())?;
    let sol =
        solve_scheme(scheme, problem, grid, &controls, cfg).map_err(|e| format!("{label}: {e}"))?;
    Ok(Run {
        label,
        problem: problem.clone(),
        controls,
        sol,
    })
}

fn constant_runs() -> Result<Vec<Run>, String> {
    let p = problem("constant", &[("c", 5.0)]);
    let g = Grid::uniform(2.0, 16, 16, 1.0).map_err(|e| e.to_string())?;
    let cfg = SolverConfig::default();
    Ok(vec![
        solve("constant/penalty", Scheme::Penalty, &p, &g, &cfg)?,
        solve(
            "constant/semilagrangian",
            Scheme::SemiLagrangian,
            &p,
            &g,
            &cfg,
        )?,
    ])
}

fn stability_runs() -> Result<Vec<Run>, String> {
    let cfg = SolverConfig::default();
    let mut runs = Vec::new();
    let finite = [
        ("constant", problem("constant", &[("c", 5.0)])),
        ("heat", problem("heat", &[])),
        ("cash", problem("cash", &[])),
    ];
    for (name, p) in &finite {
        let t = p.t_final().map_err(|e| e.to_string())?;
        let g = Grid::uniform_from_rho(4.0, 0.2, 1.0, 1.0, t).map_err(|e| e.to_string())?;
        for scheme in [
            Scheme::Penalty,
            Scheme::SemiLagrangian,
            Scheme::IteratedStopping,
        ] {
            runs.push(solve(
                format!("{name}/{}", scheme.name()),
                scheme,
                p,
                &g,
                &cfg,
            )?);
        }
    }
    let g = Grid::uniform_from_rho(4.0, 0.2, 1.0, 1.0, 1.0).map_err(|e| e.to_string())?;
    for (name, p) in [
        (
            "constant",
            problem("constant", &[("c", 5.0), ("beta", 0.7)]),
        ),
        ("heat", problem("heat", &[("beta", 0.5)])),
        ("cash", problem("cash", &[("beta", 0.5)])),
    ] {
        runs.push(solve(
            format!("{name}/stationary"),
            Scheme::Penalty,
            &p,
            &g,
            &cfg,
        )?);
    }
    for seed in 1..=5u64 {
        let p = random_problem::<f64>(seed, Horizon::Finite { t_final: 1.0 });
        let g = Grid::uniform_from_rho(3.0, 0.2, 1.0, 1.0, 1.0).map_err(|e| e.to_string())?;
        runs.push(solve(
            format!("random-{seed}/penalty"),
            Scheme::Penalty,
            &p,
            &g,
            &cfg,
        )?);
        runs.push(solve(
            format!("random-{seed}/semilagrangian"),
            Scheme::SemiLagrangian,
            &p,
            &g,
            &cfg,
        )?);
        let p = random_problem::<f64>(seed, Horizon::Infinite { beta: 0.8 });
        runs.push(solve(
            format!("random-{seed}/stationary"),
            Scheme::Penalty,
            &p,
            &g,
            &cfg,
        )?);
    }
    // dt / dx^2 from 0.1 to 100 with dx = 0.1.
    let heat = problem("heat", &[]);
    for ratio in [0.1, 1.0, 10.0, 100.0] {
        let n = steps_for(1.0, ratio * 0.01).map_err(|e| e.to_string())?;
        let g = Grid::uniform(2.0, 20, n, 1.0).map_err(|e| e.to_string())?;
        for scheme in [Scheme::Penalty, Scheme::SemiLagrangian] {
            runs.push(solve(
                format!("heat/{}/dt_dx2={ratio}", scheme.name()),
                scheme,
                &heat,
                &g,
                &cfg,
            )?);
        }
    }
    Ok(runs)
}

fn heat_runs() -> Result<(Vec<Run>, String), String> {
    let p = problem("heat", &[]);
    let base = Grid::uniform_from_rho(8.0, 0.2, 1.0, 1.0, 1.0).map_err(|e| e.to_string())?;
    let window = Window {
        t_range: (0.0, 1.0),
        x_range: (-4.0, 4.0),
    };
    let options = StudyOptions {
        window: Some(window),
        ..StudyOptions::new(4)
    };
    let mut runs = Vec::new();
    let mut summary = Vec::new();
    for scheme in [Scheme::Penalty, Scheme::SemiLagrangian] {
        let study = run_refinement_study(&p, &base, scheme, &SolverConfig::default(), &options)
            .map_err(|e| e.to_string())?;
        let errors: Vec<f64> = study
            .report
            .errors()
            .into_iter()
            .map(|e| e.unwrap_or(f64::NAN))
            .collect();
        ensure(errors.windows(2).all(|w| w[1] < w[0]), || {
            format!("{}: errors not decreasing {errors:?}", scheme.name())
        })?;
        let order = study
            .report
            .orders
            .last()
            .copied()
            .flatten()
            .unwrap_or(f64::NAN);
        ensure((0.7..=1.3).contains(&order), || {
            format!("{}: final order {order}", scheme.name())
        })?;
        summary.push(format!(
            "{} errors {:.2e}..{:.2e} order {order:.3}",
            scheme.name(),
            errors[0],
            errors[3]
        ));
        for (level, sol) in study.solutions.into_iter().enumerate() {
            let sol = sol.ok_or_else(|| format!("{} level {level} failed", scheme.name()))?;
            let controls = Controls::new(&p, sol.grid.rho()).map_err(|e| e.to_string())?;
            runs.push(Run {
                label: format!("heat/{}/level {level}", scheme.name()),
                problem: p.clone(),
                controls,
                sol,
            });
        }
    }
    Ok((runs, summary.join("; ")))
}

fn cash_cross_runs() -> Result<(Vec<Run>, String), String> {
    let p = problem("cash", &[]);
    let cfg = SolverConfig::default();
    let base = Grid::uniform_from_rho(4.0, 0.2, 1.0, 1.0, 3.0).map_err(|e| e.to_string())?;
    let window = Window::interior(&base).initial();
    let cross = cross_scheme_study(
        &p,
        &base,
        (Scheme::Penalty, Scheme::SemiLagrangian),
        3,
        &cfg,
        &window,
    )
    .map_err(|e| e.to_string())?;
    let diffs: Vec<f64> = cross.iter().map(|c| c.difference).collect();
    ensure(diffs.windows(2).all(|w| w[1] < w[0]), || {
        format!("differences not decreasing {diffs:?}")
    })?;
    ensure(diffs[2] <= 5e-2, || {
        format!("finest difference {} > 5e-2", diffs[2])
    })?;
    let mut runs = Vec::new();
    for level in 0..3 {
        let g = base.for_level(level).map_err(|e| e.to_string())?;
        for scheme in [Scheme::Penalty, Scheme::SemiLagrangian] {
            runs.push(solve(
                format!("cash/{}/rho={}", scheme.name(), g.rho()),
                scheme,
                &p,
                &g,
                &cfg,
            )?);
        }
    }
    Ok((
        runs,
        format!(
            "u0 differences {:?}",
            diffs.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>()
        ),
    ))
}

fn ios_runs() -> Result<(Vec<Run>, String), String> {
    let p = problem("cash", &[]);
    let g = Grid::uniform_from_rho(4.0, 0.1, 1.0, 1.0, 3.0).map_err(|e| e.to_string())?;
    let controls = Controls::new(&p, g.rho()).map_err(|e| e.to_string())?;
    let cfg = SolverConfig {
        epsilon: Some(0.1),
        ..SolverConfig::default()
    };
    let ios =
        solve_iterated_optimal_stopping(&p, &g, &controls, &cfg).map_err(|e| e.to_string())?;
    let direct = solve("cash/penalty/eps=0.1", Scheme::Penalty, &p, &g, &cfg)?;
    let full = Window {
        t_range: (0.0, 3.0),
        x_range: (-4.0, 4.0),
    };
    let diff = sup_error(&ios.solution, &Reference::Solution(&direct.sol), &full);
    let limit = 10.0 * (0.1 + cfg.outer_tol);
    ensure(diff <= limit, || {
        format!("IOS vs penalty {diff:.3e} > {limit:.3e}")
    })?;
    ensure(ios.outer.monotone(0.0), || {
        format!("iterates decrease by {:.3e}", -ios.outer.worst_decrease)
    })?;
    let summary = format!(
        "difference {diff:.3e} <= {limit:.3e}, {} outer iterations, nondecreasing",
        ios.outer.iterations
    );
    let ios_run = Run {
        label: "cash/ios".into(),
        problem: p.clone(),
        controls,
        sol: ios.solution,
    };
    Ok((vec![ios_run, direct], summary))
}

fn all_runs() -> Result<Vec<Run>, String> {
    let mut runs = constant_runs()?;
    runs.extend(stability_runs()?);
    runs.extend(heat_runs()?.0);
    runs.extend(cash_cross_runs()?.0);
    runs.extend(ios_runs()?.0);
    Ok(runs)
}

fn criterion_1() -> Outcome {
    let runs = constant_runs()?;
    let mut worst: f64 = 0.0;
    for run in &runs {
        for u in &run.sol.surface {
            for v in u.iter() {
                worst = worst.max((v - 5.0).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max |u - 5| = {worst:e}"))?;
    Ok(format!("max |u - 5| = {worst:e} over both schemes"))
}

fn criterion_2() -> Outcome {
    let runs = stability_runs()?;
    let mut tightest = f64::INFINITY;
    for run in &runs {
        let check = check_stability_bound(&run.sol, &run.problem, &run.controls);
        ensure(check.passed, || {
            format!(
                "{}: max |u| = {} > bound {}",
                run.label, check.worst, check.bound
            )
        })?;
        tightest = tightest.min(check.bound - check.worst);
    }
    Ok(format!(
        "{} solves within their bounds (smallest margin {tightest:.3e})",
        runs.len()
    ))
}

fn criterion_3() -> Outcome {
    Ok(heat_runs()?.1)
}

fn criterion_4() -> Outcome {
    Ok(cash_cross_runs()?.1)
}

fn criterion_5() -> Outcome {
    Ok(ios_runs()?.1)
}

fn criterion_6() -> Outcome {
    let runs = all_runs()?;
    let mut penalty_systems = 0;
    let mut sl_matrices = 0;
    for run in &runs {
        match run.sol.scheme {
            Scheme::SemiLagrangian => {
                let a = assemble_a(&run.sol.grid, &run.problem).map_err(|e| e.to_string())?;
                let report = check_matrix_properties(&a);
                ensure(report.passed() && report.strictly_dominant(), || {
                    format!("{}: {report:?}", run.label)
                })?;
                sl_matrices += 1;
            }
            _ => {
                // Every assembled system is certified before it is solved.
                let checked = run.sol.systems_checked();
                ensure(checked > 0 && checked == run.sol.total_iterations(), || {
                    format!(
                        "{}: {checked} of {} systems certified",
                        run.label,
                        run.sol.total_iterations()
                    )
                })?;
                penalty_systems += checked;
            }
        }
    }
    let fixture = SparseMatrix::from_dense(&[
        vec![1.0, -1.0, 0.0],
        vec![-1.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0],
    ]);
    let report = check_matrix_properties(&fixture);
    ensure(!report.wcdd && report.unreachable_rows == [0, 1], || {
        format!("fixture accepted: {report:?}")
    })?;
    let rejected =
        matches!(report.into_result(), Err(Error::NotWcdd { ref rows }) if rows == &[0, 1]);
    ensure(rejected, || {
        "fixture not rejected with witness rows [0, 1]".into()
    })?;
    Ok(format!(
        "{penalty_systems} penalty systems WCDD, {sl_matrices} SL matrices strictly dominant, 3x3 fixture rejected (rows 0, 1)"
    ))
}

fn criterion_7() -> Outcome {
    let mut lines = Vec::new();
    for (name, p) in [
        ("heat", problem("heat", &[])),
        ("cash", problem("cash", &[("s", 0.3)])),
    ] {
        let t = p.t_final().map_err(|e| e.to_string())?;
        let g = Grid::uniform_from_rho(2.0, 0.25, 1.0, 1.0, t).map_err(|e| e.to_string())?;
        let c = Controls::new(&p, g.rho()).map_err(|e| e.to_string())?;
        let pen =
            penalty_monotonicity(&p, &g, &c, g.rho(), 0.5, 100, 11).map_err(|e| e.to_string())?;
        let sl = semilag_monotonicity(&p, &g, &c, 0.5, 100, 11).map_err(|e| e.to_string())?;
        ensure(pen.passed(), || {
            format!("{name} penalty: {:?}", pen.first_violation)
        })?;
        ensure(sl.passed(), || {
            format!("{name} SL: {:?}", sl.first_violation)
        })?;
        lines.push(format!("{name} 0/100 + 0/100"));
    }
    // Mutation: upwinding against the drift.
    let p = problem("cash", &[("s", 0.1)]);
    let g = Grid::uniform_from_rho(2.0, 0.25, 1.0, 1.0, 3.0).map_err(|e| e.to_string())?;
    let c = Controls::new(&p, g.rho()).map_err(|e| e.to_string())?;
    let dt = g.dt();
    let mutant = |u: &[f64], next: &[f64]| -> hjbqvi_core::Result<Vec<f64>> {
        Ok((0..g.len())
            .map(|i| {
                if g.is_boundary(i) {
                    return -(next[i] - u[i]) / dt;
                }
                let (h, x) = (g.spacing(i), g.x(i));
                let mut best = f64::NEG_INFINITY;
                for &b in c.controls() {
                    let mu = p.mu(x, b);
                    let d1 = if mu >= 0.0 {
                        (u[i] - u[i - 1]) / h
                    } else {
                        (u[i + 1] - u[i]) / h
                    };
                    let s = p.sigma(x, b);
                    let d2 = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h);
                    best = best
                        .max((next[i] - u[i]) / dt + mu * d1 + 0.5 * s * s * d2 + p.f(0.0, x, b));
                }
                -best
            })
            .collect())
    };
    let caught = check_monotonicity(&MonotoneMap::Residual(&mutant), g.len(), 100, 11)
        .map_err(|e| e.to_string())?;
    ensure(caught.violations >= 1, || {
        "flipped upwinding not detected".into()
    })?;
    Ok(format!(
        "{}; mutation caught in {}/100 trials",
        lines.join(", "),
        caught.violations
    ))
}

fn criterion_8() -> Outcome {
    let runs = all_runs()?;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for run in runs
        .iter()
        .filter(|r| r.sol.scheme == Scheme::Penalty && !r.sol.stationary)
    {
        let eps = run.sol.epsilon.ok_or("penalty solution without epsilon")?;
        let r = brute_force_residual(
            &run.sol.surface,
            &run.problem,
            &run.sol.grid,
            &run.controls,
            eps,
        )
        .map_err(|e| e.to_string())?;
        ensure(r <= 1e-8, || format!("{}: residual {r:e}", run.label))?;
        worst = worst.max(r);
        count += 1;
    }
    Ok(format!(
        "{count} penalty solutions, worst residual {worst:.3e}"
    ))
}

fn criterion_9() -> Outcome {
    let p = problem("cash", &[("b_max", 0.5)]);
    let cfg = SolverConfig::default();
    let mut uniform = Vec::new();
    for rho in [0.2, 0.1, 0.05] {
        let g = Grid::uniform_from_rho(4.0, rho, 1.0, 1.0, 3.0).map_err(|e| e.to_string())?;
        uniform.push(
            solve("uniform", Scheme::SemiLagrangian, &p, &g, &cfg)?
                .sol
                .clamped_feet(),
        );
    }
    ensure(uniform.iter().any(|&n| n >= 1), || {
        "no clamped foot on uniform grids".into()
    })?;

    let (c_b, c_t) = (1.0, 1.0);
    let probe = Grid::uniform(4.0, 400, 1, 3.0).map_err(|e| e.to_string())?;
    let controls = Controls::new(&p, 0.01).map_err(|e| e.to_string())?;
    let mut mu_max: f64 = 0.0;
    for &x in probe.nodes() {
        for &b in controls.controls() {
            mu_max = mu_max.max(p.mu(x, b).abs());
        }
    }
    let threshold = overstep_threshold(c_b, mu_max, c_t);
    let mut refined = Vec::new();
    for rho in [0.4, 0.2, 0.1, 0.05] {
        ensure(rho < threshold, || {
            format!("rho {rho} above threshold {threshold}")
        })?;
        let n = steps_for(3.0, c_t * rho).map_err(|e| e.to_string())?;
        let g = Grid::boundary_refined(4.0, rho, c_b, n, 3.0).map_err(|e| e.to_string())?;
        refined.push(
            solve("refined", Scheme::SemiLagrangian, &p, &g, &cfg)?
                .sol
                .clamped_interior(),
        );
    }
    ensure(refined.iter().all(|&n| n == 0), || {
        format!("interior feet clamped on refined grids: {refined:?}")
    })?;
    Ok(format!(
        "uniform clamped feet {uniform:?}; refined interior clamps {refined:?} below threshold rho = {threshold}"
    ))
}

fn files_equal(a: &Path, b: &Path, names: &[&str]) -> Result<(), String> {
    for name in names {
        let x = fs::read(a.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = fs::read(b.join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure(x == y, || format!("{name} differs between runs"))?;
    }
    Ok(())
}

fn criterion_10() -> Outcome {
    let configs = [
        ("solve", "problem = \"cash\"\nscheme = \"penalty\"\nseed = 42\nQ = 4\nrho = 0.2\n[study]\nmonotonicity_trials = 25\n"),
        ("solve", "problem = \"cash\"\nscheme = \"ios\"\nseed = 7\nQ = 4\nrho = 0.25\n"),
        ("study", "problem = \"heat\"\nscheme = \"semilagrangian\"\nseed = 3\nQ = 8\nrho = 0.4\n[study]\nlevels = 3\n"),
        ("study", "problem = \"cash\"\nscheme = \"penalty\"\nseed = 5\nQ = 4\nrho = 0.4\n[study]\nlevels = 2\n"),
    ];
    let names = [run::SOLUTION_FILE, run::REPORT_FILE, run::PLOT_FILE];
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (k, (command, text)) in configs.iter().enumerate() {
        let spec = parse_str(text).map_err(|e| e.to_string())?;
        let dirs = [
            root.path().join(format!("{k}a")),
            root.path().join(format!("{k}b")),
        ];
        for dir in &dirs {
            let outcome = match *command {
                "solve" => run::solve(&spec, Some(dir), true),
                _ => run::study(&spec, Some(dir), None),
            }
            .map_err(|e| format!("{e:#}"))?;
            ensure(outcome.success(), || {
                format!("run {k} failed: {:?}", outcome.failures)
            })?;
        }
        files_equal(&dirs[0], &dirs[1], &names)?;
    }
    Ok(format!(
        "{} configurations, solution.csv/report.json/plotdata.csv byte-identical",
        configs.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 constant exactness", criterion_1, Duration::from_secs(1)),
        ("2 stability bounds", criterion_2, Duration::from_secs(30)),
        ("3 heat convergence", criterion_3, Duration::from_secs(120)),
        (
            "4 cross-scheme agreement",
            criterion_4,
            Duration::from_secs(120),
        ),
        ("5 oracle agreement", criterion_5, Duration::from_secs(120)),
        ("6 matrix properties", criterion_6, Duration::MAX),
        ("7 monotonicity", criterion_7, Duration::MAX),
        ("8 residual oracle", criterion_8, Duration::MAX),
        ("9 overstepping remedy", criterion_9, Duration::MAX),
        ("10 determinism", criterion_10, Duration::MAX),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|e| {
            let message = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {message}"))
        });
        let elapsed = started.elapsed();
        let outcome = outcome.and_then(|detail| within(elapsed, limit).map(|_| detail));
        match outcome {
            Ok(detail) => println!("[PASS] criterion {name}: {detail} ({elapsed:.2?})"),
            Err(reason) => {
                failed += 1;
                println!("[FAIL] criterion {name}: {reason} ({elapsed:.2?})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Executes run specifications and writes the output files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hjbqvi_core::harness::{property_checks, run_refinement_study, PropertyCheck, StudyOptions};
use hjbqvi_core::oracle::{solve_iterated_optimal_stopping, OuterReport};
use hjbqvi_core::problem::ValidationReport;
use hjbqvi_core::semilag::inward_drift;
use hjbqvi_core::{
    solve_scheme, validate, Controls, ConvergenceReport, Grid, GridSummary, Problem, Scheme,
    SolverConfig, StepDiagnostics, Surface,
};
use serde::Serialize;

use crate::config::RunSpec;

/// Time levels sampled when validating the problem data.
const VALIDATION_SAMPLES: usize = 5;

pub const SOLUTION_FILE: &str = "solution.csv";
pub const REPORT_FILE: &str = "report.json";
pub const PLOT_FILE: &str = "plotdata.csv";

/// Files written by a run and the checks that failed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

impl RunOutcome {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Serialize)]
struct SolveReport<'a> {
    command: &'static str,
    problem: &'a str,
    params: &'a BTreeMap<String, f64>,
    scheme: &'static str,
    seed: u64,
    grid: GridSummary,
    solver: &'a SolverConfig,
    epsilon: Option<f64>,
    validation: &'a ValidationReport,
    /// Semi-Lagrangian only: the drift points inwards at both ends.
    inward_drift: Option<bool>,
    outer_iteration: Option<OuterReport>,
    diagnostics: &'a [StepDiagnostics],
    property_checks: Vec<PropertyCheck>,
    failures: &'a [String],
}

#[derive(Serialize)]
struct StudyReport<'a> {
    command: &'static str,
    params: &'a BTreeMap<String, f64>,
    seed: u64,
    solver: &'a SolverConfig,
    convergence: &'a ConvergenceReport,
    failures: &'a [String],
}

/// Fixed 17-significant-digit rendering shared by all CSV files.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))
}

fn write_solution(path: &Path, sol: &Surface) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "n",
        "t",
        "j",
        "x",
        "u",
        "policy_b",
        "policy_intervene",
        "policy_z",
    ])?;
    let grid = &sol.grid;
    for (n, u) in sol.surface.iter().enumerate() {
        let t = if sol.stationary { 0.0 } else { grid.time(n) };
        for (i, &x) in grid.nodes().iter().enumerate() {
            let (b, intervene, z) = match sol.policies.get(n).and_then(|p| p.get(i)) {
                Some(d) => (
                    num(d.b),
                    if d.intervene { "1" } else { "0" }.to_string(),
                    d.z.map(num).unwrap_or_default(),
                ),
                None => (String::new(), String::new(), String::new()),
            };
            w.write_record([
                n.to_string(),
                num(t),
                grid.signed_index(i).to_string(),
                num(x),
                num(u[i]),
                b,
                intervene,
                z,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_plotdata<'a>(
    path: &Path,
    levels: impl IntoIterator<Item = (u32, &'a Surface)>,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["level", "rho", "j", "x", "u0"])?;
    for (level, sol) in levels {
        let grid = &sol.grid;
        for (i, &x) in grid.nodes().iter().enumerate() {
            w.write_record([
                level.to_string(),
                num(grid.rho()),
                grid.signed_index(i).to_string(),
                num(x),
                num(sol.initial()[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn output_dir(spec: &RunSpec, out: Option<&Path>) -> Result<PathBuf> {
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| spec.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

struct Setup {
    problem: Problem,
    grid: Grid,
    cfg: SolverConfig,
    controls: Controls,
}

fn setup(spec: &RunSpec) -> Result<Setup> {
    let problem = spec.build_problem()?;
    let grid = spec.build_grid()?;
    let cfg = spec.solver_config()?;
    let controls = Controls::new(&problem, grid.rho())?;
    Ok(Setup {
        problem,
        grid,
        cfg,
        controls,
    })
}

/// Validates the problem data on the configured grid.
pub fn validate_spec(spec: &RunSpec) -> Result<ValidationReport> {
    let s = setup(spec)?;
    Ok(validate(&s.problem, &s.grid, VALIDATION_SAMPLES)?)
}

/// Solves once and writes all three output files. With `check`, the
/// problem hypotheses and the property checks decide the outcome.
pub fn solve(spec: &RunSpec, out: Option<&Path>, check: bool) -> Result<RunOutcome> {
    let s = setup(spec)?;
    let dir = output_dir(spec, out)?;
    let scheme = spec.scheme();
    let validation = validate(&s.problem, &s.grid, VALIDATION_SAMPLES)?;
    let mut failures = Vec::new();
    let mut checks = Vec::new();
    if check {
        failures.extend(
            validation
                .failures()
                .map(|c| format!("check_stability_bound precondition failed: {}", c.name)),
        );
    }

    let mut outer = None;
    let solved = match scheme {
        Scheme::IteratedStopping => {
            solve_iterated_optimal_stopping(&s.problem, &s.grid, &s.controls, &s.cfg).map(|r| {
                outer = Some(r.outer);
                r.solution
            })
        }
        _ => solve_scheme(scheme, &s.problem, &s.grid, &s.controls, &s.cfg),
    };
    let sol = match solved {
        Ok(sol) => Some(sol),
        Err(e) => {
            failures.push(format!("solve: {e}"));
            None
        }
    };
    if let (Some(sol), true) = (&sol, check) {
        checks = property_checks(
            "",
            sol,
            &s.problem,
            &s.controls,
            spec.study.monotonicity_trials,
            spec.seed,
        )?;
        failures.extend(
            checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| format!("{}: {}", c.name, c.detail)),
        );
    }

    let mut files = Vec::new();
    if let Some(sol) = &sol {
        let path = dir.join(SOLUTION_FILE);
        write_solution(&path, sol)?;
        files.push(path);
        let path = dir.join(PLOT_FILE);
        write_plotdata(&path, [(0, sol)])?;
        files.push(path);
    }
    let report = SolveReport {
        command: "solve",
        problem: &spec.problem,
        params: &spec.params,
        scheme: scheme.name(),
        seed: spec.seed,
        grid: s.grid.summary(),
        solver: &s.cfg,
        epsilon: sol.as_ref().and_then(|sol| sol.epsilon),
        validation: &validation,
        inward_drift: (scheme == Scheme::SemiLagrangian)
            .then(|| inward_drift(&s.grid, &s.problem, &s.controls)),
        outer_iteration: outer,
        diagnostics: sol.as_ref().map_or(&[], |sol| &sol.diagnostics),
        property_checks: checks,
        failures: &failures,
    };
    let path = dir.join(REPORT_FILE);
    write_json(&path, &report)?;
    files.push(path);
    Ok(RunOutcome { files, failures })
}

/// Refinement study over `levels` levels (the config value when `None`).
pub fn study(spec: &RunSpec, out: Option<&Path>, levels: Option<u32>) -> Result<RunOutcome> {
    let s = setup(spec)?;
    let dir = output_dir(spec, out)?;
    let options = StudyOptions {
        levels: levels.unwrap_or(spec.study.levels),
        window: Some(spec.window(&s.grid)),
        seed: spec.seed,
        monotonicity_trials: spec.study.monotonicity_trials,
    };
    let result = run_refinement_study(&s.problem, &s.grid, spec.scheme(), &s.cfg, &options)?;
    let report = &result.report;
    let mut failures: Vec<String> = report
        .levels
        .iter()
        .filter_map(|l| {
            l.failure
                .as_ref()
                .map(|f| format!("level {}: {f}", l.level))
        })
        .collect();
    failures.extend(
        report
            .property_checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail)),
    );

    let mut files = Vec::new();
    let solved: Vec<(u32, &Surface)> = result
        .solutions
        .iter()
        .enumerate()
        .filter_map(|(l, sol)| sol.as_ref().map(|sol| (l as u32, sol)))
        .collect();
    if let Some((_, finest)) = solved.last() {
        let path = dir.join(SOLUTION_FILE);
        write_solution(&path, finest)?;
        files.push(path);
    }
    let path = dir.join(PLOT_FILE);
    write_plotdata(&path, solved.iter().copied())?;
    files.push(path);
    let path = dir.join(REPORT_FILE);
    write_json(
        &path,
        &StudyReport {
            command: "study",
            params: &spec.params,
            seed: spec.seed,
            solver: &s.cfg,
            convergence: report,
            failures: &failures,
        },
    )?;
    files.push(path);
    Ok(RunOutcome { files, failures })
}

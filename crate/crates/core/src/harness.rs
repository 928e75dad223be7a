//! Convergence studies and executable property checks.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridSummary, SpaceTimeGrid};
use crate::operators::DiscreteControls;
use crate::oracle::{brute_force_residual, solve_iterated_optimal_stopping};
use crate::penalty::{solve_finite_horizon, solve_infinite_horizon, PenaltyStep};
use crate::problem::{Horizon, ProblemSpec};
use crate::scalar::Real;
use crate::semilag::{assemble_a, sl_rhs, solve_semi_lagrangian, thomas_solve};
use crate::solution::{Scheme, Solution, SolverConfig};

pub use crate::matrix::check_matrix_properties;

/// Slack added to the stability bound.
pub const STABILITY_SLACK: f64 = 1e-8;

/// Errors at or below this level carry no rate information.
const ORDER_FLOOR: f64 = 1e-13;

/// Solves `problem` on `grid` with the requested scheme.
pub fn solve_scheme<T: Real>(
    scheme: Scheme,
    problem: &ProblemSpec<T>,
    grid: &SpaceTimeGrid<T>,
    controls: &DiscreteControls<T>,
    cfg: &SolverConfig,
) -> Result<Solution<T>> {
    match (scheme, problem.horizon()) {
        (Scheme::Penalty, Horizon::Finite { .. }) => {
            solve_finite_horizon(problem, grid, controls, cfg)
        }
        (Scheme::Penalty, Horizon::Infinite { .. }) => {
            solve_infinite_horizon(problem, grid, controls, cfg)
        }
        (Scheme::SemiLagrangian, _) => solve_semi_lagrangian(problem, grid, controls, cfg),
        (Scheme::IteratedStopping, _) => {
            Ok(solve_iterated_optimal_stopping(problem, grid, controls, cfg)?.solution)
        }
    }
}

/// Index of the cell `[(k - 1/2) h, (k + 1/2) h)` containing `x`, generalised
/// to non-uniform nodes by cutting at midpoints. Clamps at both ends.
fn cell_index<T: Real>(nodes: &[T], x: T) -> usize {
    let half = T::lit(0.5);
    let mut lo = 0;
    let mut hi = nodes.len() - 1;
    // Count the midpoints <= x.
    while lo < hi {
        let mid = (lo + hi) / 2;
        if (nodes[mid] + nodes[mid + 1]) * half <= x {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Piecewise-constant extension of a solution to all `(t, x)`.
pub fn extend_solution<T: Real>(sol: &Solution<T>, t: T, x: T) -> T {
    let n = if sol.stationary {
        0
    } else {
        let steps = sol.grid.steps();
        let k = (t / sol.grid.dt() + T::lit(0.5)).floor();
        if k <= T::zero() {
            0
        } else {
            k.to_usize().unwrap_or(steps).min(steps)
        }
    };
    sol.surface[n][cell_index(sol.grid.nodes(), x)]
}

/// Closed window `t_range x x_range` on which errors are measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window<T> {
    pub t_range: (T, T),
    pub x_range: (T, T),
}

impl<T: Real> Window<T> {
    /// `[0, T] x [-Q/2, Q/2]`.
    pub fn interior(grid: &SpaceTimeGrid<T>) -> Self {
        let half = grid.q() * T::lit(0.5);
        Self {
            t_range: (T::zero(), grid.horizon()),
            x_range: (-half, half),
        }
    }

    /// Same spatial window at `t = 0` only.
    pub fn initial(self) -> Self {
        Self {
            t_range: (T::zero(), T::zero()),
            ..self
        }
    }

    fn contains(&self, t: T, x: T) -> bool {
        // A little slack so that grid times computed as n * dt land inside.
        let tol = T::lit(1e-12) * (T::one() + self.t_range.1.abs());
        t >= self.t_range.0 - tol
            && t <= self.t_range.1 + tol
            && x >= self.x_range.0
            && x <= self.x_range.1
    }
}

/// What a solution is compared with.
pub enum Reference<'a, T> {
    Function(&'a dyn Fn(T, T) -> T),
    Solution(&'a Solution<T>),
}

fn grid_points<T: Real>(sol: &Solution<T>, window: &Window<T>) -> Vec<(usize, usize, T, T)> {
    let levels = if sol.stationary {
        1
    } else {
        sol.grid.steps() + 1
    };
    let mut out = Vec::new();
    for n in 0..levels {
        let t = if sol.stationary {
            window.t_range.0
        } else {
            sol.grid.time(n)
        };
        for (j, &x) in sol.grid.nodes().iter().enumerate() {
            if window.contains(t, x) {
                out.push((n, j, t, x));
            }
        }
    }
    out
}

/// Sup-norm error over the window. Against a function the error is taken
/// at the grid points of `sol`; between two solutions at the grid points of
/// the finer one, with both extended piecewise constantly.
pub fn sup_error<T: Real>(
    sol: &Solution<T>,
    reference: &Reference<'_, T>,
    window: &Window<T>,
) -> T {
    match reference {
        Reference::Function(f) => grid_points(sol, window)
            .into_iter()
            .fold(T::zero(), |acc, (n, j, t, x)| {
                acc.max((sol.surface[n][j] - f(t, x)).abs())
            }),
        Reference::Solution(other) => {
            let finer = if other.grid.rho() < sol.grid.rho() {
                *other
            } else {
                sol
            };
            grid_points(finer, window)
                .into_iter()
                .fold(T::zero(), |acc, (_, _, t, x)| {
                    acc.max((extend_solution(sol, t, x) - extend_solution(other, t, x)).abs())
                })
        }
    }
}

/// `log2(coarse / fine)`; `None` when either error is at rounding level.
pub fn observed_order(coarse: f64, fine: f64) -> Option<f64> {
    (coarse > ORDER_FLOOR && fine > ORDER_FLOOR).then(|| (coarse / fine).log2())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl PropertyCheck {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCheck {
    pub passed: bool,
    pub worst: f64,
    pub bound: f64,
}

/// `max |u| <= ||g|| + ||f|| T` (finite horizon) or `<= ||f|| / beta`, with
/// the norms sampled on the nodes, time levels and `B_rho`.
pub fn check_stability_bound<T: Real>(
    sol: &Solution<T>,
    problem: &ProblemSpec<T>,
    controls: &DiscreteControls<T>,
) -> StabilityCheck {
    let grid = &sol.grid;
    let times: Vec<T> = if sol.stationary {
        vec![T::zero()]
    } else {
        (0..=grid.steps()).map(|n| grid.time(n)).collect()
    };
    let mut f_norm = 0.0f64;
    for &t in &times {
        for &x in grid.nodes() {
            for &b in controls.controls() {
                f_norm = f_norm.max(problem.f(t, x, b).abs().as_f64());
            }
        }
    }
    let bound = match problem.horizon() {
        Horizon::Finite { t_final } => {
            let g_norm = grid
                .nodes()
                .iter()
                .fold(0.0f64, |acc, &x| acc.max(problem.g(x).abs().as_f64()));
            g_norm + f_norm * t_final.as_f64()
        }
        Horizon::Infinite { beta } => f_norm / beta.as_f64(),
    } + STABILITY_SLACK;
    let worst = sol.max_abs().as_f64();
    StabilityCheck {
        passed: worst <= bound,
        worst,
        bound,
    }
}

pub type ResidualFn<'a, T> = &'a dyn Fn(&[T], &[T]) -> Result<Vec<T>>;
pub type StepFn<'a, T> = &'a dyn Fn(&[T]) -> Result<Vec<T>>;

/// A discrete map whose monotonicity is tested.
pub enum MonotoneMap<'a, T> {
    /// Residual `S(u, u_next)` of an implicit scheme. Raising `u` away from
    /// a probe node, or raising `u_next`, must not raise `S` at the probe.
    Residual(ResidualFn<'a, T>),
    /// Explicit step `u_next -> u`, which must preserve order.
    Step(StepFn<'a, T>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityWitness {
    pub trial: usize,
    pub node: usize,
    /// Amount by which the ordering was broken.
    pub excess: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub trials: usize,
    pub violations: usize,
    pub first_violation: Option<MonotonicityWitness>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn tolerance<T: Real>(reference: T) -> T {
    T::lit(1e-9) * (T::one() + reference.abs())
}

/// Draws random ordered pairs `w <= u` and reports every trial where the
/// map breaks monotonicity. Deterministic for a given `seed`.
pub fn check_monotonicity<T: Real>(
    map: &MonotoneMap<'_, T>,
    len: usize,
    trials: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    if len == 0 {
        return Err(Error::InvalidArgument(
            "monotonicity check on an empty grid".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut first_violation = None;
    for trial in 0..trials {
        let mut draw =
            |n: usize| -> Vec<T> { (0..n).map(|_| T::lit(rng.gen_range(-2.0..2.0))).collect() };
        let w = draw(len);
        let w_next = draw(len);
        let probe = rng.gen_range(0..len);
        let mut bump = |v: &[T], skip: Option<usize>| -> Vec<T> {
            v.iter()
                .enumerate()
                .map(|(i, &x)| {
                    if Some(i) == skip || rng.gen_bool(0.5) {
                        x
                    } else {
                        x + T::lit(rng.gen_range(0.0..1.0))
                    }
                })
                .collect()
        };
        let found = match map {
            MonotoneMap::Residual(residual) => {
                let u = bump(&w, Some(probe));
                let u_next = bump(&w_next, None);
                let low = residual(&w, &w_next)?[probe];
                let high = residual(&u, &u_next)?[probe];
                (high > low + tolerance(low)).then(|| (probe, (high - low).as_f64(), w, u))
            }
            MonotoneMap::Step(step) => {
                let u_next = bump(&w_next, None);
                let low = step(&w_next)?;
                let high = step(&u_next)?;
                low.iter()
                    .zip(&high)
                    .enumerate()
                    .find(|(_, (l, h))| **h < **l - tolerance(**l))
                    .map(|(i, (l, h))| (i, (*l - *h).as_f64(), w_next, u_next))
            }
        };
        if let Some((node, excess, lower, upper)) = found {
            violations += 1;
            first_violation.get_or_insert_with(|| MonotonicityWitness {
                trial,
                node,
                excess,
                lower: lower.iter().map(|v| v.as_f64()).collect(),
                upper: upper.iter().map(|v| v.as_f64()).collect(),
            });
        }
    }
    Ok(MonotonicityReport {
        trials,
        violations,
        first_violation,
    })
}

/// Monotonicity of the penalty residual at time `t`.
pub fn penalty_monotonicity<T: Real>(
    problem: &ProblemSpec<T>,
    grid: &SpaceTimeGrid<T>,
    controls: &DiscreteControls<T>,
    epsilon: T,
    t: T,
    trials: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    let residual = |u: &[T], next: &[T]| -> Result<Vec<T>> {
        Ok(
            PenaltyStep::backward(grid, problem, controls, t, next, epsilon)?
                .residual(u)?
                .into_inner(),
        )
    };
    check_monotonicity(&MonotoneMap::Residual(&residual), grid.len(), trials, seed)
}

/// Monotonicity of one semi-Lagrangian step at time `t`.
pub fn semilag_monotonicity<T: Real>(
    problem: &ProblemSpec<T>,
    grid: &SpaceTimeGrid<T>,
    controls: &DiscreteControls<T>,
    t: T,
    trials: usize,
    seed: u64,
) -> Result<MonotonicityReport> {
    let a = assemble_a(grid, problem)?;
    let step = |next: &[T]| -> Result<Vec<T>> {
        let rhs = sl_rhs(next, t, grid, problem, controls)?;
        Ok(thomas_solve(&a, &rhs.values)?.into_inner())
    };
    check_monotonicity(&MonotoneMap::Step(&step), grid.len(), trials, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    /// Closed-form solution.
    Exact,
    /// Finest level of the study.
    #[serde(rename = "self")]
    SelfConvergence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub level: u32,
    pub rho: f64,
    pub grid: GridSummary,
    pub scheme: Scheme,
    pub epsilon: Option<f64>,
    /// Sup-norm error against the reference; absent for the self reference.
    pub error: Option<f64>,
    /// Observed order between the previous level and this one.
    pub order: Option<f64>,
    pub iterations: usize,
    pub max_residual: f64,
    pub clamped_interior: usize,
    /// Not serialized, so reports stay reproducible.
    #[serde(skip)]
    pub wall_seconds: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub problem: String,
    pub scheme: Scheme,
    pub reference: ReferenceKind,
    pub window: Window<f64>,
    pub levels: Vec<LevelReport>,
    /// `log2` error ratios of consecutive levels; `None` where undefined.
    pub orders: Vec<Option<f64>>,
    pub order_note: &'static str,
    pub property_checks: Vec<PropertyCheck>,
}

/// Convergence is known without a rate; first order is only expected.
pub const ORDER_NOTE: &str =
    "observed orders are empirical; the first-order expectation follows from the truncation terms and is not a proven rate";

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.levels.iter().all(|l| l.failure.is_none())
            && self.property_checks.iter().all(|c| c.passed)
    }

    pub fn errors(&self) -> Vec<Option<f64>> {
        self.levels.iter().map(|l| l.error).collect()
    }
}

#[derive(Debug, Clone)]
pub struct StudyOptions<T> {
    pub levels: u32,
    /// Defaults to [`Window::interior`] of the base grid.
    pub window: Option<Window<T>>,
    pub seed: u64,
    /// Random pairs per level for the monotonicity check; zero skips it.
    pub monotonicity_trials: usize,
}

impl<T> StudyOptions<T> {
    pub fn new(levels: u32) -> Self {
        Self {
            levels,
            window: None,
            seed: 0,
            monotonicity_trials: 20,
        }
    }
}

/// Reports plus the solutions of every level (`None` where the solve failed).
#[derive(Debug, Clone)]
pub struct Study<T> {
    pub report: ConvergenceReport,
    pub solutions: Vec<Option<Solution<T>>>,
}

/// Stability bound, matrix certification, brute-force residual (penalty
/// type solutions) and a randomized monotonicity test. Check names start
/// with `prefix`; `trials = 0` skips the monotonicity test.
pub fn property_checks<T: Real>(
    prefix: &str,
    sol: &Solution<T>,
    problem: &ProblemSpec<T>,
    controls: &DiscreteControls<T>,
    trials: usize,
    seed: u64,
) -> Result<Vec<PropertyCheck>> {
    let grid = &sol.grid;
    let mut checks = Vec::new();
    let stability = check_stability_bound(sol, problem, controls);
    checks.push(PropertyCheck::new(
        format!("{prefix}stability bound"),
        stability.passed,
        format!(
            "max |u| = {:.6e}, bound = {:.6e}",
            stability.worst, stability.bound
        ),
    ));
    checks.push(PropertyCheck::new(
        format!("{prefix}matrix checks"),
        sol.systems_checked() > 0,
        format!("{} systems certified", sol.systems_checked()),
    ));
    if sol.scheme != Scheme::SemiLagrangian && !sol.stationary {
        let eps = sol.epsilon.unwrap_or_else(|| grid.rho());
        let residual = brute_force_residual(&sol.surface, problem, grid, controls, eps)?;
        checks.push(PropertyCheck::new(
            format!("{prefix}brute-force residual"),
            residual <= 1e-8,
            format!("{residual:.6e}"),
        ));
    }
    if trials > 0 {
        let t = if sol.stationary {
            T::zero()
        } else {
            grid.time(grid.steps() / 2)
        };
        let report = match sol.scheme {
            Scheme::SemiLagrangian => {
                semilag_monotonicity(problem, grid, controls, t, trials, seed)?
            }
            _ => {
                let eps = sol.epsilon.unwrap_or_else(|| grid.rho());
                if sol.stationary {
                    let residual = |u: &[T], _: &[T]| -> Result<Vec<T>> {
                        Ok(PenaltyStep::stationary(grid, problem, controls, eps)?
                            .residual(u)?
                            .into_inner())
                    };
                    check_monotonicity(&MonotoneMap::Residual(&residual), grid.len(), trials, seed)?
                } else {
                    penalty_monotonicity(problem, grid, controls, eps, t, trials, seed)?
                }
            }
        };
        checks.push(PropertyCheck::new(
            format!("{prefix}monotonicity"),
            report.passed(),
            format!(
                "{} violations in {} trials",
                report.violations, report.trials
            ),
        ));
    }
    Ok(checks)
}

/// Solves on `base.for_level(l)` for `l = 0..levels` and measures errors
/// against the closed form when the problem has one, else against the
/// finest level. Failed levels are recorded and the study continues.
pub fn run_refinement_study<T: Real>(
    problem: &ProblemSpec<T>,
    base: &SpaceTimeGrid<T>,
    scheme: Scheme,
    cfg: &SolverConfig,
    options: &StudyOptions<T>,
) -> Result<Study<T>> {
    if options.levels < 2 {
        return Err(Error::InvalidArgument(format!(
            "a refinement study needs at least 2 levels, got {}",
            options.levels
        )));
    }
    let window = options.window.unwrap_or_else(|| Window::interior(base));
    let mut levels = Vec::new();
    let mut solutions = Vec::new();
    let mut all_checks = Vec::new();
    for level in 0..options.levels {
        let grid = base.for_level(level)?;
        let started = Instant::now();
        let outcome = DiscreteControls::new(problem, grid.rho()).and_then(|controls| {
            solve_scheme(scheme, problem, &grid, &controls, cfg).map(|s| (s, controls))
        });
        let wall_seconds = started.elapsed().as_secs_f64();
        let mut report = LevelReport {
            level,
            rho: grid.rho().as_f64(),
            grid: grid.summary(),
            scheme,
            epsilon: None,
            error: None,
            order: None,
            iterations: 0,
            max_residual: 0.0,
            clamped_interior: 0,
            wall_seconds,
            failure: None,
        };
        match outcome {
            Ok((sol, controls)) => {
                report.epsilon = sol.epsilon.map(Real::as_f64);
                report.iterations = sol.total_iterations();
                report.max_residual = sol.max_residual();
                report.clamped_interior = sol.clamped_interior();
                let prefix = format!("level {level}: ");
                let seed = options.seed.wrapping_add(u64::from(level));
                match property_checks(
                    &prefix,
                    &sol,
                    problem,
                    &controls,
                    options.monotonicity_trials,
                    seed,
                ) {
                    Ok(checks) => all_checks.extend(checks),
                    Err(e) => report.failure = Some(format!("property checks: {e}")),
                }
                solutions.push(Some(sol));
            }
            Err(e) => {
                report.failure = Some(e.to_string());
                solutions.push(None);
            }
        }
        levels.push(report);
    }

    let reference = if problem.has_exact() {
        ReferenceKind::Exact
    } else {
        ReferenceKind::SelfConvergence
    };
    match reference {
        ReferenceKind::Exact => {
            let exact = |t: T, x: T| problem.exact(t, x).unwrap_or_else(T::nan);
            for (report, sol) in levels.iter_mut().zip(&solutions) {
                if let Some(sol) = sol {
                    report.error =
                        Some(sup_error(sol, &Reference::Function(&exact), &window).as_f64());
                }
            }
        }
        ReferenceKind::SelfConvergence => {
            if let Some(finest) = solutions.last().and_then(Option::as_ref) {
                let last = solutions.len() - 1;
                for (report, sol) in levels.iter_mut().zip(&solutions).take(last) {
                    if let Some(sol) = sol {
                        report.error =
                            Some(sup_error(sol, &Reference::Solution(finest), &window).as_f64());
                    }
                }
            }
        }
    }
    let mut orders = Vec::new();
    for k in 1..levels.len() {
        let order = match (levels[k - 1].error, levels[k].error) {
            (Some(a), Some(b)) => observed_order(a, b),
            _ => None,
        };
        levels[k].order = order;
        if levels[k].error.is_some() {
            orders.push(order);
        }
    }
    let window64 = Window {
        t_range: (window.t_range.0.as_f64(), window.t_range.1.as_f64()),
        x_range: (window.x_range.0.as_f64(), window.x_range.1.as_f64()),
    };
    Ok(Study {
        report: ConvergenceReport {
            problem: problem.name().to_string(),
            scheme,
            reference,
            window: window64,
            levels,
            orders,
            order_note: ORDER_NOTE,
            property_checks: all_checks,
        },
        solutions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossLevel {
    pub level: u32,
    pub rho: f64,
    /// Sup-norm difference of the two schemes over the window.
    pub difference: f64,
}

/// Compares two schemes level by level, e.g. penalty against
/// semi-Lagrangian at `t = 0` with `Window::initial`.
pub fn cross_scheme_study<T: Real>(
    problem: &ProblemSpec<T>,
    base: &SpaceTimeGrid<T>,
    schemes: (Scheme, Scheme),
    levels: u32,
    cfg: &SolverConfig,
    window: &Window<T>,
) -> Result<Vec<CrossLevel>> {
    (0..levels)
        .map(|level| {
            let grid = base.for_level(level)?;
            let controls = DiscreteControls::new(problem, grid.rho())?;
            let a = solve_scheme(schemes.0, problem, &grid, &controls, cfg)?;
            let b = solve_scheme(schemes.1, problem, &grid, &controls, cfg)?;
            Ok(CrossLevel {
                level,
                rho: grid.rho().as_f64(),
                difference: sup_error(&a, &Reference::Solution(&b), window).as_f64(),
            })
        })
        .collect()
}

/// `u^0` of a solution as `(x, u)` pairs.
pub fn initial_profile<T: Real>(sol: &Solution<T>) -> Vec<(T, T)> {
    sol.grid
        .nodes()
        .iter()
        .copied()
        .zip(sol.initial().iter().copied())
        .collect()
}

//! Reference computations used to cross-check the direct schemes.
//!
//! Iterated optimal stopping replaces the implicit obstacle `M u` by the
//! obstacle of the previous iterate, so every outer step is an ordinary
//! variational inequality. The brute-force residual re-evaluates the penalty
//! equations with plain loops and shares no stencil code with the solvers.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::operators::{apply_intervention, DiscreteControls, GridFunction};
use crate::penalty::{sweep, SweepObstacle};
use crate::problem::ProblemSpec;
use crate::scalar::Real;
use crate::solution::{Scheme, Solution, SolverConfig};

/// Outcome of the outer iteration.
#[derive(Debug, Clone)]
pub struct IteratedStopping<T> {
    pub solution: Solution<T>,
    pub outer: OuterReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterReport {
    /// Outer iterations performed after the no-intervention start.
    pub iterations: usize,
    /// `sup |u^k - u^{k-1}|` for `k = 1, 2, ..`.
    pub increments: Vec<f64>,
    /// Most negative entry of `u^k - u^{k-1}` over all `k`; zero when the
    /// iterates never decrease.
    pub worst_decrease: f64,
}

impl OuterReport {
    /// Iterates are nondecreasing in `k` up to `slack`.
    pub fn monotone(&self, slack: f64) -> bool {
        self.worst_decrease >= -slack
    }
}

fn obstacle_levels<T: Real>(
    surface: &[GridFunction<T>],
    problem: &ProblemSpec<T>,
    grid: &SpaceTimeGrid<T>,
    controls: &DiscreteControls<T>,
) -> Result<Vec<GridFunction<T>>> {
    (0..grid.steps())
        .map(|n| {
            let table = controls.impulse_table(problem, grid, grid.time(n))?;
            Ok(apply_intervention(&surface[n], grid, problem, &table)?.values)
        })
        .collect()
}

/// Starts from the solve without interventions, then solves with the frozen
/// obstacle `M u^{k-1}` until `sup |u^k - u^{k-1}| < cfg.outer_tol`.
pub fn solve_iterated_optimal_stopping<T: Real>(
    problem: &ProblemSpec<T>,
    grid: &SpaceTimeGrid<T>,
    controls: &DiscreteControls<T>,
    cfg: &SolverConfig,
) -> Result<IteratedStopping<T>> {
    let epsilon = cfg.epsilon_for(grid.rho());
    let mut current = sweep(
        problem,
        grid,
        controls,
        epsilon,
        cfg,
        SweepObstacle::Disabled,
    )?;
    let mut increments = Vec::new();
    let mut worst_decrease = 0.0f64;
    for k in 1..=cfg.k_max {
        let levels = obstacle_levels(&current.surface, problem, grid, controls)?;
        let next = sweep(
            problem,
            grid,
            controls,
            epsilon,
            cfg,
            SweepObstacle::Frozen(&levels),
        )?;
        let mut increment = 0.0f64;
        for (a, b) in next.surface.iter().zip(&current.surface) {
            for (x, y) in a.iter().zip(b.iter()) {
                let change = (*x - *y).as_f64();
                increment = increment.max(change.abs());
                worst_decrease = worst_decrease.min(change);
            }
        }
        increments.push(increment);
        current = next;
        if increment < cfg.outer_tol {
            current.scheme = Scheme::IteratedStopping;
            return Ok(IteratedStopping {
                solution: current,
                outer: OuterReport {
                    iterations: k,
                    increments,
                    worst_decrease,
                },
            });
        }
    }
    Err(Error::OuterIterationLimit {
        k: cfg.k_max,
        increment: increments.last().copied().unwrap_or(f64::NAN),
    })
}

/// Largest absolute residual of the finite-horizon penalty equations over
/// all time levels, plus the terminal mismatch `max |u^N - g|`.
pub fn brute_force_residual<T: Real>(
    surface: &[GridFunction<T>],
    problem: &ProblemSpec<T>,
    grid: &SpaceTimeGrid<T>,
    controls: &DiscreteControls<T>,
    epsilon: T,
) -> Result<f64> {
    let steps = grid.steps();
    if surface.len() != steps + 1 {
        return Err(Error::InvalidArgument(format!(
            "surface has {} levels, grid has {} steps",
            surface.len(),
            steps
        )));
    }
    let xs = grid.nodes();
    let last = xs.len() - 1;
    let dt = grid.dt();
    let half = T::lit(0.5);
    let mut worst = 0.0f64;
    for (j, &x) in xs.iter().enumerate() {
        worst = worst.max((surface[steps][j] - problem.g(x)).abs().as_f64());
    }
    for n in 0..steps {
        let t = T::from_count(n) * dt;
        let (u, up) = (&surface[n], &surface[n + 1]);
        for (j, &x) in xs.iter().enumerate() {
            let mut cont = T::neg_infinity();
            for &b in controls.controls() {
                let mut gen = T::zero();
                if j > 0 && j < last {
                    let hm = x - xs[j - 1];
                    let hp = xs[j + 1] - x;
                    let d2 = (T::lit(2.0) * (hm * u[j + 1] - (hm + hp) * u[j] + hp * u[j - 1]))
                        / (hm * hp * (hm + hp));
                    let mu = problem.mu(x, b);
                    let d1 = if mu >= T::zero() {
                        (u[j + 1] - u[j]) / hp
                    } else {
                        (u[j] - u[j - 1]) / hm
                    };
                    let s = problem.sigma(x, b);
                    gen = mu * d1 + half * s * s * d2;
                }
                cont = cont.max((up[j] - u[j]) / dt + gen + problem.f(t, x, b));
            }
            let mut best = T::neg_infinity();
            for z in controls.impulses(problem, t, x) {
                let y = x + problem.gamma(t, x, z);
                best = best.max(linear_lookup(xs, u, y) + problem.k(t, x, z));
            }
            let penalty = ((best - u[j]) / epsilon).max(T::zero());
            worst = worst.max((-cont - penalty).abs().as_f64());
        }
    }
    Ok(worst)
}

/// Piecewise linear interpolant through `(xs, u)`, constant outside.
fn linear_lookup<T: Real>(xs: &[T], u: &[T], y: T) -> T {
    if y <= xs[0] {
        return u[0];
    }
    for k in 1..xs.len() {
        if y <= xs[k] {
            let w = (y - xs[k - 1]) / (xs[k] - xs[k - 1]);
            return u[k - 1] + w * (u[k] - u[k - 1]);
        }
    }
    u[xs.len() - 1]
}

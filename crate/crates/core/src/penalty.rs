//! Implicit penalty scheme.
//!
//! At every time level the scheme solves
//!
//! ```text
//! -max_b { (u_next_j - u_j) / dt + (L_b u)_j + f_j(b) } - ((M u)_j - u_j)^+ / eps = 0
//! ```
//!
//! (or its discounted stationary analogue with `-beta u_j` in place of the
//! time difference). The left side is a maximum of affine maps of `u`, one per
//! policy `(b_j, d_j, z_j)`, and every such map is a weakly chained diagonally
//! dominant M-matrix, so policy iteration converges to the unique solution.

use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::matrix::{check_matrix_properties, MatrixReport, SparseMatrix};
use crate::operators::{
    apply_generator, apply_intervention, generator_row, interp_stencil, DiscreteControls,
    GridFunction, ImpulseTable,
};
use crate::problem::{Horizon, ProblemSpec};
use crate::scalar::{sup_distance, sup_norm, Real};
use crate::solution::{
    Method, NodeDecision, Policy, Scheme, Solution, SolverConfig, StepDiagnostics,
};

/// Contraction ratio above which value iteration is flagged as slow.
const SLOW_CONTRACTION: f64 = 0.9;

/// Zeroth-order part of the operator.
#[derive(Debug, Clone, Copy)]
pub enum TimeTerm<'a, T> {
    /// Backward Euler step towards the already computed level `next`.
    Backward { dt: T, next: &'a [T] },
    /// Stationary problem with discount rate `beta`.
    Discounted { beta: T },
}

/// What the penalty term compares `u` against.
#[derive(Debug, Clone)]
pub enum ObstacleTerm<'a, T> {
    /// The discrete intervention operator `M u` (implicit in `u`).
    Intervention(ImpulseTable<T>),
    /// A fixed obstacle, as in iterated optimal stopping.
    Frozen(&'a [T]),
    /// No penalty term: plain HJB equation.
    Disabled,
}

/// Linear system of one policy.
#[derive(Debug, Clone)]
pub struct SparseSystem<T> {
    pub matrix: SparseMatrix<T>,
    pub rhs: Vec<T>,
    /// Present when the matrix checks ran.
    pub report: Option<MatrixReport>,
}

/// Values, policy and diagnostics of one solved time level.
#[derive(Debug, Clone)]
pub struct StepOutcome<T> {
    pub values: GridFunction<T>,
    pub policy: Policy<T>,
    pub diagnostics: StepDiagnostics,
}

/// Discrete penalty equations of a single time level.
#[derive(Clone)]
pub struct PenaltyStep<'a, T> {
    grid: &'a SpaceTimeGrid<T>,
    problem: &'a ProblemSpec<T>,
    controls: &'a [T],
    t: T,
    epsilon: T,
    time: TimeTerm<'a, T>,
    obstacle: ObstacleTerm<'a, T>,
}

impl<'a, T: Real> PenaltyStep<'a, T> {
    /// Equations for `u^n` given `u^{n+1} = next` at time `t = n dt`.
    pub fn backward(
        grid: &'a SpaceTimeGrid<T>,
        problem: &'a ProblemSpec<T>,
        controls: &'a DiscreteControls<T>,
        t: T,
        next: &'a [T],
        epsilon: T,
    ) -> Result<Self> {
        if next.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "time level has {} values for {} nodes",
                next.len(),
                grid.len()
            )));
        }
        Self::new(
            grid,
            problem,
            controls,
            t,
            epsilon,
            TimeTerm::Backward {
                dt: grid.dt(),
                next,
            },
        )
    }

    /// Stationary equations of an infinite-horizon problem.
    pub fn stationary(
        grid: &'a SpaceTimeGrid<T>,
        problem: &'a ProblemSpec<T>,
        controls: &'a DiscreteControls<T>,
        epsilon: T,
    ) -> Result<Self> {
        let beta = match problem.horizon() {
            Horizon::Infinite { beta } => beta,
            Horizon::Finite { .. } => {
                return Err(Error::SchemeInapplicable(format!(
                    "problem `{}` has a finite horizon",
                    problem.name()
                )))
            }
        };
        Self::new(
            grid,
            problem,
            controls,
            T::zero(),
            epsilon,
            TimeTerm::Discounted { beta },
        )
    }

    fn new(
        grid: &'a SpaceTimeGrid<T>,
        problem: &'a ProblemSpec<T>,
        controls: &'a DiscreteControls<T>,
        t: T,
        epsilon: T,
        time: TimeTerm<'a, T>,
    ) -> Result<Self> {
        if !(epsilon > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        let table = controls.impulse_table(problem, grid, t)?;
        Ok(Self {
            grid,
            problem,
            controls: controls.controls(),
            t,
            epsilon,
            time,
            obstacle: ObstacleTerm::Intervention(table),
        })
    }

    /// Replaces `M u` by a fixed obstacle.
    pub fn with_frozen_obstacle(mut self, obstacle: &'a [T]) -> Self {
        self.obstacle = ObstacleTerm::Frozen(obstacle);
        self
    }

    /// Drops the penalty term entirely.
    pub fn without_intervention(mut self) -> Self {
        self.obstacle = ObstacleTerm::Disabled;
        self
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    fn diagonal_shift(&self) -> T {
        match self.time {
            TimeTerm::Backward { dt, .. } => dt.recip(),
            TimeTerm::Discounted { beta } => beta,
        }
    }

    /// `(u_next_i - u_i) / dt + (L_b u)_i + f_i(b)` or `(L_b u)_i - beta u_i + f_i(b)`.
    fn continuation(&self, u: &[T], i: usize, b: T) -> Result<T> {
        let x = self.grid.x(i);
        let local =
            apply_generator(u, self.grid, i, b, self.problem)? + self.problem.f(self.t, x, b);
        Ok(match self.time {
            TimeTerm::Backward { dt, next } => (next[i] - u[i]) / dt + local,
            TimeTerm::Discounted { beta } => local - beta * u[i],
        })
    }

    /// Obstacle values and, for the intervention operator, maximizing impulses.
    #[allow(clippy::type_complexity)]
    fn obstacle_values(&self, u: &[T]) -> Result<Option<(Vec<T>, Option<Vec<T>>)>> {
        Ok(match &self.obstacle {
            ObstacleTerm::Intervention(table) => {
                let m = apply_intervention(u, self.grid, self.problem, table)?;
                Some((m.values.into_inner(), Some(m.argmax)))
            }
            ObstacleTerm::Frozen(values) => Some((values.to_vec(), None)),
            ObstacleTerm::Disabled => None,
        })
    }

    /// Pointwise residual of the discrete equations; zero at a solution.
    pub fn residual(&self, u: &[T]) -> Result<GridFunction<T>> {
        let obstacle = self.obstacle_values(u)?;
        let mut out = Vec::with_capacity(u.len());
        for i in 0..u.len() {
            let mut best = T::neg_infinity();
            for &b in self.controls {
                best = best.max(self.continuation(u, i, b)?);
            }
            let penalty = match &obstacle {
                Some((values, _)) => ((values[i] - u[i]) / self.epsilon).max(T::zero()),
                None => T::zero(),
            };
            out.push(-best - penalty);
        }
        Ok(out.into())
    }

    /// Greedy policy at `u` plus the obstacle values it was built from.
    fn greedy(&self, u: &[T]) -> Result<(Policy<T>, Option<Vec<T>>)> {
        let obstacle = self.obstacle_values(u)?;
        let mut policy = Vec::with_capacity(u.len());
        for i in 0..u.len() {
            let mut best: Option<(T, T)> = None;
            for &b in self.controls {
                let x = self.grid.x(i);
                let value = apply_generator(u, self.grid, i, b, self.problem)?
                    + self.problem.f(self.t, x, b);
                if best.is_none_or(|(v, _)| value > v) {
                    best = Some((value, b));
                }
            }
            let b = best.map(|(_, b)| b).unwrap_or_else(T::zero);
            let (intervene, z) = match &obstacle {
                Some((values, argmax)) if values[i] - u[i] > T::zero() => {
                    (true, argmax.as_ref().map(|a| a[i]))
                }
                _ => (false, None),
            };
            policy.push(NodeDecision { b, intervene, z });
        }
        Ok((policy, obstacle.map(|(values, _)| values)))
    }

    /// Policy-improvement step: greedy `b`, penalty indicator
    /// `(M u)_j - u_j > 0` and maximizing impulse, ties to the smallest value.
    pub fn improve(&self, u: &[T]) -> Result<Policy<T>> {
        Ok(self.greedy(u)?.0)
    }

    /// Linear system whose solution satisfies the equations at a fixed policy.
    pub fn assemble(&self, policy: &Policy<T>, check: bool) -> Result<SparseSystem<T>> {
        self.build(policy, None, check)
    }

    /// `lagged` replaces the implicit obstacle by known values.
    fn build(
        &self,
        policy: &Policy<T>,
        lagged: Option<&[T]>,
        check: bool,
    ) -> Result<SparseSystem<T>> {
        let n = self.grid.len();
        if policy.len() != n {
            return Err(Error::InvalidArgument(format!(
                "policy has {} entries for {n} nodes",
                policy.len()
            )));
        }
        let inv_eps = self.epsilon.recip();
        let shift = self.diagonal_shift();
        let mut matrix = SparseMatrix::zeros(n);
        let mut rhs = Vec::with_capacity(n);
        for (i, decision) in policy.iter().enumerate() {
            let x = self.grid.x(i);
            let mut source = self.problem.f(self.t, x, decision.b);
            if let TimeTerm::Backward { dt, next } = self.time {
                source = source + next[i] / dt;
            }
            matrix.add(i, i, shift);
            if !self.grid.is_boundary(i) {
                let row = generator_row(self.grid, i, decision.b, self.problem);
                matrix.add(i, i - 1, -row.lower);
                matrix.add(i, i, -row.center);
                matrix.add(i, i + 1, -row.upper);
            }
            if decision.intervene {
                matrix.add(i, i, inv_eps);
                match (lagged, &self.obstacle) {
                    (Some(values), _) => source = source + values[i] * inv_eps,
                    (None, ObstacleTerm::Frozen(values)) => source = source + values[i] * inv_eps,
                    (None, ObstacleTerm::Intervention(_)) => {
                        let z = decision.z.ok_or_else(|| {
                            Error::InvalidArgument(format!("intervening node {i} has no impulse"))
                        })?;
                        let stencil =
                            interp_stencil(self.grid, x + self.problem.gamma(self.t, x, z));
                        let weights = [
                            (stencil.lo, T::one() - stencil.alpha),
                            (stencil.hi, stencil.alpha),
                        ];
                        for (col, w) in weights {
                            if w != T::zero() {
                                matrix.add(i, col, -w * inv_eps);
                            }
                        }
                        source = source + self.problem.k(self.t, x, z) * inv_eps;
                    }
                    (None, ObstacleTerm::Disabled) => {
                        return Err(Error::InvalidArgument(format!(
                            "node {i} intervenes but the obstacle is disabled"
                        )))
                    }
                }
            }
            rhs.push(source);
        }
        for i in 0..n {
            let diag = matrix.get(i, i);
            if !(diag > T::zero()) {
                return Err(Error::NonPositiveDiagonal {
                    row: i,
                    value: diag.as_f64(),
                });
            }
        }
        let report = if check {
            Some(check_matrix_properties(&matrix).into_result()?)
        } else {
            None
        };
        Ok(SparseSystem {
            matrix,
            rhs,
            report,
        })
    }

    fn finish(
        &self,
        u: Vec<T>,
        policy: Policy<T>,
        mut diagnostics: StepDiagnostics,
    ) -> Result<StepOutcome<T>> {
        diagnostics.residual = sup_norm(&self.residual(&u)?).as_f64();
        diagnostics.intervening_nodes = policy.iter().filter(|d| d.intervene).count();
        let values = GridFunction::new(u);
        diagnostics.min_value = values.min_value().as_f64();
        diagnostics.max_value = values.max_value().as_f64();
        Ok(StepOutcome {
            values,
            policy,
            diagnostics,
        })
    }

    /// Policy iteration from `initial` and its greedy policy.
    pub fn policy_iteration(&self, initial: &[T], cfg: &SolverConfig) -> Result<StepOutcome<T>> {
        let tol = T::lit(cfg.tol);
        let mut u = initial.to_vec();
        let (mut policy, _) = self.greedy(&u)?;
        let mut history = Vec::new();
        let mut diagnostics = StepDiagnostics::default();
        let mut converged = false;
        for iteration in 1..=cfg.max_iters {
            let system = self.assemble(&policy, cfg.check_matrices)?;
            diagnostics.systems_checked += usize::from(system.report.is_some());
            let next = system.matrix.solve(&system.rhs)?;
            let update = sup_distance(&next, &u);
            history.push(update.as_f64());
            u = next;
            diagnostics.iterations = iteration;
            diagnostics.update = update.as_f64();
            let (improved, _) = self.greedy(&u)?;
            let stable = improved == policy;
            policy = improved;
            if stable || update < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::MaxIterations {
                iterations: cfg.max_iters,
                history,
            });
        }
        let outcome = self.finish(u, policy, diagnostics)?;
        if outcome.diagnostics.residual > cfg.residual_tol {
            return Err(Error::ResidualTooLarge {
                residual: outcome.diagnostics.residual,
                tolerance: cfg.residual_tol,
            });
        }
        Ok(outcome)
    }

    /// Fixed-point iteration: each sweep takes `b` and the penalty indicator
    /// greedily from the current iterate and lags the intervention value,
    /// keeping the `u_j / eps` part of the penalty implicit.
    pub fn value_iteration(&self, initial: &[T], cfg: &SolverConfig) -> Result<StepOutcome<T>> {
        let tol = T::lit(cfg.tol);
        let mut u = initial.to_vec();
        let mut history: Vec<f64> = Vec::new();
        let mut diagnostics = StepDiagnostics::default();
        let mut converged = false;
        for iteration in 1..=cfg.max_iters {
            let (policy, obstacle) = self.greedy(&u)?;
            let lagged = match self.obstacle {
                ObstacleTerm::Intervention(_) => obstacle.as_deref(),
                _ => None,
            };
            let system = self.build(&policy, lagged, cfg.check_matrices)?;
            diagnostics.systems_checked += usize::from(system.report.is_some());
            let next = system.matrix.solve(&system.rhs)?;
            let update = sup_distance(&next, &u);
            history.push(update.as_f64());
            u = next;
            diagnostics.iterations = iteration;
            diagnostics.update = update.as_f64();
            if update < tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::MaxIterations {
                iterations: cfg.max_iters,
                history,
            });
        }
        let policy = self.improve(&u)?;
        if policy.iter().any(|d| d.intervene) {
            let shift = self.diagonal_shift() * self.epsilon;
            diagnostics.contraction_bound = (T::one() + shift).recip().as_f64();
        }
        let observed = history
            .windows(2)
            .last()
            .is_some_and(|w| w[0] > 0.0 && w[1] / w[0] > SLOW_CONTRACTION);
        diagnostics.slow_contraction = observed || diagnostics.contraction_bound > SLOW_CONTRACTION;
        self.finish(u, policy, diagnostics)
    }

    /// Runs the configured method.
    pub fn solve(&self, initial: &[T], cfg: &SolverConfig) -> Result<StepOutcome<T>> {
        match cfg.method {
            Method::Policy => self.policy_iteration(initial, cfg),
            Method::Value => self.value_iteration(initial, cfg),
        }
    }
}

/// Pointwise residual of the penalty equations for `u^n` given `u^{n+1}`.
pub fn residual<T: Real>(
    u: &[T],
    next: &[T],
    t: T,
    grid: &SpaceTimeGrid<T>,
    problem: &ProblemSpec<T>,
    controls: &DiscreteControls<T>,
    epsilon: T,
) -> Result<GridFunction<T>> {
    PenaltyStep::backward(grid, problem, controls, t, next, epsilon)?.residual(u)
}

/// One backward step of the penalty scheme.
pub fn penalty_timestep<T: Real>(
    next: &[T],
    t: T,
    grid: &SpaceTimeGrid<T>,
    problem: &ProblemSpec<T>,
    controls: &DiscreteControls<T>,
    epsilon: T,
    cfg: &SolverConfig,
) -> Result<StepOutcome<T>> {
    PenaltyStep::backward(grid, problem, controls, t, next, epsilon)?.solve(next, cfg)
}

pub(crate) fn check_horizon<T: Real>(
    problem: &ProblemSpec<T>,
    grid: &SpaceTimeGrid<T>,
) -> Result<()> {
    let t_final = problem.t_final()?;
    let scale = t_final.abs().max(T::one());
    if (t_final - grid.horizon()).abs() > T::lit(1e-12) * scale {
        return Err(Error::InvalidArgument(format!(
            "grid horizon {} differs from problem horizon {t_final}",
            grid.horizon()
        )));
    }
    Ok(())
}

/// Obstacle used at every time level of a finite-horizon sweep.
pub(crate) enum SweepObstacle<'a, T> {
    Intervention,
    Frozen(&'a [GridFunction<T>]),
    Disabled,
}

pub(crate) fn sweep<T: Real>(
    problem: &ProblemSpec<T>,
    grid: &SpaceTimeGrid<T>,
    controls: &DiscreteControls<T>,
    epsilon: T,
    cfg: &SolverConfig,
    obstacle: SweepObstacle<'_, T>,
) -> Result<Solution<T>> {
    check_horizon(problem, grid)?;
    let steps = grid.steps();
    let mut surface = vec![GridFunction::default(); steps + 1];
    surface[steps] = GridFunction::from_fn(grid, |x| problem.g(x));
    let mut policies = vec![Vec::new(); steps];
    let mut diagnostics = vec![StepDiagnostics::default(); steps];
    for n in (0..steps).rev() {
        let next = &surface[n + 1];
        let step = PenaltyStep::backward(grid, problem, controls, grid.time(n), next, epsilon)?;
        let step = match &obstacle {
            SweepObstacle::Intervention => step,
            SweepObstacle::Frozen(levels) => step.with_frozen_obstacle(&levels[n]),
            SweepObstacle::Disabled => step.without_intervention(),
        };
        let mut outcome = step.solve(next, cfg)?;
        outcome.diagnostics.step = n;
        surface[n] = outcome.values;
        policies[n] = outcome.policy;
        diagnostics[n] = outcome.diagnostics;
    }
    Ok(Solution {
        scheme: Scheme::Penalty,
        grid: grid.clone(),
        surface,
        policies,
        diagnostics,
        epsilon: Some(epsilon),
        stationary: false,
    })
}

/// Backward induction `u^N = g`, then one penalty step per level. The
/// penalty parameter comes from `cfg` (`c_eps * rho` by default).
pub fn solve_finite_horizon<T: Real>(
    problem: &ProblemSpec<T>,
    grid: &SpaceTimeGrid<T>,
    controls: &DiscreteControls<T>,
    cfg: &SolverConfig,
) -> Result<Solution<T>> {
    let epsilon = cfg.epsilon_for(grid.rho());
    sweep(
        problem,
        grid,
        controls,
        epsilon,
        cfg,
        SweepObstacle::Intervention,
    )
}

/// Single stationary penalty system, solved from `u = 0`.
pub fn solve_infinite_horizon<T: Real>(
    problem: &ProblemSpec<T>,
    grid: &SpaceTimeGrid<T>,
    controls: &DiscreteControls<T>,
    cfg: &SolverConfig,
) -> Result<Solution<T>> {
    let epsilon = cfg.epsilon_for(grid.rho());
    let step = PenaltyStep::stationary(grid, problem, controls, epsilon)?;
    let outcome = step.solve(&vec![T::zero(); grid.len()], cfg)?;
    Ok(Solution {
        scheme: Scheme::Penalty,
        grid: grid.clone(),
        surface: vec![outcome.values],
        policies: vec![outcome.policy],
        diagnostics: vec![outcome.diagnostics],
        epsilon: Some(epsilon),
        stationary: true,
    })
}

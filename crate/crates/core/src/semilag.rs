//! Semi-Lagrangian scheme for control-independent volatility.
//!
//! Each step follows the characteristic `x + mu(x, b) dt` explicitly and
//! treats diffusion implicitly:
//!
//! ```text
//! (A u^n)_j = max( max_b { interp(u^{n+1}, x_j + mu_j(b) dt) + f_j(b) dt }, (M u^{n+1})_j )
//! ```
//!
//! with `A = I - dt sigma^2 / 2 D2` and identity rows at both ends.

use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::matrix::{check_matrix_properties, RowMatrix};
use crate::operators::{
    apply_intervention, interp_stencil, second_difference_row, DiscreteControls, GridFunction,
};
use crate::penalty::check_horizon;
use crate::problem::ProblemSpec;
use crate::scalar::{sup_norm, Real};
use crate::solution::{NodeDecision, Policy, Scheme, Solution, SolverConfig, StepDiagnostics};

/// Tridiagonal matrix; `sub[i]` is entry `(i, i - 1)` and `sup[i]` entry
/// `(i, i + 1)`, so `sub[0]` and `sup[n - 1]` are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalMatrix<T> {
    pub sub: Vec<T>,
    pub diag: Vec<T>,
    pub sup: Vec<T>,
}

impl<T: Real> TridiagonalMatrix<T> {
    pub fn identity(n: usize) -> Self {
        Self {
            sub: vec![T::zero(); n],
            diag: vec![T::one(); n],
            sup: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v = v + self.sub[i] * x[i - 1];
                }
                if i + 1 < n {
                    v = v + self.sup[i] * x[i + 1];
                }
                v
            })
            .collect()
    }
}

impl<T: Real> RowMatrix<T> for TridiagonalMatrix<T> {
    fn dim(&self) -> usize {
        self.len()
    }

    fn row_entries(&self, i: usize) -> Vec<(usize, T)> {
        let mut row = Vec::with_capacity(3);
        if i > 0 && self.sub[i] != T::zero() {
            row.push((i - 1, self.sub[i]));
        }
        row.push((i, self.diag[i]));
        if i + 1 < self.len() && self.sup[i] != T::zero() {
            row.push((i + 1, self.sup[i]));
        }
        row
    }
}

/// Rejects problems whose volatility depends on the control.
pub fn require_control_free_sigma<T: Real>(problem: &ProblemSpec<T>) -> Result<()> {
    if problem.sigma_control_free() {
        Ok(())
    } else {
        Err(Error::SchemeInapplicable(format!(
            "the semi-Lagrangian scheme requires a control-independent volatility \
             sigma(x, b) = sigma(x); problem `{}` has a control-dependent sigma",
            problem.name()
        )))
    }
}

/// `A = I - dt sigma_j^2 / 2 D2` on interior rows, identity rows at both ends.
pub fn assemble_a<T: Real>(
    grid: &SpaceTimeGrid<T>,
    problem: &ProblemSpec<T>,
) -> Result<TridiagonalMatrix<T>> {
    require_control_free_sigma(problem)?;
    let n = grid.len();
    let b = problem.b_bounds().0;
    let half_dt = T::lit(0.5) * grid.dt();
    let mut a = TridiagonalMatrix::identity(n);
    for i in 1..n - 1 {
        let sigma = problem.sigma(grid.x(i), b);
        let scale = half_dt * sigma * sigma;
        let row = second_difference_row(grid, i);
        a.sub[i] = -scale * row.lower;
        a.diag[i] = T::one() - scale * row.center;
        a.sup[i] = -scale * row.upper;
    }
    Ok(a)
}

/// Explicit part of one semi-Lagrangian step.
#[derive(Debug, Clone, PartialEq)]
pub struct SlRhs<T> {
    pub values: GridFunction<T>,
    /// Maximizing branch per node; continuation wins ties.
    pub policy: Policy<T>,
    /// Foot points `x_j + mu_j(b) dt` outside `[-Q, Q]`, over all `(j, b)`.
    pub clamped_feet: usize,
    /// Same count restricted to interior nodes.
    pub clamped_interior: usize,
}

/// Right-hand side for `u^n` at time `t = t_n`; coefficients and the impulse
/// sets are evaluated at `t`.
pub fn sl_rhs<T: Real>(
    u_next: &[T],
    t: T,
    grid: &SpaceTimeGrid<T>,
    problem: &ProblemSpec<T>,
    controls: &DiscreteControls<T>,
) -> Result<SlRhs<T>> {
    if u_next.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "time level has {} values for {} nodes",
            u_next.len(),
            grid.len()
        )));
    }
    let dt = grid.dt();
    let table = controls.impulse_table(problem, grid, t)?;
    let intervention = apply_intervention(u_next, grid, problem, &table)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut policy = Vec::with_capacity(grid.len());
    let (mut clamped_feet, mut clamped_interior) = (0, 0);
    for (i, &x) in grid.nodes().iter().enumerate() {
        let mut best: Option<(T, T)> = None;
        for &b in controls.controls() {
            let stencil = interp_stencil(grid, x + problem.mu(x, b) * dt);
            if stencil.is_clamped() {
                clamped_feet += 1;
                if !grid.is_boundary(i) {
                    clamped_interior += 1;
                }
            }
            let value = stencil.apply(u_next) + problem.f(t, x, b) * dt;
            if best.is_none_or(|(v, _)| value > v) {
                best = Some((value, b));
            }
        }
        let (continuation, b) =
            best.ok_or_else(|| Error::InvalidArgument("empty control set".into()))?;
        let impulse = intervention.values[i];
        if impulse > continuation {
            values.push(impulse);
            policy.push(NodeDecision {
                b,
                intervene: true,
                z: Some(intervention.argmax[i]),
            });
        } else {
            values.push(continuation);
            policy.push(NodeDecision {
                b,
                intervene: false,
                z: None,
            });
        }
    }
    Ok(SlRhs {
        values: values.into(),
        policy,
        clamped_feet,
        clamped_interior,
    })
}

/// Thomas algorithm. The result is checked against the system.
pub fn thomas_solve<T: Real>(a: &TridiagonalMatrix<T>, rhs: &[T]) -> Result<GridFunction<T>> {
    let n = a.len();
    if rhs.len() != n || a.sub.len() != n || a.sup.len() != n {
        return Err(Error::InvalidArgument(format!(
            "tridiagonal system of size {n} with right-hand side of length {}",
            rhs.len()
        )));
    }
    if n == 0 {
        return Ok(GridFunction::default());
    }
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    for i in 0..n {
        let (lower, prev_c, prev_d) = if i == 0 {
            (T::zero(), T::zero(), T::zero())
        } else {
            (a.sub[i], c[i - 1], d[i - 1])
        };
        let pivot = a.diag[i] - lower * prev_c;
        if pivot == T::zero() || !pivot.is_finite() {
            return Err(Error::SingularPivot { row: i });
        }
        c[i] = if i + 1 < n {
            a.sup[i] / pivot
        } else {
            T::zero()
        };
        d[i] = (rhs[i] - lower * prev_d) / pivot;
    }
    let mut u = d;
    for i in (0..n - 1).rev() {
        u[i] = u[i] - c[i] * u[i + 1];
    }
    let scale = T::one() + sup_norm(rhs);
    let residual = a
        .mul_vec(&u)
        .iter()
        .zip(rhs)
        .fold(T::zero(), |acc, (x, y)| acc.max((*x - *y).abs()));
    let tolerance = T::lit(1e-10).max(T::lit(64.0) * T::epsilon()) * scale;
    if !(residual <= tolerance) {
        return Err(Error::ResidualTooLarge {
            residual: residual.as_f64(),
            tolerance: tolerance.as_f64(),
        });
    }
    Ok(u.into())
}

/// `mu(-Q, b) >= 0` and `mu(Q, b) <= 0` for every sampled control: the drift
/// never pushes the end nodes outwards.
pub fn inward_drift<T: Real>(
    grid: &SpaceTimeGrid<T>,
    problem: &ProblemSpec<T>,
    controls: &DiscreteControls<T>,
) -> bool {
    let q = grid.q();
    controls
        .controls()
        .iter()
        .all(|&b| problem.mu(-q, b) >= T::zero() && problem.mu(q, b) <= T::zero())
}

/// Backward induction `u^N = g`, then `u^n = A^{-1} rhs(u^{n+1})`.
pub fn solve_semi_lagrangian<T: Real>(
    problem: &ProblemSpec<T>,
    grid: &SpaceTimeGrid<T>,
    controls: &DiscreteControls<T>,
    cfg: &SolverConfig,
) -> Result<Solution<T>> {
    require_control_free_sigma(problem)?;
    check_horizon(problem, grid)?;
    let a = assemble_a(grid, problem)?;
    let checked = if cfg.check_matrices {
        check_matrix_properties(&a).into_result()?;
        1
    } else {
        0
    };
    let steps = grid.steps();
    let mut surface = vec![GridFunction::default(); steps + 1];
    surface[steps] = GridFunction::from_fn(grid, |x| problem.g(x));
    let mut policies = vec![Vec::new(); steps];
    let mut diagnostics = vec![StepDiagnostics::default(); steps];
    for n in (0..steps).rev() {
        let rhs = sl_rhs(&surface[n + 1], grid.time(n), grid, problem, controls)?;
        let u = thomas_solve(&a, &rhs.values)?;
        let residual = a
            .mul_vec(&u)
            .iter()
            .zip(rhs.values.iter())
            .fold(0.0f64, |acc, (x, y)| acc.max((*x - *y).abs().as_f64()));
        diagnostics[n] = StepDiagnostics {
            step: n,
            iterations: 1,
            residual,
            systems_checked: if n + 1 == steps { checked } else { 0 },
            intervening_nodes: rhs.policy.iter().filter(|d| d.intervene).count(),
            clamped_feet: rhs.clamped_feet,
            clamped_interior: rhs.clamped_interior,
            min_value: u.min_value().as_f64(),
            max_value: u.max_value().as_f64(),
            ..StepDiagnostics::default()
        };
        policies[n] = rhs.policy;
        surface[n] = u;
    }
    Ok(Solution {
        scheme: Scheme::SemiLagrangian,
        grid: grid.clone(),
        surface,
        policies,
        diagnostics,
        epsilon: None,
        stationary: false,
    })
}

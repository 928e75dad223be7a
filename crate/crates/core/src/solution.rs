//! Solver configuration and the solution surfaces the schemes return.

use serde::Serialize;

use crate::grid::SpaceTimeGrid;
use crate::operators::GridFunction;
use crate::scalar::{sup_norm, Real};

/// Per-timestep solver for the penalized equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Policy,
    Value,
}

/// Which scheme produced a [`Solution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Penalty,
    SemiLagrangian,
    IteratedStopping,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Penalty => "penalty",
            Scheme::SemiLagrangian => "semilagrangian",
            Scheme::IteratedStopping => "ios",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Sup-norm update below which an iteration stops.
    pub tol: f64,
    /// Largest admissible residual of a returned time level.
    pub residual_tol: f64,
    pub max_iters: usize,
    /// Penalty parameter is `c_eps * rho` unless `epsilon` is set.
    pub c_eps: f64,
    pub epsilon: Option<f64>,
    pub method: Method,
    /// Run the sign-pattern / dominance checks on every assembled system.
    pub check_matrices: bool,
    /// Stopping tolerance of the iterated optimal stopping outer loop.
    pub outer_tol: f64,
    pub k_max: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            residual_tol: 1e-8,
            max_iters: 100,
            c_eps: 1.0,
            epsilon: None,
            method: Method::Policy,
            check_matrices: true,
            outer_tol: 1e-8,
            k_max: 50,
        }
    }
}

impl SolverConfig {
    pub fn epsilon_for<T: Real>(&self, rho: T) -> T {
        match self.epsilon {
            Some(eps) => T::lit(eps),
            None => T::lit(self.c_eps) * rho,
        }
    }
}

/// Control decision at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeDecision<T> {
    /// Continuous control `b`.
    pub b: T,
    /// Whether the impulse branch is active.
    pub intervene: bool,
    /// Chosen impulse when intervening.
    pub z: Option<T>,
}

/// Decisions at every node of one time level.
pub type Policy<T> = Vec<NodeDecision<T>>;

/// What happened while solving one time level.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub iterations: usize,
    /// Last sup-norm update of the iteration.
    pub update: f64,
    /// Sup norm of the scheme residual at the returned values.
    pub residual: f64,
    /// Linear systems assembled and certified by the matrix checks.
    pub systems_checked: usize,
    pub intervening_nodes: usize,
    /// Semi-Lagrangian foot points outside `[-Q, Q]`, at any node.
    pub clamped_feet: usize,
    /// Same, restricted to interior nodes.
    pub clamped_interior: usize,
    /// Guaranteed per-sweep contraction factor of value iteration,
    /// `dt / (eps + dt)` once any node intervenes (`1 / (1 + beta eps)` when
    /// stationary) and zero otherwise.
    pub contraction_bound: f64,
    /// Value iteration contracting slower than a factor 0.9 per sweep.
    pub slow_contraction: bool,
    pub min_value: f64,
    pub max_value: f64,
}

/// Numerical solution: `surface[n]` holds `u^n`, `n = 0..=N` for a finite
/// horizon and a single stationary level otherwise.
#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub scheme: Scheme,
    pub grid: SpaceTimeGrid<T>,
    pub surface: Vec<GridFunction<T>>,
    /// `policies[n]` is the decision used to compute `surface[n]`.
    pub policies: Vec<Policy<T>>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub epsilon: Option<T>,
    pub stationary: bool,
}

impl<T: Real> Solution<T> {
    /// `u^0` (or the stationary solution).
    pub fn initial(&self) -> &GridFunction<T> {
        &self.surface[0]
    }

    pub fn level(&self, n: usize) -> &GridFunction<T> {
        &self.surface[n]
    }

    pub fn max_abs(&self) -> T {
        self.surface
            .iter()
            .fold(T::zero(), |acc, u| acc.max(sup_norm(u)))
    }

    pub fn total_iterations(&self) -> usize {
        self.diagnostics.iter().map(|d| d.iterations).sum()
    }

    pub fn systems_checked(&self) -> usize {
        self.diagnostics.iter().map(|d| d.systems_checked).sum()
    }

    pub fn clamped_interior(&self) -> usize {
        self.diagnostics.iter().map(|d| d.clamped_interior).sum()
    }

    pub fn clamped_feet(&self) -> usize {
        self.diagnostics.iter().map(|d| d.clamped_feet).sum()
    }

    pub fn max_residual(&self) -> f64 {
        self.diagnostics
            .iter()
            .fold(0.0, |acc, d| acc.max(d.residual))
    }
}

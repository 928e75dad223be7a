//! Numerical schemes for one-dimensional Hamilton-Jacobi-Bellman
//! quasi-variational inequalities from stochastic impulse control:
//!
//! ```text
//! min( -sup_b { u_t + L_b u + f(., b) }, u - M u ) = 0,   u(T, .) = g
//! ```
//!
//! with the intervention operator
//! `M u(t, x) = sup_z { u(t, x + Gamma(t, x, z)) + K(t, x, z) }`.
//!
//! Two direct schemes are provided, an implicit [`penalty`] scheme (finite
//! and infinite horizon) and a [`semilag`] scheme, plus iterated optimal
//! stopping in [`oracle`] as an independent reference. Everything is generic
//! over the scalar type ([`Real`], implemented for `f32` and `f64`); the
//! aliases at the crate root fix it to `f64`.
//!
//! ```
//! use std::collections::BTreeMap;
//! use hjbqvi_core::{builtin, solve_finite_horizon, DiscreteControls, Grid, Problem, SolverConfig};
//!
//! let problem: Problem = builtin("heat", &BTreeMap::new()).unwrap();
//! let grid = Grid::uniform(4.0, 20, 10, 1.0).unwrap();
//! let controls = DiscreteControls::new(&problem, grid.rho()).unwrap();
//! let sol = solve_finite_horizon(&problem, &grid, &controls, &SolverConfig::default()).unwrap();
//! let exact = (-0.5f64).exp() * 1f64.sin();
//! assert!((sol.initial()[grid.half_len() + 5] - exact).abs() < 0.05);
//! ```

// `!(x > 0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod harness;
pub mod matrix;
pub mod operators;
pub mod oracle;
pub mod penalty;
pub mod problem;
pub mod scalar;
pub mod semilag;
pub mod solution;

pub use error::{Error, Result};
pub use grid::{GridMode, GridSummary, SpaceTimeGrid};
pub use harness::{
    check_monotonicity, check_stability_bound, cross_scheme_study, extend_solution, observed_order,
    run_refinement_study, solve_scheme, sup_error, ConvergenceReport, Reference, StudyOptions,
    Window,
};
pub use matrix::{check_matrix_properties, MatrixReport, SparseMatrix};
pub use operators::{apply_intervention, interp, DiscreteControls, GridFunction};
pub use oracle::{brute_force_residual, solve_iterated_optimal_stopping};
pub use penalty::{
    penalty_timestep, residual, solve_finite_horizon, solve_infinite_horizon, PenaltyStep,
};
pub use problem::{builtin, random_problem, validate, Horizon, ProblemSpec, ValidationReport};
pub use scalar::Real;
pub use semilag::{assemble_a, sl_rhs, solve_semi_lagrangian, thomas_solve, TridiagonalMatrix};
pub use solution::{Method, NodeDecision, Scheme, Solution, SolverConfig, StepDiagnostics};

pub type Grid = SpaceTimeGrid<f64>;
pub type Problem = ProblemSpec<f64>;
pub type Controls = DiscreteControls<f64>;
pub type Values = GridFunction<f64>;
pub type Surface = Solution<f64>;
pub type Study = harness::Study<f64>;

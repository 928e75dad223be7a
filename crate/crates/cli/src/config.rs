//! TOML run specifications.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hjbqvi_core::grid::steps_for;
use hjbqvi_core::{builtin, Grid, Horizon, Method, Problem, Scheme, SolverConfig, Window};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Semantic(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    Penalty,
    Semilagrangian,
    Ios,
}

impl From<SchemeName> for Scheme {
    fn from(name: SchemeName) -> Self {
        match name {
            SchemeName::Penalty => Scheme::Penalty,
            SchemeName::Semilagrangian => Scheme::SemiLagrangian,
            SchemeName::Ios => Scheme::IteratedStopping,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridModeName {
    #[default]
    Uniform,
    Refined,
    Growing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    #[default]
    Policy,
    Value,
}

/// `[solver]` table; omitted keys keep the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub tol: Option<f64>,
    pub residual_tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub c_eps: Option<f64>,
    pub epsilon: Option<f64>,
    pub method: Option<MethodName>,
    pub check_matrices: Option<bool>,
    pub outer_tol: Option<f64>,
    pub k_max: Option<usize>,
}

/// `[study]` table.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    #[serde(default = "default_levels")]
    pub levels: u32,
    /// `[x_min, x_max]`; defaults to `[-Q/2, Q/2]`.
    pub x_window: Option<[f64; 2]>,
    /// `[t_min, t_max]`; defaults to `[0, T]`.
    pub t_window: Option<[f64; 2]>,
    #[serde(default = "default_trials")]
    pub monotonicity_trials: usize,
}

fn default_levels() -> u32 {
    3
}

fn default_trials() -> usize {
    20
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            levels: default_levels(),
            x_window: None,
            t_window: None,
            monotonicity_trials: default_trials(),
        }
    }
}

/// A parsed and validated run specification.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub problem: String,
    pub scheme: SchemeName,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(rename = "Q")]
    pub q: Option<f64>,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub rho: Option<f64>,
    #[serde(default)]
    pub grid_mode: GridModeName,
    pub c_b: Option<f64>,
    pub c_t: Option<f64>,
    pub c_x: Option<f64>,
    pub c_q: Option<f64>,
    pub alpha: Option<f64>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub study: StudySection,
}

/// Reads and validates a run specification.
pub fn parse_config(path: &Path) -> Result<RunSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_str(&text).map_err(|e| match e {
        ConfigError::Parse { message, .. } => ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses and validates a run specification held in memory.
pub fn parse_str(text: &str) -> Result<RunSpec, ConfigError> {
    let spec: RunSpec = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: PathBuf::from("<config>"),
        message: e.to_string(),
    })?;
    spec.validate()?;
    Ok(spec)
}

fn semantic(message: impl Into<String>) -> ConfigError {
    ConfigError::Semantic(message.into())
}

impl RunSpec {
    fn validate(&self) -> Result<(), ConfigError> {
        let problem = self.build_problem()?;
        let scheme = Scheme::from(self.scheme);
        if scheme == Scheme::SemiLagrangian && !problem.sigma_control_free() {
            return Err(semantic(format!(
                "scheme `semilagrangian` requires the volatility to be control independent, \
                 sigma(x, b) = sigma(x), but problem `{}` has a control-dependent sigma \
                 (sigma_b = {}); use scheme `penalty` instead",
                self.problem,
                self.params.get("sigma_b").copied().unwrap_or(0.0)
            )));
        }
        if matches!(problem.horizon(), Horizon::Infinite { .. }) && scheme != Scheme::Penalty {
            return Err(semantic(format!(
                "scheme `{}` needs a finite horizon; the infinite-horizon problem (beta set) is only \
                 available with scheme `penalty`",
                scheme.name()
            )));
        }
        self.build_grid()?;
        self.solver_config()?;
        if self.study.levels < 2 {
            return Err(semantic("study.levels must be at least 2"));
        }
        Ok(())
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme.into()
    }

    pub fn build_problem(&self) -> Result<Problem, ConfigError> {
        let mut params = self.params.clone();
        if let Some(t) = self.t {
            match params.get("T") {
                Some(&p) if p != t => {
                    return Err(semantic(format!("T = {t} conflicts with params.T = {p}")));
                }
                _ => {
                    params.insert("T".into(), t);
                }
            }
            if params.contains_key("beta") {
                return Err(semantic("T and params.beta are mutually exclusive"));
            }
        }
        builtin(&self.problem, &params).map_err(|e| semantic(e.to_string()))
    }

    fn horizon(&self) -> Result<f64, ConfigError> {
        match self.build_problem()?.horizon() {
            Horizon::Finite { t_final } => Ok(t_final),
            // The stationary solve ignores time; one nominal step.
            Horizon::Infinite { .. } => Ok(1.0),
        }
    }

    /// Number of time steps: `N` if given, else the smallest with `dt <= c_t rho`.
    fn steps(&self, rho: f64, horizon: f64) -> Result<usize, ConfigError> {
        match (self.n, self.c_t) {
            (Some(_), Some(_)) => Err(semantic("give either N or c_t, not both")),
            (Some(n), None) => Ok(n),
            (None, c_t) => {
                steps_for(horizon, c_t.unwrap_or(1.0) * rho).map_err(|e| semantic(e.to_string()))
            }
        }
    }

    pub fn build_grid(&self) -> Result<Grid, ConfigError> {
        let horizon = self.horizon()?;
        let q = self.q;
        let grid = match self.grid_mode {
            GridModeName::Uniform => {
                let q = q.ok_or_else(|| semantic("uniform grids need Q"))?;
                match (self.m, self.rho) {
                    (Some(m), None) => {
                        let n = self.steps(q / m.max(1) as f64, horizon)?;
                        Grid::uniform(q, m, n, horizon)
                    }
                    (None, Some(rho)) => match self.n {
                        Some(_) => {
                            let m = (q / (self.c_x.unwrap_or(1.0) * rho)).round().max(1.0) as usize;
                            Grid::uniform(q, m, self.steps(rho, horizon)?, horizon)
                        }
                        None => Grid::uniform_from_rho(
                            q,
                            rho,
                            self.c_x.unwrap_or(1.0),
                            self.c_t.unwrap_or(1.0),
                            horizon,
                        ),
                    },
                    _ => return Err(semantic("uniform grids need exactly one of M and rho")),
                }
            }
            GridModeName::Refined => {
                let q = q.ok_or_else(|| semantic("refined grids need Q"))?;
                let rho = self.rho.ok_or_else(|| semantic("refined grids need rho"))?;
                if self.m.is_some() {
                    return Err(semantic("refined grids take rho, not M"));
                }
                Grid::boundary_refined(
                    q,
                    rho,
                    self.c_b.unwrap_or(1.0),
                    self.steps(rho, horizon)?,
                    horizon,
                )
            }
            GridModeName::Growing => {
                if q.is_some() || self.m.is_some() {
                    return Err(semantic(
                        "growing grids derive Q from c_q and alpha; drop Q and M",
                    ));
                }
                let rho = self.rho.ok_or_else(|| semantic("growing grids need rho"))?;
                let c_q = self.c_q.ok_or_else(|| semantic("growing grids need c_q"))?;
                Grid::growing_q(
                    c_q,
                    self.alpha
                        .unwrap_or(hjbqvi_core::grid::DEFAULT_GROWTH_EXPONENT),
                    rho,
                    self.c_x.unwrap_or(1.0),
                    self.steps(rho, horizon)?,
                    horizon,
                )
            }
        };
        grid.map_err(|e| semantic(e.to_string()))
    }

    pub fn solver_config(&self) -> Result<SolverConfig, ConfigError> {
        let s = &self.solver;
        let d = SolverConfig::default();
        let cfg = SolverConfig {
            tol: s.tol.unwrap_or(d.tol),
            residual_tol: s.residual_tol.unwrap_or(d.residual_tol),
            max_iters: s.max_iters.unwrap_or(d.max_iters),
            c_eps: s.c_eps.unwrap_or(d.c_eps),
            epsilon: s.epsilon.or(d.epsilon),
            method: match s.method.unwrap_or_default() {
                MethodName::Policy => Method::Policy,
                MethodName::Value => Method::Value,
            },
            check_matrices: s.check_matrices.unwrap_or(d.check_matrices),
            outer_tol: s.outer_tol.unwrap_or(d.outer_tol),
            k_max: s.k_max.unwrap_or(d.k_max),
        };
        let positive = [
            ("solver.tol", cfg.tol),
            ("solver.residual_tol", cfg.residual_tol),
            ("solver.c_eps", cfg.c_eps),
            ("solver.outer_tol", cfg.outer_tol),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(semantic(format!("{name} must be positive, got {value}")));
            }
        }
        if let Some(eps) = cfg.epsilon {
            if !(eps > 0.0) {
                return Err(semantic(format!(
                    "solver.epsilon must be positive, got {eps}"
                )));
            }
        }
        if cfg.max_iters == 0 || cfg.k_max == 0 {
            return Err(semantic(
                "solver.max_iters and solver.k_max must be positive",
            ));
        }
        Ok(cfg)
    }

    /// Error window of a study on `grid`.
    pub fn window(&self, grid: &Grid) -> Window<f64> {
        let default = Window::interior(grid);
        Window {
            x_range: self.study.x_window.map_or(default.x_range, |[a, b]| (a, b)),
            t_range: self.study.t_window.map_or(default.t_range, |[a, b]| (a, b)),
        }
    }
}

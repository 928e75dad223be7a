//! Continuous problem data and the builtin test problems.
//!
//! A [`ProblemSpec`] carries the drift `mu(x, b)`, volatility `sigma(x, b)`,
//! running reward `f(t, x, b)`, terminal reward `g(x)`, impulse displacement
//! `Gamma(t, x, z)`, impulse cost `K(t, x, z)`, the impulse interval
//! `Z(t, x)`, the control interval `B` and the horizon.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::operators::DiscreteControls;
use crate::scalar::Real;

type Fn1<T> = Arc<dyn Fn(T) -> T + Send + Sync>;
type Fn2<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;
type Fn3<T> = Arc<dyn Fn(T, T, T) -> T + Send + Sync>;
type Bounds<T> = Arc<dyn Fn(T, T) -> (T, T) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon<T> {
    /// Terminal time `T`.
    Finite { t_final: T },
    /// Discount rate `beta > 0` of the stationary problem.
    Infinite { beta: T },
}

/// Problem data. Cheap to clone; all coefficients are shared closures.
#[derive(Clone)]
pub struct ProblemSpec<T> {
    name: String,
    drift: Fn2<T>,
    diffusion: Fn2<T>,
    diffusion_control_free: bool,
    running: Fn3<T>,
    terminal: Fn1<T>,
    jump: Fn3<T>,
    cost: Fn3<T>,
    impulse_bounds: Bounds<T>,
    control_bounds: (T, T),
    horizon: Horizon<T>,
    exact: Option<Fn2<T>>,
}

impl<T: Real> fmt::Debug for ProblemSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("horizon", &self.horizon)
            .field("control_bounds", &self.control_bounds)
            .field("diffusion_control_free", &self.diffusion_control_free)
            .finish_non_exhaustive()
    }
}

impl<T: Real> ProblemSpec<T> {
    /// Problem with zero dynamics and rewards, no controls (`B = {0}`) and a
    /// single do-nothing impulse `Z = {0}`, `Gamma = 0`, `K = -1`.
    pub fn new(name: impl Into<String>, horizon: Horizon<T>) -> Self {
        Self {
            name: name.into(),
            drift: Arc::new(|_, _| T::zero()),
            diffusion: Arc::new(|_, _| T::zero()),
            diffusion_control_free: true,
            running: Arc::new(|_, _, _| T::zero()),
            terminal: Arc::new(|_| T::zero()),
            jump: Arc::new(|_, _, _| T::zero()),
            cost: Arc::new(|_, _, _| -T::one()),
            impulse_bounds: Arc::new(|_, _| (T::zero(), T::zero())),
            control_bounds: (T::zero(), T::zero()),
            horizon,
            exact: None,
        }
    }

    pub fn with_drift(mut self, mu: impl Fn(T, T) -> T + Send + Sync + 'static) -> Self {
        self.drift = Arc::new(mu);
        self
    }

    /// Sets `sigma(x, b)`; `control_free` declares that it ignores `b`.
    pub fn with_diffusion(
        mut self,
        sigma: impl Fn(T, T) -> T + Send + Sync + 'static,
        control_free: bool,
    ) -> Self {
        self.diffusion = Arc::new(sigma);
        self.diffusion_control_free = control_free;
        self
    }

    pub fn with_running_reward(mut self, f: impl Fn(T, T, T) -> T + Send + Sync + 'static) -> Self {
        self.running = Arc::new(f);
        self
    }

    pub fn with_terminal_reward(mut self, g: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        self.terminal = Arc::new(g);
        self
    }

    /// Sets the impulse displacement, cost and admissible impulse interval.
    pub fn with_impulses(
        mut self,
        jump: impl Fn(T, T, T) -> T + Send + Sync + 'static,
        cost: impl Fn(T, T, T) -> T + Send + Sync + 'static,
        bounds: impl Fn(T, T) -> (T, T) + Send + Sync + 'static,
    ) -> Self {
        self.jump = Arc::new(jump);
        self.cost = Arc::new(cost);
        self.impulse_bounds = Arc::new(bounds);
        self
    }

    pub fn with_controls(mut self, lo: T, hi: T) -> Self {
        self.control_bounds = (lo, hi);
        self
    }

    /// Attaches a closed-form solution `u(t, x)` used as a reference.
    pub fn with_exact(mut self, u: impl Fn(T, T) -> T + Send + Sync + 'static) -> Self {
        self.exact = Some(Arc::new(u));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mu(&self, x: T, b: T) -> T {
        (self.drift)(x, b)
    }

    pub fn sigma(&self, x: T, b: T) -> T {
        (self.diffusion)(x, b)
    }

    pub fn sigma_control_free(&self) -> bool {
        self.diffusion_control_free
    }

    pub fn f(&self, t: T, x: T, b: T) -> T {
        (self.running)(t, x, b)
    }

    pub fn g(&self, x: T) -> T {
        (self.terminal)(x)
    }

    pub fn gamma(&self, t: T, x: T, z: T) -> T {
        (self.jump)(t, x, z)
    }

    pub fn k(&self, t: T, x: T, z: T) -> T {
        (self.cost)(t, x, z)
    }

    pub fn z_bounds(&self, t: T, x: T) -> (T, T) {
        (self.impulse_bounds)(t, x)
    }

    pub fn b_bounds(&self) -> (T, T) {
        self.control_bounds
    }

    pub fn horizon(&self) -> Horizon<T> {
        self.horizon
    }

    pub fn exact(&self, t: T, x: T) -> Option<T> {
        self.exact.as_ref().map(|u| u(t, x))
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// Terminal time, or an error for a stationary problem.
    pub fn t_final(&self) -> Result<T> {
        match self.horizon {
            Horizon::Finite { t_final } => Ok(t_final),
            Horizon::Infinite { .. } => Err(Error::SchemeInapplicable(format!(
                "problem `{}` has an infinite horizon",
                self.name
            ))),
        }
    }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 3] = ["constant", "heat", "cash"];

struct Params<'a> {
    name: &'a str,
    values: &'a BTreeMap<String, f64>,
}

impl Params<'_> {
    fn check(&self, allowed: &[&str]) -> Result<()> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(key) => Err(Error::InvalidArgument(format!(
                "unknown parameter `{key}` for problem `{}` (allowed: {})",
                self.name,
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }

    fn get<T: Real>(&self, key: &str, default: f64) -> T {
        T::lit(self.values.get(key).copied().unwrap_or(default))
    }

    fn horizon<T: Real>(&self, default_t: f64) -> Result<Horizon<T>> {
        match self.values.get("beta") {
            Some(&beta) if beta > 0.0 => Ok(Horizon::Infinite { beta: T::lit(beta) }),
            Some(&beta) => Err(Error::InvalidArgument(format!(
                "beta must be positive, got {beta}"
            ))),
            None => {
                let t = self.get::<T>("T", default_t);
                if t > T::zero() {
                    Ok(Horizon::Finite { t_final: t })
                } else {
                    Err(Error::InvalidArgument(format!(
                        "T must be positive, got {t}"
                    )))
                }
            }
        }
    }
}

/// Builtin problem registry. Passing `beta` turns any problem into its
/// stationary (infinite-horizon) version.
///
/// * `constant` (`c`, `K`, `T`): `g = c`, no dynamics, `K = -1`; solved by `u = c`.
/// * `heat` (`s`, `K`, `T`): `g = sin x`, `sigma = s`, impulses jump anywhere in
///   `[-1, 1]` at cost 3 and never pay off; `u = exp(-s^2 (T - t) / 2) sin x`.
/// * `cash` (`G`, `c0`, `lambda`, `s`, `b_max`, `sigma_b`, `T`): quadratic
///   holding penalty capped at `G`, drift control `b in [-b_max, b_max]`,
///   impulses reset the state to `z in [-1, 1]` at cost `c0 + lambda |z - x|`.
///   A nonzero `sigma_b` makes the volatility control dependent.
pub fn builtin<T: Real>(name: &str, params: &BTreeMap<String, f64>) -> Result<ProblemSpec<T>> {
    let p = Params {
        name,
        values: params,
    };
    match name {
        "constant" => {
            p.check(&["c", "K", "T", "beta"])?;
            let c: T = p.get("c", 1.0);
            let k: T = p.get("K", -1.0);
            let horizon = p.horizon(1.0)?;
            let problem = ProblemSpec::new("constant", horizon)
                .with_terminal_reward(move |_| c)
                .with_impulses(
                    |_, _, _| T::zero(),
                    move |_, _, _| k,
                    |_, _| (T::zero(), T::one()),
                );
            Ok(match horizon {
                Horizon::Finite { .. } => problem.with_exact(move |_, _| c),
                Horizon::Infinite { .. } => problem.with_exact(|_, _| T::zero()),
            })
        }
        "heat" => {
            p.check(&["s", "K", "T", "beta"])?;
            let s: T = p.get("s", 1.0);
            let k: T = p.get("K", -3.0);
            let horizon = p.horizon(1.0)?;
            let problem = ProblemSpec::new("heat", horizon)
                .with_diffusion(move |_, _| s, true)
                .with_terminal_reward(T::sin)
                .with_impulses(
                    |_, x, z| z - x,
                    move |_, _, _| k,
                    |_, _| (-T::one(), T::one()),
                );
            Ok(match horizon {
                Horizon::Finite { t_final } => problem.with_exact(move |t, x| {
                    (-(s * s) * (t_final - t) * T::lit(0.5)).exp() * x.sin()
                }),
                Horizon::Infinite { .. } => problem.with_exact(|_, _| T::zero()),
            })
        }
        "cash" => {
            p.check(&["G", "c0", "lambda", "s", "b_max", "sigma_b", "T", "beta"])?;
            let cap: T = p.get("G", 2.0);
            let c0: T = p.get("c0", 2.0);
            let lambda: T = p.get("lambda", 0.5);
            let s: T = p.get("s", 1.0);
            let b_max: T = p.get("b_max", 0.5);
            let sigma_b: T = p.get("sigma_b", 0.0);
            let horizon = p.horizon(3.0)?;
            if b_max < T::zero() {
                return Err(Error::InvalidArgument(format!(
                    "b_max must be non-negative, got {b_max}"
                )));
            }
            let holding = move |x: T| -(x * x).min(cap);
            Ok(ProblemSpec::new("cash", horizon)
                .with_drift(|_, b| b)
                .with_diffusion(move |_, b: T| s + sigma_b * b.abs(), sigma_b == T::zero())
                .with_running_reward(move |_, x, _| holding(x))
                .with_terminal_reward(holding)
                .with_impulses(
                    |_, x, z| z - x,
                    move |_, x, z| -c0 - lambda * (z - x).abs(),
                    |_, _| (-T::one(), T::one()),
                )
                .with_controls(-b_max, b_max))
        }
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// Seeded problem with smooth bounded coefficients, a control-free
/// volatility and strictly negative impulse costs.
pub fn random_problem<T: Real>(seed: u64, horizon: Horizon<T>) -> ProblemSpec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |lo: f64, hi: f64| T::lit(rng.gen_range(lo..hi));
    let (a0, a1) = (draw(-0.5, 0.5), draw(0.5, 2.0));
    let (s0, s1, s2) = (draw(0.1, 0.6), draw(0.0, 0.4), draw(0.5, 2.0));
    let (f0, f1, f2) = (draw(-2.0, 2.0), draw(-1.0, 1.0), draw(-1.0, 1.0));
    let (g0, g1, g2) = (draw(-2.0, 2.0), draw(0.5, 2.0), draw(-1.0, 1.0));
    let (k0, k1) = (draw(0.2, 1.0), draw(0.0, 0.5));
    let b_max = draw(0.1, 1.0);
    ProblemSpec::new(format!("random-{seed}"), horizon)
        .with_drift(move |x, b| a0 * (a1 * x).sin() + b)
        .with_diffusion(move |x, _| s0 + s1 * (s2 * x).cos().abs(), true)
        .with_running_reward(move |t, x, b| f0 * (x + f1 * t).cos() + f2 * b)
        .with_terminal_reward(move |x| g0 * (g1 * x).sin() + g2 * x.cos())
        .with_impulses(
            |_, x, z| z - x,
            move |_, x, z| -k0 - k1 * (z - x).abs(),
            |_, _| (-T::one(), T::one()),
        )
        .with_controls(-b_max, b_max)
}

/// Worst-case sample for a validation check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    pub x: f64,
    pub z: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub witness: Witness,
}

/// Outcome of sampling the standing assumptions on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Largest sampled difference quotient in `x` of `mu` and `sigma`.
    pub lipschitz_estimate: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, prefix: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name.starts_with(prefix))
    }
}

pub const CHECK_H1: &str = "H1: M g <= g";
pub const CHECK_H2: &str = "H2: impulse set nonempty";
pub const CHECK_H3: &str = "H3: sup K < 0";
pub const CHECK_BOUNDED: &str = "H1: f and g bounded";
pub const CHECK_SIGMA: &str = "sigma >= 0";

#[derive(Clone, Copy)]
struct Worst {
    value: f64,
    t: f64,
    x: f64,
    z: Option<f64>,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            t: f64::NAN,
            x: f64::NAN,
            z: None,
        }
    }

    fn offer(&mut self, value: f64, t: f64, x: f64, z: Option<f64>) {
        // NaN samples are always the worst.
        if value > self.value || (value.is_nan() && !self.value.is_nan()) {
            *self = Self { value, t, x, z };
        }
    }

    fn check(self, name: &str, passed: impl Fn(f64) -> bool) -> Check {
        Check {
            name: name.to_string(),
            passed: passed(self.value),
            witness: Witness {
                t: self.t,
                x: self.x,
                z: self.z,
                value: self.value,
            },
        }
    }
}

/// Samples the standing assumptions on the grid nodes, `samples` equally
/// spaced time levels, the control set `B_rho` and the impulse sets
/// `Z_rho(t, x)` for `rho = grid.rho()`.
pub fn validate<T: Real>(
    problem: &ProblemSpec<T>,
    grid: &SpaceTimeGrid<T>,
    samples: usize,
) -> Result<ValidationReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let controls = DiscreteControls::new(problem, grid.rho())?;
    let t_end = match problem.horizon() {
        Horizon::Finite { t_final } => Some(t_final),
        Horizon::Infinite { .. } => None,
    };
    let times: Vec<T> = match t_end {
        Some(t_final) if samples > 1 => (0..samples)
            .map(|s| t_final * T::from_count(s) / T::from_count(samples - 1))
            .collect(),
        _ => vec![T::zero()],
    };

    let mut max_cost = Worst::new();
    let mut min_width = Worst::new();
    let mut max_abs = Worst::new();
    let mut min_sigma = Worst::new();
    for &t in &times {
        for &x in grid.nodes() {
            let (lo, hi) = problem.z_bounds(t, x);
            min_width.offer(-(hi - lo).as_f64(), t.as_f64(), x.as_f64(), None);
            for z in controls.impulses(problem, t, x) {
                max_cost.offer(
                    problem.k(t, x, z).as_f64(),
                    t.as_f64(),
                    x.as_f64(),
                    Some(z.as_f64()),
                );
            }
            for &b in controls.controls() {
                let f = problem.f(t, x, b).as_f64();
                max_abs.offer(f.abs(), t.as_f64(), x.as_f64(), Some(b.as_f64()));
            }
        }
    }
    for &x in grid.nodes() {
        if t_end.is_some() {
            max_abs.offer(problem.g(x).as_f64().abs(), f64::NAN, x.as_f64(), None);
        }
        for &b in controls.controls() {
            min_sigma.offer(
                -problem.sigma(x, b).as_f64(),
                f64::NAN,
                x.as_f64(),
                Some(b.as_f64()),
            );
        }
    }

    let mut checks = Vec::new();
    if let Some(t_final) = t_end {
        let mut gap = Worst::new();
        for &x in grid.nodes() {
            for z in controls.impulses(problem, t_final, x) {
                let mg = problem.g(x + problem.gamma(t_final, x, z)) + problem.k(t_final, x, z);
                gap.offer(
                    (mg - problem.g(x)).as_f64(),
                    t_final.as_f64(),
                    x.as_f64(),
                    Some(z.as_f64()),
                );
            }
        }
        checks.push(gap.check(CHECK_H1, |v| v <= 0.0));
    }
    checks.push(max_abs.check(CHECK_BOUNDED, f64::is_finite));
    let mut width = min_width;
    width.value = -width.value;
    checks.push(width.check(CHECK_H2, |v| v >= 0.0));
    checks.push(max_cost.check(CHECK_H3, |v| v < 0.0));
    let mut sigma = min_sigma;
    sigma.value = -sigma.value;
    checks.push(sigma.check(CHECK_SIGMA, |v| v >= 0.0));

    let mut lipschitz = 0.0f64;
    for &b in controls.controls() {
        for i in 0..grid.len() - 1 {
            let (x0, x1) = (grid.x(i), grid.x(i + 1));
            let h = (x1 - x0).as_f64();
            let dmu = (problem.mu(x1, b) - problem.mu(x0, b)).as_f64().abs();
            let dsigma = (problem.sigma(x1, b) - problem.sigma(x0, b)).as_f64().abs();
            lipschitz = lipschitz.max(dmu / h).max(dsigma / h);
        }
    }
    Ok(ValidationReport {
        checks,
        lipschitz_estimate: lipschitz,
    })
}

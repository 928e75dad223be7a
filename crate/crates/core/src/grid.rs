//! Space-time grids driven by a single refinement parameter `rho`.
//!
//! Nodes are stored left to right and addressed by a zero-based index
//! `i = j + M`, so `i = 0` is `x_{-M} = -Q` and `i = 2M` is `x_M = Q`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Exponent of `rho` giving the width of the two boundary cells of a
/// boundary-refined grid. Any exponent in `(1/2, 1)` is admissible.
pub const BOUNDARY_CELL_EXPONENT: f64 = 0.75;

/// Default growth exponent for [`GridMode::GrowingQ`].
pub const DEFAULT_GROWTH_EXPONENT: f64 = 0.25;

/// How the spatial nodes were laid out, together with the parameters needed
/// to rebuild the grid at another refinement level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridMode<T> {
    /// Equally spaced nodes on a fixed `[-Q, Q]`.
    Uniform,
    /// Interior spacing close to `rho`, boundary cells of width `c_b * rho^(3/4)`.
    BoundaryRefined { c_b: T },
    /// Uniform spacing close to `c_x * rho` on `[-Q, Q]` with `Q = c_q * rho^(-alpha)`.
    GrowingQ { c_q: T, alpha: T, c_x: T },
}

impl<T> GridMode<T> {
    pub fn name(&self) -> &'static str {
        match self {
            GridMode::Uniform => "uniform",
            GridMode::BoundaryRefined { .. } => "boundary_refined",
            GridMode::GrowingQ { .. } => "growing_q",
        }
    }
}

/// Immutable space-time grid with `N` timesteps of size `dt` and `2M + 1`
/// strictly increasing spatial nodes symmetric about zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeGrid<T> {
    rho: T,
    dt: T,
    nodes: Vec<T>,
    steps: usize,
    q: T,
    horizon: T,
    mode: GridMode<T>,
}

/// Compact description of a grid for reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSummary {
    pub mode: &'static str,
    pub rho: f64,
    pub dt: f64,
    pub q: f64,
    pub half_nodes: usize,
    pub steps: usize,
    pub min_spacing: f64,
    pub max_spacing: f64,
}

fn positive<T: Real>(value: T, name: &str) -> Result<()> {
    if value > T::zero() && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidGrid(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}

/// Nodes `Q * j / M` for `j = -M..=M`, mirrored so the grid is exactly symmetric.
fn uniform_nodes<T: Real>(q: T, m: usize) -> Vec<T> {
    let mf = T::from_count(m);
    let right: Vec<T> = (0..=m).map(|j| q * T::from_count(j) / mf).collect();
    mirror(&right, q)
}

/// Builds the full node vector from the non-negative half `[0, .., Q]`.
fn mirror<T: Real>(right: &[T], q: T) -> Vec<T> {
    let m = right.len() - 1;
    let mut nodes = Vec::with_capacity(2 * m + 1);
    nodes.extend(right[1..].iter().rev().map(|&x| -x));
    nodes.extend_from_slice(right);
    nodes[0] = -q;
    nodes[2 * m] = q;
    nodes
}

impl<T: Real> SpaceTimeGrid<T> {
    /// `2M + 1` equally spaced nodes on `[-Q, Q]` with `dt = T / N`.
    pub fn uniform(q: T, m: usize, n: usize, horizon: T) -> Result<Self> {
        positive(q, "Q")?;
        positive(horizon, "T")?;
        if m == 0 || n == 0 {
            return Err(Error::InvalidGrid(format!(
                "M and N must be positive, got M={m}, N={n}"
            )));
        }
        let dt = horizon / T::from_count(n);
        let dx = q / T::from_count(m);
        Ok(Self {
            rho: dt.max(dx),
            dt,
            nodes: uniform_nodes(q, m),
            steps: n,
            q,
            horizon,
            mode: GridMode::Uniform,
        })
    }

    /// Uniform grid with `dx ~ c_x * rho` and `dt <= c_t * rho`.
    pub fn uniform_from_rho(q: T, rho: T, c_x: T, c_t: T, horizon: T) -> Result<Self> {
        positive(rho, "rho")?;
        positive(c_x, "c_x")?;
        positive(c_t, "c_t")?;
        positive(q, "Q")?;
        let m = (q / (c_x * rho)).round().to_usize().unwrap_or(0).max(1);
        let n = steps_for(horizon, c_t * rho)?;
        Self::uniform(q, m, n, horizon)
    }

    /// Grid whose interior spacing is close to (at most) `rho` and whose two
    /// boundary cells have width `c_b * rho^(3/4)`.
    pub fn boundary_refined(q: T, rho: T, c_b: T, n: usize, horizon: T) -> Result<Self> {
        positive(q, "Q")?;
        positive(rho, "rho")?;
        positive(c_b, "c_b")?;
        positive(horizon, "T")?;
        if n == 0 {
            return Err(Error::InvalidGrid("N must be positive".into()));
        }
        let width = boundary_cell_width(rho, c_b);
        if width >= q {
            return Err(Error::InvalidGrid(format!(
                "boundary cell width {width} is not smaller than Q = {q}"
            )));
        }
        let inner = q - width;
        // Interior cells come in pairs so the node set stays symmetric about 0.
        let half_cells = (inner / rho).ceil().to_usize().unwrap_or(1).max(1);
        let inner_nodes = uniform_nodes(inner, half_cells);
        let mut right: Vec<T> = inner_nodes[half_cells..].to_vec();
        right.push(q);
        Ok(Self {
            rho,
            dt: horizon / T::from_count(n),
            nodes: mirror(&right, q),
            steps: n,
            q,
            horizon,
            mode: GridMode::BoundaryRefined { c_b },
        })
    }

    /// Grid whose truncation `Q = c_q * rho^(-alpha)` grows as `rho` shrinks.
    pub fn growing_q(c_q: T, alpha: T, rho: T, c_x: T, n: usize, horizon: T) -> Result<Self> {
        positive(c_q, "c_q")?;
        positive(rho, "rho")?;
        positive(c_x, "c_x")?;
        positive(horizon, "T")?;
        if alpha < T::zero() {
            return Err(Error::InvalidGrid(format!(
                "alpha must be non-negative, got {alpha}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidGrid("N must be positive".into()));
        }
        let q = c_q * rho.powf(-alpha);
        let m = (q / (c_x * rho)).ceil().to_usize().unwrap_or(1).max(1);
        Ok(Self {
            rho,
            dt: horizon / T::from_count(n),
            nodes: uniform_nodes(q, m),
            steps: n,
            q,
            horizon,
            mode: GridMode::GrowingQ { c_q, alpha, c_x },
        })
    }

    /// Rebuilds the grid with `rho` halved `level` times (`dt` halves too).
    pub fn for_level(&self, level: u32) -> Result<Self> {
        if level == 0 {
            return Ok(self.clone());
        }
        let factor = 1usize
            .checked_shl(level)
            .ok_or_else(|| Error::InvalidGrid(format!("level {level} too deep")))?;
        let scale = T::from_count(factor);
        let n = self.steps * factor;
        match self.mode {
            GridMode::Uniform => Self::uniform(self.q, self.half_len() * factor, n, self.horizon),
            GridMode::BoundaryRefined { c_b } => {
                Self::boundary_refined(self.q, self.rho / scale, c_b, n, self.horizon)
            }
            GridMode::GrowingQ { c_q, alpha, c_x } => {
                Self::growing_q(c_q, alpha, self.rho / scale, c_x, n, self.horizon)
            }
        }
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    /// Node `x_{i - M}`.
    pub fn x(&self, i: usize) -> T {
        self.nodes[i]
    }

    /// Number of spatial nodes, `2M + 1`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `M`.
    pub fn half_len(&self) -> usize {
        self.nodes.len() / 2
    }

    /// `N`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn q(&self) -> T {
        self.q
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn mode(&self) -> GridMode<T> {
        self.mode
    }

    /// Time of timestep `n`; the last level is exactly `T`.
    pub fn time(&self, n: usize) -> T {
        if n == self.steps {
            self.horizon
        } else {
            T::from_count(n) * self.dt
        }
    }

    /// True for the two end nodes `x_{±M}`.
    pub fn is_boundary(&self, i: usize) -> bool {
        i == 0 || i + 1 == self.nodes.len()
    }

    /// Signed index `j = i - M`.
    pub fn signed_index(&self, i: usize) -> i64 {
        i as i64 - self.half_len() as i64
    }

    /// `x_{i+1} - x_i`.
    pub fn spacing(&self, i: usize) -> T {
        self.nodes[i + 1] - self.nodes[i]
    }

    /// Width of the leftmost cell (equal to the rightmost one).
    pub fn boundary_cell(&self) -> T {
        self.spacing(0)
    }

    pub fn min_spacing(&self) -> T {
        (0..self.len() - 1)
            .map(|i| self.spacing(i))
            .fold(T::infinity(), T::min)
    }

    pub fn max_spacing(&self) -> T {
        (0..self.len() - 1)
            .map(|i| self.spacing(i))
            .fold(T::zero(), T::max)
    }

    pub fn summary(&self) -> GridSummary {
        GridSummary {
            mode: self.mode.name(),
            rho: self.rho.as_f64(),
            dt: self.dt.as_f64(),
            q: self.q.as_f64(),
            half_nodes: self.half_len(),
            steps: self.steps,
            min_spacing: self.min_spacing().as_f64(),
            max_spacing: self.max_spacing().as_f64(),
        }
    }
}

/// Width `c_b * rho^(3/4)` of the boundary cells of a refined grid.
pub fn boundary_cell_width<T: Real>(rho: T, c_b: T) -> T {
    c_b * rho.powf(T::lit(BOUNDARY_CELL_EXPONENT))
}

/// Smallest `N` with `T / N <= step`.
pub fn steps_for<T: Real>(horizon: T, step: T) -> Result<usize> {
    positive(horizon, "T")?;
    positive(step, "time step")?;
    let ratio = horizon / step;
    // Guard against `ceil` jumping past an exact ratio because of rounding.
    let n = (ratio - T::lit(1e-9)).ceil();
    Ok(n.to_usize().unwrap_or(1).max(1))
}

/// Largest `rho` below which a boundary-refined grid with `dt <= c_t * rho`
/// has no foot point `x + mu * dt` leaving `[-Q, Q]` from an interior node:
/// `c_b * rho^(3/4) >= mu_max * c_t * rho`.
pub fn overstep_threshold<T: Real>(c_b: T, mu_max: T, c_t: T) -> T {
    if mu_max <= T::zero() {
        return T::infinity();
    }
    (c_b / (mu_max * c_t)).powi(4)
}

//! Discrete spatial operators: finite difference stencils, monotone linear
//! interpolation, control-set sampling, the discrete generator and the
//! discrete intervention operator.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::problem::ProblemSpec;
use crate::scalar::Real;

/// Values of one time level on the spatial nodes, indexed left to right.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridFunction<T>(Vec<T>);

impl<T: Real> GridFunction<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn constant(grid: &SpaceTimeGrid<T>, value: T) -> Self {
        Self(vec![value; grid.len()])
    }

    pub fn from_fn(grid: &SpaceTimeGrid<T>, f: impl Fn(T) -> T) -> Self {
        Self(grid.nodes().iter().map(|&x| f(x)).collect())
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn max_value(&self) -> T {
        self.0.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.0.iter().copied().fold(T::infinity(), T::min)
    }
}

impl<T> Deref for GridFunction<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for GridFunction<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

impl<T> From<Vec<T>> for GridFunction<T> {
    fn from(values: Vec<T>) -> Self {
        Self(values)
    }
}

fn check_index<T: Real>(grid: &SpaceTimeGrid<T>, i: usize) -> Result<()> {
    if i < grid.nodes().len() {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange {
            index: i,
            len: grid.nodes().len(),
        })
    }
}

/// Coefficients `(lower, center, upper)` of a three-point row so that the
/// row applied to `u` is `lower*u[i-1] + center*u[i] + upper*u[i+1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreePoint<T> {
    pub lower: T,
    pub center: T,
    pub upper: T,
}

impl<T: Real> ThreePoint<T> {
    pub fn zero() -> Self {
        Self {
            lower: T::zero(),
            center: T::zero(),
            upper: T::zero(),
        }
    }

    fn scale(self, s: T) -> Self {
        Self {
            lower: self.lower * s,
            center: self.center * s,
            upper: self.upper * s,
        }
    }

    fn add(self, o: Self) -> Self {
        Self {
            lower: self.lower + o.lower,
            center: self.center + o.center,
            upper: self.upper + o.upper,
        }
    }

    /// Applies the row at interior node `i`.
    pub fn apply(&self, u: &[T], i: usize) -> T {
        self.lower * u[i - 1] + self.center * u[i] + self.upper * u[i + 1]
    }
}

/// Divided-difference second derivative row; zero at the end nodes.
pub fn second_difference_row<T: Real>(grid: &SpaceTimeGrid<T>, i: usize) -> ThreePoint<T> {
    if grid.is_boundary(i) {
        return ThreePoint::zero();
    }
    let hm = grid.spacing(i - 1);
    let hp = grid.spacing(i);
    let two = T::lit(2.0);
    let lower = two / (hm * (hm + hp));
    let upper = two / (hp * (hm + hp));
    ThreePoint {
        lower,
        center: -(lower + upper),
        upper,
    }
}

/// Upwind first derivative row (forward for `drift >= 0`); zero at the ends.
pub fn upwind_row<T: Real>(grid: &SpaceTimeGrid<T>, i: usize, drift: T) -> ThreePoint<T> {
    if grid.is_boundary(i) {
        return ThreePoint::zero();
    }
    if drift >= T::zero() {
        let h = grid.spacing(i);
        ThreePoint {
            lower: T::zero(),
            center: -h.recip(),
            upper: h.recip(),
        }
    } else {
        let h = grid.spacing(i - 1);
        ThreePoint {
            lower: -h.recip(),
            center: h.recip(),
            upper: T::zero(),
        }
    }
}

/// Row of `L_b = mu(x, b) D_b + sigma(x, b)^2 / 2 D^2` at node `i`.
pub fn generator_row<T: Real>(
    grid: &SpaceTimeGrid<T>,
    i: usize,
    b: T,
    problem: &ProblemSpec<T>,
) -> ThreePoint<T> {
    if grid.is_boundary(i) {
        return ThreePoint::zero();
    }
    let x = grid.x(i);
    let mu = problem.mu(x, b);
    let sigma = problem.sigma(x, b);
    upwind_row(grid, i, mu)
        .scale(mu)
        .add(second_difference_row(grid, i).scale(T::lit(0.5) * sigma * sigma))
}

/// Three-point second difference at node `i`, zero at `x_{±M}`.
pub fn second_difference<T: Real>(u: &[T], grid: &SpaceTimeGrid<T>, i: usize) -> Result<T> {
    check_index(grid, i)?;
    if grid.is_boundary(i) {
        return Ok(T::zero());
    }
    Ok(second_difference_row(grid, i).apply(u, i))
}

/// Upwind first difference at node `i`: forward if `drift >= 0`, backward
/// otherwise, zero at `x_{±M}`.
pub fn upwind_first_difference<T: Real>(
    u: &[T],
    grid: &SpaceTimeGrid<T>,
    i: usize,
    drift: T,
) -> Result<T> {
    check_index(grid, i)?;
    if grid.is_boundary(i) {
        return Ok(T::zero());
    }
    Ok(if drift >= T::zero() {
        (u[i + 1] - u[i]) / grid.spacing(i)
    } else {
        (u[i] - u[i - 1]) / grid.spacing(i - 1)
    })
}

/// `(L_b u)_i`.
pub fn apply_generator<T: Real>(
    u: &[T],
    grid: &SpaceTimeGrid<T>,
    i: usize,
    b: T,
    problem: &ProblemSpec<T>,
) -> Result<T> {
    check_index(grid, i)?;
    if grid.is_boundary(i) {
        return Ok(T::zero());
    }
    let x = grid.x(i);
    let mu = problem.mu(x, b);
    let sigma = problem.sigma(x, b);
    Ok(mu * upwind_first_difference(u, grid, i, mu)?
        + T::lit(0.5) * sigma * sigma * second_difference(u, grid, i)?)
}

/// Where a query point fell relative to `[x_{-M}, x_M]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Inside,
    ClampedLeft,
    ClampedRight,
}

/// Interpolation weights: the value is `(1 - alpha) * u[lo] + alpha * u[hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpStencil<T> {
    pub lo: usize,
    pub hi: usize,
    pub alpha: T,
    pub placement: Placement,
}

impl<T: Real> InterpStencil<T> {
    pub fn apply(&self, u: &[T]) -> T {
        self.alpha * u[self.hi] + (T::one() - self.alpha) * u[self.lo]
    }

    pub fn is_clamped(&self) -> bool {
        self.placement != Placement::Inside
    }
}

/// Locates `x` on the grid for monotone linear interpolation. Points at or
/// beyond the end nodes take the end value.
pub fn interp_stencil<T: Real>(grid: &SpaceTimeGrid<T>, x: T) -> InterpStencil<T> {
    let nodes = grid.nodes();
    let last = nodes.len() - 1;
    if x <= nodes[0] {
        let placement = if x < nodes[0] {
            Placement::ClampedLeft
        } else {
            Placement::Inside
        };
        return InterpStencil {
            lo: 0,
            hi: 0,
            alpha: T::zero(),
            placement,
        };
    }
    if x >= nodes[last] {
        let placement = if x > nodes[last] {
            Placement::ClampedRight
        } else {
            Placement::Inside
        };
        return InterpStencil {
            lo: last,
            hi: last,
            alpha: T::zero(),
            placement,
        };
    }
    // k with x_k <= x < x_{k+1}
    let k = nodes.partition_point(|&node| node <= x) - 1;
    let alpha = (x - nodes[k]) / (nodes[k + 1] - nodes[k]);
    InterpStencil {
        lo: k,
        hi: k + 1,
        alpha,
        placement: Placement::Inside,
    }
}

/// Monotone linear interpolant of the nodal values `u` at `x`.
pub fn interp<T: Real>(u: &[T], grid: &SpaceTimeGrid<T>, x: T) -> T {
    interp_stencil(grid, x).apply(u)
}

/// `count = ceil(width / rho) + 1` equally spaced points covering `[lo, hi]`
/// including both endpoints; a single point for a degenerate interval and
/// nothing for an empty one.
pub fn sample_interval<T: Real>(lo: T, hi: T, rho: T) -> Vec<T> {
    if !(lo <= hi) {
        return Vec::new();
    }
    if lo == hi {
        return vec![lo];
    }
    let cells = ((hi - lo) / rho - T::lit(1e-9))
        .ceil()
        .to_usize()
        .unwrap_or(1)
        .max(1);
    let width = hi - lo;
    let mut points: Vec<T> = (0..cells)
        .map(|k| lo + width * T::from_count(k) / T::from_count(cells))
        .collect();
    points.push(hi);
    points
}

/// Finite control set `B_rho` and the rule generating `Z_rho(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteControls<T> {
    rho: T,
    controls: Vec<T>,
}

impl<T: Real> DiscreteControls<T> {
    /// Samples the control interval at spacing at most `rho`.
    pub fn new(problem: &ProblemSpec<T>, rho: T) -> Result<Self> {
        if !(rho > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "rho must be positive, got {rho}"
            )));
        }
        let (lo, hi) = problem.b_bounds();
        let controls = sample_interval(lo, hi, rho);
        if controls.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "empty control interval [{lo}, {hi}]"
            )));
        }
        Ok(Self { rho, controls })
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    /// `B_rho`, increasing.
    pub fn controls(&self) -> &[T] {
        &self.controls
    }

    /// `Z_rho(t, x)`, increasing; empty when `Z(t, x)` is empty.
    pub fn impulses(&self, problem: &ProblemSpec<T>, t: T, x: T) -> Vec<T> {
        let (lo, hi) = problem.z_bounds(t, x);
        sample_interval(lo, hi, self.rho)
    }

    /// `Z_rho(t, x_i)` for every node, computed once per time level.
    pub fn impulse_table(
        &self,
        problem: &ProblemSpec<T>,
        grid: &SpaceTimeGrid<T>,
        t: T,
    ) -> Result<ImpulseTable<T>> {
        let sets = grid
            .nodes()
            .iter()
            .map(|&x| {
                let set = self.impulses(problem, t, x);
                if set.is_empty() {
                    Err(Error::EmptyImpulseSet {
                        t: t.as_f64(),
                        x: x.as_f64(),
                    })
                } else {
                    Ok(set)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ImpulseTable { t, sets })
    }
}

/// Per-node impulse sets at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseTable<T> {
    t: T,
    sets: Vec<Vec<T>>,
}

impl<T: Real> ImpulseTable<T> {
    pub fn time(&self) -> T {
        self.t
    }

    pub fn at(&self, i: usize) -> &[T] {
        &self.sets[i]
    }
}

/// Result of the discrete intervention operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervention<T> {
    /// `(M u)_i`.
    pub values: GridFunction<T>,
    /// Maximizing impulse at each node (smallest one on ties).
    pub argmax: Vec<T>,
    /// Interpolation stencil of the post-impulse state for the maximizer.
    pub stencils: Vec<InterpStencil<T>>,
}

/// `(M u)_i = max_{z in Z_rho(t, x_i)} interp(u, x_i + Gamma(t, x_i, z)) + K(t, x_i, z)`.
pub fn apply_intervention<T: Real>(
    u: &[T],
    grid: &SpaceTimeGrid<T>,
    problem: &ProblemSpec<T>,
    impulses: &ImpulseTable<T>,
) -> Result<Intervention<T>> {
    let t = impulses.time();
    let n = grid.len();
    let mut values = Vec::with_capacity(n);
    let mut argmax = Vec::with_capacity(n);
    let mut stencils = Vec::with_capacity(n);
    for (i, &x) in grid.nodes().iter().enumerate() {
        let mut best: Option<(T, T, InterpStencil<T>)> = None;
        for &z in impulses.at(i) {
            let stencil = interp_stencil(grid, x + problem.gamma(t, x, z));
            let value = stencil.apply(u) + problem.k(t, x, z);
            if best.is_none_or(|(b, _, _)| value > b) {
                best = Some((value, z, stencil));
            }
        }
        let (value, z, stencil) = best.ok_or(Error::EmptyImpulseSet {
            t: t.as_f64(),
            x: x.as_f64(),
        })?;
        values.push(value);
        argmax.push(z);
        stencils.push(stencil);
    }
    Ok(Intervention {
        values: values.into(),
        argmax,
        stencils,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Horizon, ProblemSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid3() -> SpaceTimeGrid<f64> {
        SpaceTimeGrid::uniform(1.0, 1, 1, 1.0).unwrap()
    }

    /// Grid with nodes {0, 1, 2}: a shifted copy of the `Q = 1` grid.
    fn shifted_nodes_problem() -> ProblemSpec<f64> {
        ProblemSpec::new("jump", Horizon::Finite { t_final: 1.0 }).with_impulses(
            |_, x, z| z - x,
            |_, _, _| -2.0,
            |_, _| (-1.0, 1.0),
        )
    }

    #[test]
    fn second_difference_examples() {
        let g = grid3();
        let u = [1.0, 2.0, 4.0];
        assert_eq!(second_difference(&u, &g, 1).unwrap(), 1.0);
        assert_eq!(second_difference(&u, &g, 0).unwrap(), 0.0);
        assert_eq!(second_difference(&u, &g, 2).unwrap(), 0.0);
        assert!(matches!(
            second_difference(&u, &g, 3),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn second_difference_affine_and_quadratic() {
        let g = SpaceTimeGrid::uniform(2.0, 8, 1, 1.0).unwrap();
        let affine: Vec<f64> = g.nodes().iter().map(|x| 0.3 - 1.7 * x).collect();
        let quad: Vec<f64> = g.nodes().iter().map(|x| 2.5 * x * x).collect();
        for i in 1..g.len() - 1 {
            assert_abs_diff_eq!(
                second_difference(&affine, &g, i).unwrap(),
                0.0,
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                second_difference(&quad, &g, i).unwrap(),
                5.0,
                epsilon = 1e-11
            );
        }
        let refined = SpaceTimeGrid::boundary_refined(2.0, 0.1, 1.0, 1, 1.0).unwrap();
        let affine: Vec<f64> = refined.nodes().iter().map(|x| 0.3 - 1.7 * x).collect();
        let quad: Vec<f64> = refined.nodes().iter().map(|x| 2.5 * x * x).collect();
        for i in 1..refined.len() - 1 {
            assert_abs_diff_eq!(
                second_difference(&affine, &refined, i).unwrap(),
                0.0,
                epsilon = 1e-10
            );
            // The divided difference is exact for quadratics on any spacing.
            assert_abs_diff_eq!(
                second_difference(&quad, &refined, i).unwrap(),
                5.0,
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn upwind_examples() {
        let g = grid3();
        let u = [0.0, 1.0, 3.0];
        assert_eq!(upwind_first_difference(&u, &g, 1, 1.0).unwrap(), 2.0);
        assert_eq!(upwind_first_difference(&u, &g, 1, -1.0).unwrap(), 1.0);
        assert_eq!(upwind_first_difference(&u, &g, 2, 1.0).unwrap(), 0.0);
        assert_eq!(upwind_first_difference(&u, &g, 0, -1.0).unwrap(), 0.0);
    }

    #[test]
    fn interp_examples() {
        // Nodes {-1, 0, 1} with the query shifted by -1 give the {0, 1, 2} example.
        let g = grid3();
        let u = [0.0, 10.0, 20.0];
        assert_eq!(interp(&u, &g, -0.5), 5.0);
        assert_eq!(interp(&u, &g, 4.0), 20.0);
        assert_eq!(interp(&u, &g, 0.0), 10.0);
        assert_eq!(interp(&u, &g, -7.0), 0.0);
        assert_eq!(interp(&u, &g, 1.0), 20.0);
        assert_eq!(interp_stencil(&g, 4.0).placement, Placement::ClampedRight);
        assert_eq!(interp_stencil(&g, 1.0).placement, Placement::Inside);
    }

    #[test]
    fn generator_examples() {
        let g = grid3();
        let heat = ProblemSpec::new("d", Horizon::Finite { t_final: 1.0 })
            .with_diffusion(|_, _| 1.0, true);
        assert_eq!(
            apply_generator(&[1.0, 2.0, 4.0], &g, 1, 0.0, &heat).unwrap(),
            0.5
        );
        assert_eq!(
            apply_generator(&[1.0, 2.0, 4.0], &g, 0, 0.0, &heat).unwrap(),
            0.0
        );
        let drift = ProblemSpec::new("d", Horizon::Finite { t_final: 1.0 })
            .with_drift(|x, b| b + x)
            .with_diffusion(|_, b| 0.3 + b * b, false);
        for b in [-1.0, 0.0, 2.0] {
            assert_eq!(
                apply_generator(&[3.0, 3.0, 3.0], &g, 1, b, &drift).unwrap(),
                0.0
            );
            let row = generator_row(&g, 1, b, &drift);
            let u = [0.5, -1.0, 2.0];
            assert_abs_diff_eq!(
                row.apply(&u, 1),
                apply_generator(&u, &g, 1, b, &drift).unwrap(),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn control_sampling() {
        assert_eq!(sample_interval(-1.0, 1.0, 1.0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(sample_interval(0.0, 0.0, 0.1), vec![0.0]);
        assert_eq!(
            sample_interval(-1.0, 1.0, 0.5),
            vec![-1.0, -0.5, 0.0, 0.5, 1.0]
        );
        assert!(sample_interval(1.0, 0.0, 0.5).is_empty());
        let pts = sample_interval(-1.0, 1.0, 0.1);
        assert_eq!(pts.len(), 21);
        assert_eq!(pts[20], 1.0);
    }

    #[test]
    fn intervention_brute_force_example() {
        let g = grid3();
        let p = shifted_nodes_problem();
        let u = [0.0, 10.0, 20.0];
        // Z_rho = {-1, 1}: the endpoints of the grid, i.e. {0, 2} on the shifted nodes.
        let controls = DiscreteControls::new(&p, 2.0).unwrap();
        let table = controls.impulse_table(&p, &g, 0.0).unwrap();
        assert_eq!(table.at(1), &[-1.0, 1.0]);
        let m = apply_intervention(&u, &g, &p, &table).unwrap();
        assert_eq!(m.values[1], 18.0);
        assert_eq!(m.argmax[1], 1.0);
    }

    #[test]
    fn intervention_of_constant() {
        let g = SpaceTimeGrid::uniform(2.0, 4, 1, 1.0).unwrap();
        let p = ProblemSpec::new("c", Horizon::Finite { t_final: 1.0 }).with_impulses(
            |_, x, z| 3.0 * z - x,
            |_, _, _| -1.0,
            |_, _| (-2.0, 2.0),
        );
        let controls = DiscreteControls::new(&p, 0.5).unwrap();
        let table = controls.impulse_table(&p, &g, 0.0).unwrap();
        let m = apply_intervention(&vec![4.0; g.len()], &g, &p, &table).unwrap();
        assert!(m.values.iter().all(|&v| v == 3.0));
        // Every impulse ties, so the smallest one wins.
        assert!(m.argmax.iter().all(|&z| z == -2.0));
    }

    #[test]
    fn empty_impulse_set_is_rejected() {
        let g = grid3();
        let p = ProblemSpec::new("e", Horizon::Finite { t_final: 1.0 }).with_impulses(
            |_, _, z| z,
            |_, _, _| -1.0,
            |_, x| if x > 0.5 { (1.0, 0.0) } else { (0.0, 1.0) },
        );
        let controls = DiscreteControls::new(&p, 0.5).unwrap();
        assert!(matches!(
            controls.impulse_table(&p, &g, 0.0),
            Err(Error::EmptyImpulseSet { .. })
        ));
    }

    fn brute_force_intervention(
        u: &[f64],
        nodes: &[f64],
        impulses: &[Vec<f64>],
        jump: impl Fn(f64, f64) -> f64,
        cost: impl Fn(f64, f64) -> f64,
    ) -> Vec<f64> {
        let lin = |y: f64| {
            if y <= nodes[0] {
                return u[0];
            }
            let last = nodes.len() - 1;
            if y >= nodes[last] {
                return u[last];
            }
            let mut k = 0;
            while !(nodes[k] <= y && y < nodes[k + 1]) {
                k += 1;
            }
            let a = (y - nodes[k]) / (nodes[k + 1] - nodes[k]);
            a * u[k + 1] + (1.0 - a) * u[k]
        };
        nodes
            .iter()
            .zip(impulses)
            .map(|(&x, zs)| {
                zs.iter()
                    .map(|&z| lin(x + jump(x, z)) + cost(x, z))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn interp_monotone_and_affine_exact(
            base in prop::collection::vec(-5.0f64..5.0, 9),
            bump in prop::collection::vec(0.0f64..3.0, 9),
            x in -3.0f64..3.0,
            slope in -2.0f64..2.0,
        ) {
            let g = SpaceTimeGrid::uniform(2.0, 4, 1, 1.0).unwrap();
            let upper: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
            prop_assert!(interp(&base, &g, x) <= interp(&upper, &g, x));
            let affine: Vec<f64> = g.nodes().iter().map(|n| 1.0 + slope * n).collect();
            if x.abs() <= 2.0 {
                prop_assert!((interp(&affine, &g, x) - (1.0 + slope * x)).abs() < 1e-12);
            }
        }

        #[test]
        fn intervention_matches_brute_force_and_is_monotone(
            base in prop::collection::vec(-5.0f64..5.0, 11),
            bump in prop::collection::vec(0.0f64..3.0, 11),
            shift in -4.0f64..4.0,
            scale in 0.2f64..2.0,
            cost in 0.1f64..2.0,
        ) {
            let g = SpaceTimeGrid::uniform(2.5, 5, 1, 1.0).unwrap();
            let p = ProblemSpec::new("r", Horizon::Finite { t_final: 1.0 })
                .with_impulses(
                    move |_, x, z| scale * z - 0.3 * x,
                    move |_, x, z| -cost - 0.1 * (z - x).abs(),
                    |_, x| (-1.0 + 0.1 * x, 1.5),
                );
            let controls = DiscreteControls::new(&p, 0.3).unwrap();
            let table = controls.impulse_table(&p, &g, 0.0).unwrap();
            let sets: Vec<Vec<f64>> = (0..g.len()).map(|i| table.at(i).to_vec()).collect();
            let m = apply_intervention(&base, &g, &p, &table).unwrap();
            let oracle = brute_force_intervention(
                &base, g.nodes(), &sets,
                |x, z| scale * z - 0.3 * x,
                |x, z| -cost - 0.1 * (z - x).abs(),
            );
            for (a, b) in m.values.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let upper: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
            let mu = apply_intervention(&upper, &g, &p, &table).unwrap();
            for (lo, hi) in m.values.iter().zip(mu.values.iter()) {
                prop_assert!(lo <= hi);
            }
            // Shift covariance and the sup K bound.
            let shifted: Vec<f64> = base.iter().map(|v| v + shift).collect();
            let ms = apply_intervention(&shifted, &g, &p, &table).unwrap();
            let umax = base.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (a, b) in m.values.iter().zip(ms.values.iter()) {
                prop_assert!((a + shift - b).abs() < 1e-12);
                prop_assert!(*a <= umax - cost + 1e-12);
            }
        }
    }
}

//! The implicit Euler step `(I - tau L^h_i) v_i = v_{i-1} + tau f_i +
//! sum_rho (M^{h,rho}_{i-1} v_{i-1} + g^rho_{i-1}) xi^rho_i` and the full
//! space-time scheme.

use crate::coefficient::Coefficient;
use crate::error::{invalid, Error, Result, SolveFailure, SolveFailureKind};
use crate::grid::{GridField, TorusGrid};
use crate::linalg::{bicgstab, folded_ordering, BandedLu, CsrMatrix, IterativeSettings};
use crate::noise::BrownianIncrements;
use crate::operator::{apply_m, DiscreteOperator};
use crate::problem::{DifferenceScheme, DifferentialProblem};

/// Largest system solved by the banded direct factorization.
pub const DIRECT_LIMIT: usize = 4096;
/// Relative residual target of the iterative solver.
pub const ITERATIVE_RTOL: f64 = 1e-11;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrajectoryMeta {
    pub problem: String,
    pub scheme: String,
    pub seed: Option<u64>,
}

/// Fields `v_0, ..., v_n` on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TorusGrid,
    tau: f64,
    fields: Vec<GridField>,
    meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(grid: TorusGrid, tau: f64, fields: Vec<GridField>, meta: TrajectoryMeta) -> Result<Self> {
        if fields.is_empty() {
            return Err(invalid("a trajectory needs at least the initial field"));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(invalid(format!("tau must be positive, got {tau}")));
        }
        if fields.iter().any(|f| f.grid() != &grid) {
            return Err(Error::GridMismatch("trajectory fields live on different grids".into()));
        }
        Ok(Self {
            grid,
            tau,
            fields,
            meta,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Number of time steps `n` (one less than the number of fields).
    pub fn steps(&self) -> usize {
        self.fields.len() - 1
    }

    pub fn fields(&self) -> &[GridField] {
        &self.fields
    }

    pub fn field(&self, i: usize) -> &GridField {
        &self.fields[i]
    }

    pub fn last(&self) -> &GridField {
        self.fields.last().expect("nonempty")
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.tau
    }

    pub fn meta(&self) -> &TrajectoryMeta {
        &self.meta
    }

    pub fn with_meta(mut self, meta: TrajectoryMeta) -> Self {
        self.meta = meta;
        self
    }

    /// `max_i sup_x |v_i|`.
    pub fn max_sup(&self) -> f64 {
        self.fields.iter().map(GridField::sup_norm).fold(0.0, f64::max)
    }

    /// `max_i l2h(v_i)`.
    pub fn max_l2h(&self) -> f64 {
        self.fields.iter().map(GridField::l2h_norm).fold(0.0, f64::max)
    }

    /// Applies `op` to every field, keeping `tau` and the metadata.
    pub fn map(&self, op: impl Fn(&GridField) -> Result<GridField>) -> Result<Self> {
        let fields = self.fields.iter().map(op).collect::<Result<Vec<_>>>()?;
        let grid = fields[0].grid().clone();
        Self::new(grid, self.tau, fields, self.meta.clone())
    }

    /// Sub-samples every field onto the grid coarser by `factor`.
    pub fn restrict(&self, factor: usize) -> Result<Self> {
        self.map(|f| f.subsample(factor))
    }
}

/// How `(I - tau L)` is inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMode {
    /// Direct up to [`DIRECT_LIMIT`] unknowns, iterative beyond.
    #[default]
    Auto,
    Direct,
    Iterative,
}

#[derive(Debug, Clone)]
enum Inverse {
    Identity,
    Direct(BandedLu),
    Iterative,
}

/// The assembled operator `I - tau L^h_i` together with its solver.
#[derive(Debug, Clone)]
pub struct ImplicitOperator {
    grid: TorusGrid,
    tau: f64,
    matrix: Option<CsrMatrix>,
    inverse: Inverse,
}

impl ImplicitOperator {
    /// `I - tau L_i` for an already built `L`.
    pub fn from_operator(l: &DiscreteOperator, tau: f64, i: usize, mode: SolverMode) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(invalid(format!("tau must be nonnegative, got {tau}")));
        }
        let grid = l.grid().clone();
        if tau == 0.0 || l.is_zero() {
            return Ok(Self {
                grid,
                tau,
                matrix: None,
                inverse: Inverse::Identity,
            });
        }
        let matrix = l.assemble(i, -tau, 1.0);
        let direct = match mode {
            SolverMode::Auto => grid.len() <= DIRECT_LIMIT,
            SolverMode::Direct => true,
            SolverMode::Iterative => false,
        };
        let inverse = if direct {
            Inverse::Direct(BandedLu::factor(&matrix, folded_ordering(grid.points())).map_err(|e| e.at_step(i))?)
        } else {
            Inverse::Iterative
        };
        Ok(Self {
            grid,
            tau,
            matrix: Some(matrix),
            inverse,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.inverse, Inverse::Direct(_))
    }

    /// `(I - tau L_i) x`.
    pub fn apply(&self, x: &GridField) -> Result<GridField> {
        self.check(x)?;
        match &self.matrix {
            None => Ok(x.clone()),
            Some(m) => {
                let mut y = vec![0.0; x.values().len()];
                m.matvec(x.values(), &mut y);
                Ok(GridField::from_parts(self.grid.clone(), y))
            }
        }
    }

    /// Solves `(I - tau L_i) x = rhs`.
    pub fn solve(&self, rhs: &GridField) -> Result<GridField> {
        self.check(rhs)?;
        let x = match (&self.inverse, &self.matrix) {
            (Inverse::Identity, _) => rhs.values().to_vec(),
            (Inverse::Direct(lu), _) => lu.solve(rhs.values()),
            (Inverse::Iterative, Some(m)) => {
                let settings = IterativeSettings {
                    rel_tol: ITERATIVE_RTOL,
                    max_iter: 10 * m.dim(),
                };
                bicgstab(m, rhs.values(), rhs.values().to_vec(), settings)?.0
            }
            (Inverse::Iterative, None) => unreachable!("iterative mode always stores the matrix"),
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolveFailure::new(SolveFailureKind::NonFinite).into());
        }
        Ok(GridField::from_parts(self.grid.clone(), x))
    }

    fn check(&self, f: &GridField) -> Result<()> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch("field does not live on the operator grid".into()));
        }
        Ok(())
    }
}

/// `I - tau L^h_i` for the scheme on `grid`; direct below [`DIRECT_LIMIT`]
/// unknowns, iterative above.
pub fn assemble_implicit_operator(
    scheme: &DifferenceScheme,
    grid: &TorusGrid,
    tau: f64,
    h: f64,
    i: usize,
) -> Result<ImplicitOperator> {
    assemble_implicit_operator_with(scheme, grid, tau, h, i, SolverMode::Auto)
}

pub fn assemble_implicit_operator_with(
    scheme: &DifferenceScheme,
    grid: &TorusGrid,
    tau: f64,
    h: f64,
    i: usize,
    mode: SolverMode,
) -> Result<ImplicitOperator> {
    let l = DiscreteOperator::l_operator(scheme, grid, h)?;
    ImplicitOperator::from_operator(&l, tau, i, mode)
}

/// One step of the space-time scheme from `v_prev = v_{i-1}` to `v_i`.
///
/// `op` must be `I - tau L^h_i`; the noise operators and `g` are taken at
/// `i - 1`.
#[allow(clippy::too_many_arguments)]
pub fn implicit_step(
    op: &ImplicitOperator,
    v_prev: &GridField,
    f_i: &GridField,
    g_prev: &[GridField],
    xi: &[f64],
    scheme: &DifferenceScheme,
    h: f64,
    i: usize,
) -> Result<GridField> {
    if i == 0 {
        return Err(invalid("steps are numbered from 1"));
    }
    if g_prev.len() != scheme.drivers() || xi.len() != scheme.drivers() {
        return Err(invalid(format!(
            "expected {} noise terms, got {} free terms and {} increments",
            scheme.drivers(),
            g_prev.len(),
            xi.len()
        )));
    }
    let mut rhs = v_prev.clone();
    rhs.axpy(op.tau(), f_i);
    for (rho, (g, x)) in g_prev.iter().zip(xi).enumerate() {
        let m = apply_m(scheme, v_prev, h, rho, i - 1)?;
        rhs.axpy(*x, &m);
        rhs.axpy(*x, g);
    }
    op.solve(&rhs).map_err(|e| with_step(e, i))
}

pub(crate) fn with_step(e: Error, i: usize) -> Error {
    match e {
        Error::Solve(f) if f.step.is_none() => Error::Solve(f.at_step(i)),
        other => other,
    }
}

/// A realization of `(I - tau L_i)^{-1}` and `M^rho_i` on a fixed grid.
pub(crate) trait Realization {
    fn solve(&mut self, i: usize, rhs: &GridField) -> Result<GridField>;
    fn noise(&self, rho: usize, i: usize, phi: &GridField) -> Result<GridField>;
}

/// Iterates `v_i = R_i^{-1}(v_{i-1} + sum_rho M^rho_{i-1} v_{i-1} xi^rho_i + extra_i)`.
pub(crate) fn run_recursion<R: Realization>(
    real: &mut R,
    v0: GridField,
    increments: &BrownianIncrements,
    mut extra: impl FnMut(usize, &[GridField]) -> Result<Option<GridField>>,
) -> Result<Vec<GridField>> {
    let mut fields = Vec::with_capacity(increments.steps() + 1);
    fields.push(v0);
    for i in 1..=increments.steps() {
        let prev = &fields[i - 1];
        let mut rhs = prev.clone();
        for (rho, x) in increments.step(i).iter().enumerate() {
            if *x != 0.0 {
                rhs.axpy(*x, &real.noise(rho, i - 1, prev)?);
            }
        }
        if let Some(e) = extra(i, &fields)? {
            rhs.axpy(1.0, &e);
        }
        let v = real.solve(i, &rhs).map_err(|e| with_step(e, i))?;
        fields.push(v);
    }
    Ok(fields)
}

/// Finite-difference realization of a scheme on one grid. Caches the
/// factorization when the scheme does not depend on time.
pub(crate) struct SchemeRealization {
    tau: f64,
    mode: SolverMode,
    l: DiscreteOperator,
    m: Vec<DiscreteOperator>,
    cached: Option<ImplicitOperator>,
}

impl SchemeRealization {
    pub(crate) fn new(scheme: &DifferenceScheme, grid: &TorusGrid, h: f64, tau: f64, mode: SolverMode) -> Result<Self> {
        let l = DiscreteOperator::l_operator(scheme, grid, h)?;
        let m = (0..scheme.drivers())
            .map(|rho| DiscreteOperator::m_operator(scheme, grid, h, rho))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tau,
            mode,
            l,
            m,
            cached: None,
        })
    }
}

impl Realization for SchemeRealization {
    fn solve(&mut self, i: usize, rhs: &GridField) -> Result<GridField> {
        if self.l.is_time_independent() {
            if self.cached.is_none() {
                self.cached = Some(ImplicitOperator::from_operator(&self.l, self.tau, i, self.mode)?);
            }
            self.cached.as_ref().expect("just set").solve(rhs)
        } else {
            ImplicitOperator::from_operator(&self.l, self.tau, i, self.mode)?.solve(rhs)
        }
    }

    fn noise(&self, rho: usize, i: usize, phi: &GridField) -> Result<GridField> {
        self.m[rho].apply(phi, i)
    }
}

/// Checks that `increments` match `n` steps of size `T / n` and the driver
/// count of `problem`.
pub(crate) fn check_increments(problem: &DifferentialProblem, n: usize, increments: &BrownianIncrements) -> Result<f64> {
    let tau = problem.horizon() / n as f64;
    if increments.steps() != n {
        return Err(invalid(format!("increments cover {} steps, expected {n}", increments.steps())));
    }
    if (increments.tau() - tau).abs() > 1e-12 * tau {
        return Err(invalid(format!(
            "increments use tau = {}, expected T / n = {tau}",
            increments.tau()
        )));
    }
    if increments.drivers() != problem.drivers() {
        return Err(invalid(format!(
            "increments have {} drivers, the problem has {}",
            increments.drivers(),
            problem.drivers()
        )));
    }
    Ok(tau)
}

/// `tau f_i + sum_rho g^rho_{i-1} xi^rho_i` sampled on `grid`, or `None` when
/// the free terms vanish identically.
pub(crate) fn free_terms(
    problem: &DifferentialProblem,
    grid: &TorusGrid,
    tau: f64,
    increments: &BrownianIncrements,
    i: usize,
) -> Option<GridField> {
    let mut out: Option<GridField> = None;
    let mut add = |c: &Coefficient, step: usize, weight: f64| {
        if c.is_zero() || weight == 0.0 {
            return;
        }
        let s = c.sample(grid, step);
        let acc = out.get_or_insert_with(|| GridField::zeros(grid));
        for (idx, v) in acc.values_mut().iter_mut().enumerate() {
            *v += weight * s.at(idx);
        }
    };
    add(problem.forcing(), i, tau);
    for (rho, x) in increments.step(i).iter().enumerate() {
        add(problem.noise_forcing(rho), i - 1, *x);
    }
    out
}

pub(crate) fn scheme_label(scheme: &DifferenceScheme) -> &'static str {
    if scheme.is_symmetric() {
        "symmetric"
    } else {
        "one-sided"
    }
}

/// Runs the space-time scheme for `n` steps on `grid` with mesh `grid.h()`.
pub fn run_space_time_scheme(
    problem: &DifferentialProblem,
    scheme: &DifferenceScheme,
    grid: &TorusGrid,
    n: usize,
    increments: &BrownianIncrements,
) -> Result<Trajectory> {
    run_space_time_scheme_with(problem, scheme, grid, n, increments, SolverMode::Auto)
}

pub fn run_space_time_scheme_with(
    problem: &DifferentialProblem,
    scheme: &DifferenceScheme,
    grid: &TorusGrid,
    n: usize,
    increments: &BrownianIncrements,
    mode: SolverMode,
) -> Result<Trajectory> {
    problem.check_grid(grid)?;
    if scheme.drivers() != problem.drivers() {
        return Err(invalid(format!(
            "scheme has {} drivers, the problem has {}",
            scheme.drivers(),
            problem.drivers()
        )));
    }
    let tau = check_increments(problem, n, increments)?;
    let mut real = SchemeRealization::new(scheme, grid, grid.h(), tau, mode)?;
    let v0 = GridField::new(grid.clone(), problem.initial().sample(grid, 0).to_values(grid.len()))?;
    let fields = run_recursion(&mut real, v0, increments, |i, _| {
        Ok(free_terms(problem, grid, tau, increments, i))
    })?;
    Trajectory::new(
        grid.clone(),
        tau,
        fields,
        TrajectoryMeta {
            problem: problem.name().to_string(),
            scheme: scheme_label(scheme).to_string(),
            seed: Some(increments.seed()),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Stencil;
    use crate::noise::sample_increments;
    use crate::problem::build_scheme_example1;
    use std::f64::consts::PI;

    fn heat(nu: f64) -> DifferentialProblem {
        DifferentialProblem::new("heat", 1, 0, &[1.0], 0.5)
            .unwrap()
            .with_a(1, 1, nu)
            .with_initial(Coefficient::spatial(|x| (2.0 * PI * x[0]).cos()))
    }

    #[test]
    fn zero_tau_is_identity() {
        let g = TorusGrid::cube(1, 1.0, 8).unwrap();
        let s = DifferenceScheme::new(Stencil::unit_basis(1), 0).with_a(1, 1, 1.0);
        let op = assemble_implicit_operator(&s, &g, 0.0, g.h(), 1).unwrap();
        let rhs = g.sample(|x| x[0]).unwrap();
        assert_eq!(op.solve(&rhs).unwrap(), rhs);
    }

    #[test]
    fn solve_divides_fourier_mode_by_symbol() {
        let (n, k, a, tau) = (32usize, 2.0, 0.3, 0.01);
        let g = TorusGrid::cube(1, 1.0, n).unwrap();
        let h = g.h();
        let s = DifferenceScheme::new(Stencil::unit_basis(1), 0).with_a(1, 1, a);
        let rhs = g.sample(|x| (2.0 * PI * k * x[0]).cos()).unwrap();
        let factor = 1.0 + tau * a * ((2.0 * PI * k * h).sin() / h).powi(2);
        for mode in [SolverMode::Direct, SolverMode::Iterative] {
            let op = assemble_implicit_operator_with(&s, &g, tau, h, 1, mode).unwrap();
            let x = op.solve(&rhs).unwrap();
            assert!(x.sub(&rhs.scaled(1.0 / factor)).sup_norm() < 1e-10);
            assert!(op.apply(&x).unwrap().sub(&rhs).sup_norm() < 1e-10);
        }
    }

    #[test]
    fn constants_are_fixed_points() {
        let g = TorusGrid::cube(1, 1.0, 16).unwrap();
        let s = DifferenceScheme::new(Stencil::unit_basis(1), 1).with_a(1, 1, 0.5);
        let op = assemble_implicit_operator(&s, &g, 0.1, g.h(), 1).unwrap();
        let c = GridField::constant(&g, 2.5);
        let z = GridField::zeros(&g);
        let v = implicit_step(&op, &c, &z, std::slice::from_ref(&z), &[0.3], &s, g.h(), 1).unwrap();
        assert!(v.sub(&c).sup_norm() < 1e-13);
    }

    #[test]
    fn zeroth_order_noise_is_scalar_recursion() {
        let g = TorusGrid::cube(1, 1.0, 8).unwrap();
        let s = DifferenceScheme::new(Stencil::unit_basis(1), 1).with_b(0, 0, 0.7);
        let op = assemble_implicit_operator(&s, &g, 0.1, g.h(), 1).unwrap();
        let v = g.sample(|x| 1.0 + x[0]).unwrap();
        let z = GridField::zeros(&g);
        let out = implicit_step(&op, &v, &z, std::slice::from_ref(&z), &[0.2], &s, g.h(), 1).unwrap();
        assert!(out.sub(&v.scaled(1.0 + 0.7 * 0.2)).sup_norm() < 1e-14);
    }

    #[test]
    fn heat_mode_decays_like_discrete_symbol() {
        let (n, steps, nu) = (32usize, 20usize, 0.1);
        let p = heat(nu);
        let g = TorusGrid::cube(1, 1.0, n).unwrap();
        let s = build_scheme_example1(&p);
        let tau = 0.5 / steps as f64;
        let incr = BrownianIncrements::zeros(steps, 0, tau).unwrap();
        let traj = run_space_time_scheme(&p, &s, &g, steps, &incr).unwrap();
        assert_eq!(traj.steps(), steps);
        let h = g.h();
        let lam = nu * ((2.0 * PI * h).sin() / h).powi(2);
        let amp = (1.0 + tau * lam).powi(-(steps as i32));
        let exact = g.sample(|x| amp * (2.0 * PI * x[0]).cos()).unwrap();
        assert!(traj.last().sub(&exact).sup_norm() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_increments() {
        let p = heat(0.1);
        let g = TorusGrid::cube(1, 1.0, 8).unwrap();
        let s = build_scheme_example1(&p);
        let bad_n = sample_increments(4, 0, 0.5 / 4.0, 1).unwrap();
        assert!(run_space_time_scheme(&p, &s, &g, 5, &bad_n).is_err());
        let bad_tau = sample_increments(5, 0, 0.2, 1).unwrap();
        assert!(run_space_time_scheme(&p, &s, &g, 5, &bad_tau).is_err());
        let bad_d1 = sample_increments(5, 1, 0.1, 1).unwrap();
        assert!(run_space_time_scheme(&p, &s, &g, 5, &bad_d1).is_err());
    }

    #[test]
    fn step_failure_carries_index() {
        // A strongly anti-diffusive operator makes I - tau L singular.
        let g = TorusGrid::cube(1, 1.0, 4).unwrap();
        let s = DifferenceScheme::new(Stencil::unit_basis(1), 0).with_a(0, 0, 10.0);
        let p = DifferentialProblem::new("bad", 1, 0, &[1.0], 0.1)
            .unwrap()
            .with_a(0, 0, 10.0)
            .with_initial(1.0);
        let incr = BrownianIncrements::zeros(1, 0, 0.1).unwrap();
        match run_space_time_scheme(&p, &s, &g, 1, &incr) {
            Err(Error::Solve(f)) => assert_eq!(f.step, Some(1)),
            other => panic!("expected a solve failure, got {other:?}"),
        }
    }
}

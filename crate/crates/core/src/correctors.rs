//! Expansion `v^h = sum_j h^j / j! v^(j) + r^h` of the space-time scheme in
//! powers of the mesh: the operators `L^(p)`, `M^(p) rho`, the corrector
//! system and the residual `r^h`.

use crate::coefficient::Coefficient;
use crate::error::{invalid, Error, Result};
use crate::grid::{GridField, Norms, TorusGrid};
use crate::noise::BrownianIncrements;
use crate::problem::{DifferenceScheme, DifferentialProblem};
use crate::reference::{initial_field, AnyRealization};
use crate::spectral::SpectralGrid;
use crate::stepper::{check_increments, free_terms, run_recursion, Trajectory, TrajectoryMeta};

/// Largest supported expansion order.
pub const MAX_ORDER: usize = 12;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `(B_p, A_{p,r})`: `B_p = 1` for even `p`, else 0;
/// `A_{p,r} = p! / ((r+1)! (p-r+1)!)` when `p` and `r` are both even, else 0.
pub fn expansion_constants(p: usize, r: usize) -> Result<(f64, f64)> {
    if r > p {
        return Err(invalid(format!("need r <= p, got p = {p}, r = {r}")));
    }
    let b = if p.is_multiple_of(2) { 1.0 } else { 0.0 };
    let a = if p.is_multiple_of(2) && r.is_multiple_of(2) {
        factorial(p) / (factorial(r + 1) * factorial(p - r + 1))
    } else {
        0.0
    };
    Ok((b, a))
}

/// Binomial coefficient `C^j_p`.
pub fn binomial(p: usize, j: usize) -> f64 {
    if j > p {
        return 0.0;
    }
    let j = j.min(p - j);
    let mut c = 1.0;
    for t in 0..j {
        c = c * (p - t) as f64 / (t + 1) as f64;
    }
    c.round()
}

fn sample_on(c: &Coefficient, grid: &TorusGrid, i: usize) -> Option<crate::coefficient::Sampled> {
    (!c.is_zero()).then(|| c.sample(grid, i))
}

fn accumulate(out: &mut GridField, coef: &crate::coefficient::Sampled, scale: f64, term: &GridField) {
    for (idx, (o, t)) in out.values_mut().iter_mut().zip(term.values()).enumerate() {
        *o += scale * coef.at(idx) * t;
    }
}

fn check_field(sp: &SpectralGrid, scheme: &DifferenceScheme, phi: &GridField) -> Result<()> {
    if scheme.stencil().dim() != sp.grid().dim() {
        return Err(Error::InvalidStencil("stencil and reference grid dimensions differ".into()));
    }
    if phi.grid() != sp.grid() {
        return Err(Error::GridMismatch("field is not on the reference grid".into()));
    }
    sp.check_resolved(phi)
}

/// True when `L^(p)` vanishes for this scheme without evaluating it.
pub fn corrector_l_vanishes(p: usize, scheme: &DifferenceScheme) -> bool {
    p % 2 == 1 && scheme.is_symmetric()
}

/// `L^(p)_i phi` with spectral derivatives on the grid of `sp`.
pub fn corrector_operator_l(
    p: usize,
    scheme: &DifferenceScheme,
    sp: &SpectralGrid,
    phi: &GridField,
    i: usize,
) -> Result<GridField> {
    check_field(sp, scheme, phi)?;
    let grid = sp.grid();
    let st = scheme.stencil();
    let mut out = GridField::zeros(grid);
    if corrector_l_vanishes(p, scheme) {
        return Ok(out);
    }
    let (b_p, _) = expansion_constants(p, 0)?;
    for (l, lam) in st.nonzero() {
        for (m, mu) in st.nonzero() {
            let Some(c) = sample_on(scheme.a(l, m), grid, i) else { continue };
            for j in 0..=p {
                let (_, a_pj) = expansion_constants(p, j)?;
                if a_pj != 0.0 {
                    let d = sp.derivative(phi, &[(lam, (j + 1) as u32), (mu, (p - j + 1) as u32)])?;
                    accumulate(&mut out, &c, a_pj, &d);
                }
            }
        }
    }
    let sign = if p.is_multiple_of(2) { -1.0 } else { 1.0 };
    for (l, lam) in st.nonzero() {
        let cross = scheme.a(l, 0).zip_with(scheme.a(0, l), |u, v| u + v);
        let one_sided = scheme.p(l).zip_with(scheme.q(l), move |u, v| u + sign * v);
        let c = cross.zip_with(&one_sided, move |x, y| b_p * x + y);
        if let Some(c) = sample_on(&c, grid, i) {
            let d = sp.derivative(phi, &[(lam, (p + 1) as u32)])?;
            accumulate(&mut out, &c, 1.0 / (p + 1) as f64, &d);
        }
    }
    if p == 0 {
        if let Some(c) = sample_on(scheme.a(0, 0), grid, i) {
            accumulate(&mut out, &c, 1.0, phi);
        }
    }
    Ok(out)
}

/// `M^(p) rho_i phi` (zero-based `rho`) with spectral derivatives.
pub fn corrector_operator_m(
    p: usize,
    rho: usize,
    scheme: &DifferenceScheme,
    sp: &SpectralGrid,
    phi: &GridField,
    i: usize,
) -> Result<GridField> {
    if rho >= scheme.drivers() {
        return Err(invalid(format!("driver index {rho} out of range")));
    }
    check_field(sp, scheme, phi)?;
    let grid = sp.grid();
    let mut out = GridField::zeros(grid);
    if p % 2 == 1 {
        return Ok(out);
    }
    for (l, lam) in scheme.stencil().nonzero() {
        if let Some(c) = sample_on(scheme.b(l, rho), grid, i) {
            let d = sp.derivative(phi, &[(lam, (p + 1) as u32)])?;
            accumulate(&mut out, &c, 1.0 / (p + 1) as f64, &d);
        }
    }
    if p == 0 {
        if let Some(c) = sample_on(scheme.b(0, rho), grid, i) {
            accumulate(&mut out, &c, 1.0, phi);
        }
    }
    Ok(out)
}

/// The fields `v^(0), ..., v^(k)` on a reference grid.
#[derive(Debug, Clone)]
pub struct CorrectorSet {
    grid: TorusGrid,
    fields: Vec<Trajectory>,
    under_resolved: bool,
}

impl CorrectorSet {
    /// Wraps existing trajectories as `v^(0..)`.
    pub fn from_trajectories(fields: Vec<Trajectory>) -> Result<Self> {
        let first = fields.first().ok_or_else(|| invalid("a corrector set needs v^(0)"))?;
        let grid = first.grid().clone();
        if fields
            .iter()
            .any(|t| t.grid() != &grid || t.steps() != first.steps() || t.tau() != first.tau())
        {
            return Err(Error::GridMismatch("corrector trajectories do not share grid and time steps".into()));
        }
        Ok(Self {
            grid,
            fields,
            under_resolved: false,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn k(&self) -> usize {
        self.fields.len() - 1
    }

    pub fn corrector(&self, p: usize) -> &Trajectory {
        &self.fields[p]
    }

    pub fn correctors(&self) -> &[Trajectory] {
        &self.fields
    }

    /// Set when the reference grid has fewer than `8 (3k + 2)` points on
    /// some axis.
    pub fn under_resolved(&self) -> bool {
        self.under_resolved
    }
}

/// Minimum points per axis recommended for correctors up to order `k`.
pub fn recommended_points(k: usize) -> usize {
    8 * (3 * k + 2)
}

/// Solves the corrector system up to order `k` on `refgrid`.
///
/// Implicit solves and the noise operators use the spectral realization of
/// the continuous operators when the problem coefficients are constant in
/// space, and the symmetric scheme on `refgrid` otherwise.
pub fn run_corrector_system(
    k: usize,
    problem: &DifferentialProblem,
    scheme: &DifferenceScheme,
    refgrid: &TorusGrid,
    n: usize,
    increments: &BrownianIncrements,
) -> Result<CorrectorSet> {
    if k > MAX_ORDER {
        return Err(invalid(format!("corrector order {k} exceeds {MAX_ORDER}")));
    }
    problem.check_grid(refgrid)?;
    if scheme.drivers() != problem.drivers() || scheme.stencil().dim() != problem.dim() {
        return Err(invalid("scheme and problem disagree on dimension or drivers"));
    }
    let tau = check_increments(problem, n, increments)?;
    let need = recommended_points(k);
    let under_resolved = refgrid.points().iter().any(|&p| p < need);
    if under_resolved {
        log::warn!(
            "reference grid {:?} is below the recommended {need} points per axis for k = {k}",
            refgrid.points()
        );
    }
    let spectral = problem.has_space_constant_coefficients();
    let mut real = AnyRealization::for_problem(problem, refgrid, tau, spectral)?;
    let sp = SpectralGrid::new(refgrid);
    let meta = |p: usize| TrajectoryMeta {
        problem: problem.name().to_string(),
        scheme: format!("corrector-{p}"),
        seed: Some(increments.seed()),
    };

    let v0 = initial_field(problem, refgrid)?;
    let fields = run_recursion(&mut real, v0, increments, |i, _| {
        Ok(free_terms(problem, refgrid, tau, increments, i))
    })?;
    let mut out = vec![Trajectory::new(refgrid.clone(), tau, fields, meta(0))?];

    for p in 1..=k {
        let lower = &out;
        let forcing = |i: usize, _: &[GridField]| -> Result<Option<GridField>> {
            let mut acc = GridField::zeros(refgrid);
            let mut any = false;
            for j in 1..=p {
                let c = binomial(p, j);
                if !corrector_l_vanishes(j, scheme) {
                    let l = corrector_operator_l(j, scheme, &sp, lower[p - j].field(i), i)?;
                    acc.axpy(tau * c, &l);
                    any = true;
                }
                if j % 2 == 0 {
                    for (rho, x) in increments.step(i).iter().enumerate() {
                        if *x != 0.0 {
                            let m = corrector_operator_m(j, rho, scheme, &sp, lower[p - j].field(i - 1), i - 1)?;
                            acc.axpy(c * x, &m);
                            any = true;
                        }
                    }
                }
            }
            Ok(any.then_some(acc))
        };
        let fields = run_recursion(&mut real, GridField::zeros(refgrid), increments, forcing)?;
        let traj = Trajectory::new(refgrid.clone(), tau, fields, meta(p))?;
        out.push(traj);
    }
    Ok(CorrectorSet {
        grid: refgrid.clone(),
        fields: out,
        under_resolved,
    })
}

/// Norms of `r^h_i = v^h_i - sum_{j <= k} h^j / j! v^(j)_i` on the grid of
/// `vh`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub per_step: Vec<Norms>,
    pub max_sup: f64,
    pub max_l2h: f64,
}

/// Expansion residual of `vh` (mesh `h`, possibly negative) against the
/// correctors restricted to its grid.
pub fn expansion_residual(vh: &Trajectory, cs: &CorrectorSet, h: f64, k: usize) -> Result<ResidualReport> {
    if k > cs.k() {
        return Err(invalid(format!("requested k = {k} but only {} correctors exist", cs.k())));
    }
    let factor = cs.grid().refinement_factor(vh.grid()).ok_or_else(|| {
        Error::GridMismatch(format!(
            "reference grid {:?} does not refine {:?}",
            cs.grid().points(),
            vh.grid().points()
        ))
    })?;
    if h == 0.0 {
        return Err(Error::ZeroMesh);
    }
    if ((h.abs() - vh.grid().h()) / vh.grid().h()).abs() > 1e-12 {
        return Err(Error::MeshMismatch {
            given: h,
            grid: vh.grid().h(),
        });
    }
    let v0 = cs.corrector(0);
    if vh.steps() != v0.steps() || (vh.tau() - v0.tau()).abs() > 1e-14 * v0.tau() {
        return Err(invalid("trajectory and correctors use different time grids"));
    }
    let weights: Vec<f64> = (0..=k).map(|j| h.powi(j as i32) / factorial(j)).collect();
    let mut per_step = Vec::with_capacity(vh.steps() + 1);
    for i in 0..=vh.steps() {
        let mut r = vh.field(i).clone();
        for (j, w) in weights.iter().enumerate() {
            let c = cs.corrector(j).field(i).subsample(factor)?;
            r.axpy(-w, &c);
        }
        per_step.push(r.norms());
    }
    let max_sup = per_step.iter().map(|n| n.sup).fold(0.0, f64::max);
    let max_l2h = per_step.iter().map(|n| n.l2h).fold(0.0, f64::max);
    Ok(ResidualReport {
        per_step,
        max_sup,
        max_l2h,
    })
}

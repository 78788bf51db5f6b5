//! Continuous problem data, difference-scheme coefficients, the two standard
//! scheme constructors, and sampled validators for consistency, positivity
//! and degenerate parabolicity.
//!
//! Index conventions: `a[alpha][beta]` and `b[alpha][rho]` use `alpha = 0` for
//! the zeroth-order slot (`D_0 = I`) and `1..=d` for the axes; drivers `rho`
//! are zero-based. Scheme coefficients are indexed by stencil position, with
//! position 0 the origin.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::coefficient::Coefficient;
use crate::error::{invalid, Error, Result};
use crate::grid::{Stencil, TorusGrid};

/// The Cauchy problem data on a torus: operator coefficients, free terms,
/// initial data and horizon.
#[derive(Debug, Clone)]
pub struct DifferentialProblem {
    name: String,
    dim: usize,
    drivers: usize,
    periods: Vec<f64>,
    horizon: f64,
    a: Vec<Vec<Coefficient>>,
    b: Vec<Vec<Coefficient>>,
    f: Coefficient,
    g: Vec<Coefficient>,
    u0: Coefficient,
}

impl DifferentialProblem {
    /// A problem with every coefficient, free term and the initial data zero.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        drivers: usize,
        periods: &[f64],
        horizon: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if periods.len() != dim || periods.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(invalid(format!("bad periods {periods:?} for dimension {dim}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            name: name.into(),
            dim,
            drivers,
            periods: periods.to_vec(),
            horizon,
            a: vec![vec![Coefficient::zero(); dim + 1]; dim + 1],
            b: vec![vec![Coefficient::zero(); drivers]; dim + 1],
            f: Coefficient::zero(),
            g: vec![Coefficient::zero(); drivers],
            u0: Coefficient::zero(),
        })
    }

    pub fn with_a(mut self, alpha: usize, beta: usize, c: impl Into<Coefficient>) -> Self {
        self.a[alpha][beta] = c.into();
        self
    }

    pub fn with_b(mut self, alpha: usize, rho: usize, c: impl Into<Coefficient>) -> Self {
        self.b[alpha][rho] = c.into();
        self
    }

    pub fn with_forcing(mut self, f: impl Into<Coefficient>) -> Self {
        self.f = f.into();
        self
    }

    pub fn with_noise_forcing(mut self, rho: usize, g: impl Into<Coefficient>) -> Self {
        self.g[rho] = g.into();
        self
    }

    pub fn with_initial(mut self, u0: impl Into<Coefficient>) -> Self {
        self.u0 = u0.into();
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn drivers(&self) -> usize {
        self.drivers
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn a(&self, alpha: usize, beta: usize) -> &Coefficient {
        &self.a[alpha][beta]
    }

    pub fn b(&self, alpha: usize, rho: usize) -> &Coefficient {
        &self.b[alpha][rho]
    }

    pub fn forcing(&self) -> &Coefficient {
        &self.f
    }

    pub fn noise_forcing(&self, rho: usize) -> &Coefficient {
        &self.g[rho]
    }

    pub fn initial(&self) -> &Coefficient {
        &self.u0
    }

    /// True when every operator coefficient is constant in space.
    pub fn has_space_constant_coefficients(&self) -> bool {
        self.a.iter().flatten().all(Coefficient::is_space_constant)
            && self.b.iter().flatten().all(Coefficient::is_space_constant)
    }

    pub fn is_time_independent(&self) -> bool {
        self.a.iter().flatten().all(Coefficient::is_time_independent)
            && self.b.iter().flatten().all(Coefficient::is_time_independent)
            && self.f.is_time_independent()
            && self.g.iter().all(Coefficient::is_time_independent)
    }

    /// Checks that `grid` covers this problem's torus.
    pub fn check_grid(&self, grid: &TorusGrid) -> Result<()> {
        let same = grid.dim() == self.dim
            && grid
                .periods()
                .iter()
                .zip(&self.periods)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * b);
        if same {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "grid periods {:?} do not match problem periods {:?}",
                grid.periods(),
                self.periods
            )))
        }
    }
}

/// Difference-operator coefficients over a stencil.
#[derive(Debug, Clone)]
pub struct DifferenceScheme {
    stencil: Stencil,
    drivers: usize,
    a: Vec<Vec<Coefficient>>,
    b: Vec<Vec<Coefficient>>,
    p: Vec<Coefficient>,
    q: Vec<Coefficient>,
    sigma: Option<Vec<Vec<Coefficient>>>,
}

impl DifferenceScheme {
    /// All coefficients zero.
    pub fn new(stencil: Stencil, drivers: usize) -> Self {
        let n = stencil.len();
        Self {
            stencil,
            drivers,
            a: vec![vec![Coefficient::zero(); n]; n],
            b: vec![vec![Coefficient::zero(); drivers]; n],
            p: vec![Coefficient::zero(); n],
            q: vec![Coefficient::zero(); n],
            sigma: None,
        }
    }

    pub fn with_a(mut self, l: usize, m: usize, c: impl Into<Coefficient>) -> Self {
        self.a[l][m] = c.into();
        self
    }

    pub fn with_b(mut self, l: usize, rho: usize, c: impl Into<Coefficient>) -> Self {
        self.b[l][rho] = c.into();
        self
    }

    /// Forward-difference weight; `l` must index a nonzero stencil vector.
    pub fn with_p(mut self, l: usize, c: impl Into<Coefficient>) -> Self {
        assert!(l > 0, "p is defined on nonzero stencil vectors only");
        self.p[l] = c.into();
        self
    }

    /// Backward-difference weight; `l` must index a nonzero stencil vector.
    pub fn with_q(mut self, l: usize, c: impl Into<Coefficient>) -> Self {
        assert!(l > 0, "q is defined on nonzero stencil vectors only");
        self.q[l] = c.into();
        self
    }

    /// Factor `sigma[l - 1][r]` over the nonzero stencil vectors.
    pub fn with_sigma(mut self, sigma: Vec<Vec<Coefficient>>) -> Result<Self> {
        let rows = self.stencil.len() - 1;
        if sigma.len() != rows || sigma.iter().any(|r| r.len() != sigma[0].len()) {
            return Err(invalid(format!(
                "sigma must have {rows} rows of equal length"
            )));
        }
        self.sigma = Some(sigma);
        Ok(self)
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    pub fn drivers(&self) -> usize {
        self.drivers
    }

    pub fn a(&self, l: usize, m: usize) -> &Coefficient {
        &self.a[l][m]
    }

    pub fn b(&self, l: usize, rho: usize) -> &Coefficient {
        &self.b[l][rho]
    }

    pub fn p(&self, l: usize) -> &Coefficient {
        &self.p[l]
    }

    pub fn q(&self, l: usize) -> &Coefficient {
        &self.q[l]
    }

    pub fn sigma(&self) -> Option<&[Vec<Coefficient>]> {
        self.sigma.as_deref()
    }

    /// No one-sided terms: every `p` and `q` is the constant zero. Schemes of
    /// this kind have error expansions in even powers of `h` only.
    pub fn is_symmetric(&self) -> bool {
        self.p.iter().chain(&self.q).all(Coefficient::is_zero)
    }

    pub fn is_time_independent(&self) -> bool {
        self.a.iter().flatten().all(Coefficient::is_time_independent)
            && self.b.iter().flatten().all(Coefficient::is_time_independent)
            && self.p.iter().chain(&self.q).all(Coefficient::is_time_independent)
    }

    pub fn has_space_constant_coefficients(&self) -> bool {
        self.a.iter().flatten().all(Coefficient::is_space_constant)
            && self.b.iter().flatten().all(Coefficient::is_space_constant)
            && self.p.iter().chain(&self.q).all(Coefficient::is_space_constant)
    }

    /// `2 a^{lm} - sum_rho b^{l rho} b^{m rho}` over the nonzero stencil vectors.
    pub fn parabolicity_matrix(&self, i: usize, x: &[f64]) -> DMatrix<f64> {
        let n = self.stencil.len() - 1;
        DMatrix::from_fn(n, n, |r, c| {
            let (l, m) = (r + 1, c + 1);
            let bb: f64 = (0..self.drivers)
                .map(|rho| self.b[l][rho].eval(i, x) * self.b[m][rho].eval(i, x))
                .sum();
            2.0 * self.a[l][m].eval(i, x) - bb
        })
    }

    /// Pointwise factor `sigma` with `sigma sigma^T = parabolicity_matrix`.
    pub fn factor_sigma_at(&self, i: usize, x: &[f64]) -> Result<PsdFactor, PsdError> {
        let m = self.parabolicity_matrix(i, x);
        factorize_psd(&(0.5 * (&m + m.transpose())))
    }
}

/// Symmetric-difference scheme on `{0, e_1, ..., e_d}`: every coefficient is
/// copied, cross terms included, and `p = q = 0`.
pub fn build_scheme_example1(problem: &DifferentialProblem) -> DifferenceScheme {
    let d = problem.dim();
    let mut s = DifferenceScheme::new(Stencil::unit_basis(d), problem.drivers());
    for alpha in 0..=d {
        for beta in 0..=d {
            s.a[alpha][beta] = problem.a(alpha, beta).clone();
        }
        for rho in 0..problem.drivers() {
            s.b[alpha][rho] = problem.b(alpha, rho).clone();
        }
    }
    s
}

/// Scheme on `{0, e_1, ..., e_d}` whose first-order part uses one-sided
/// differences: `p - q = a^{0 alpha} + a^{alpha 0}` split into positive and
/// negative parts.
pub fn build_scheme_example2(problem: &DifferentialProblem) -> DifferenceScheme {
    let d = problem.dim();
    let mut s = DifferenceScheme::new(Stencil::unit_basis(d), problem.drivers());
    s.a[0][0] = problem.a(0, 0).clone();
    for alpha in 1..=d {
        for beta in 1..=d {
            s.a[alpha][beta] = problem.a(alpha, beta).clone();
        }
    }
    for alpha in 0..=d {
        for rho in 0..problem.drivers() {
            s.b[alpha][rho] = problem.b(alpha, rho).clone();
        }
    }
    for alpha in 1..=d {
        let cross = problem.a(0, alpha).zip_with(problem.a(alpha, 0), |u, v| u + v);
        if !cross.is_zero() {
            s.p[alpha] = cross.map(|c| c.max(0.0));
            s.q[alpha] = cross.map(|c| (-c).max(0.0));
        }
    }
    s
}

/// One `(i, x)` location at which the validators evaluate coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint {
    pub step: usize,
    pub x: Vec<f64>,
}

impl SamplePoint {
    pub fn new(step: usize, x: Vec<f64>) -> Self {
        Self { step, x }
    }
}

/// Every grid point at each of the given time indices.
pub fn grid_sample(grid: &TorusGrid, steps: &[usize]) -> Vec<SamplePoint> {
    steps
        .iter()
        .flat_map(|&i| grid.all_coords().into_iter().map(move |x| SamplePoint::new(i, x)))
        .collect()
}

/// The linear identities tying scheme coefficients to the operator
/// coefficients. Axis indices are 1-based, drivers 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identity {
    /// `sum_l b^{l rho} l^alpha = b^{alpha rho}`
    NoiseFirstOrder { alpha: usize, rho: usize },
    /// `b^{0 rho}` matches
    NoiseZeroOrder { rho: usize },
    /// `sum_{l,m} a^{lm} l^alpha m^beta = a^{alpha beta}`
    SecondOrder { alpha: usize, beta: usize },
    /// `a^{00}` matches
    ZeroOrder,
    /// `sum a^{l0} l^alpha + sum a^{0m} m^alpha + sum p^l l^alpha - sum q^m m^alpha = a^{alpha 0} + a^{0 alpha}`
    FirstOrder { alpha: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub identity: Identity,
    pub at: SamplePoint,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    pub max_residual: f64,
    /// The worst residual of each identity that exceeded the tolerance.
    pub violations: Vec<Violation>,
    pub passed: bool,
}

impl ConsistencyReport {
    pub fn residual_of(&self, identity: Identity) -> Option<f64> {
        self.violations
            .iter()
            .find(|v| v.identity == identity)
            .map(|v| v.residual)
    }
}

fn check_sample(sample: &[SamplePoint], dim: usize) -> Result<()> {
    if sample.is_empty() {
        return Err(invalid("sample set is empty"));
    }
    if sample.iter().any(|s| s.x.len() != dim) {
        return Err(invalid(format!("sample points must have dimension {dim}")));
    }
    Ok(())
}

/// Evaluates the consistency identities at every sample point.
pub fn check_consistency(
    scheme: &DifferenceScheme,
    problem: &DifferentialProblem,
    sample: &[SamplePoint],
    tol: f64,
) -> Result<ConsistencyReport> {
    let d = problem.dim();
    check_sample(sample, d)?;
    if scheme.stencil().dim() != d || scheme.drivers() != problem.drivers() {
        return Err(invalid("scheme and problem dimensions differ"));
    }
    let st = scheme.stencil();
    let mut worst: Vec<Violation> = Vec::new();
    let mut max_residual = 0.0_f64;
    let mut record = |identity: Identity, at: &SamplePoint, residual: f64| {
        let residual = residual.abs();
        max_residual = max_residual.max(residual);
        if residual <= tol {
            return;
        }
        match worst.iter_mut().find(|v| v.identity == identity) {
            Some(v) if v.residual >= residual => {}
            Some(v) => {
                v.residual = residual;
                v.at = at.clone();
            }
            None => worst.push(Violation {
                identity,
                at: at.clone(),
                residual,
            }),
        }
    };
    for pt in sample {
        let (i, x) = (pt.step, pt.x.as_slice());
        for rho in 0..problem.drivers() {
            for alpha in 1..=d {
                let lhs: f64 = st
                    .nonzero()
                    .map(|(l, v)| scheme.b(l, rho).eval(i, x) * v[alpha - 1] as f64)
                    .sum();
                record(
                    Identity::NoiseFirstOrder { alpha, rho },
                    pt,
                    lhs - problem.b(alpha, rho).eval(i, x),
                );
            }
            record(
                Identity::NoiseZeroOrder { rho },
                pt,
                scheme.b(0, rho).eval(i, x) - problem.b(0, rho).eval(i, x),
            );
        }
        for alpha in 1..=d {
            for beta in 1..=d {
                let mut lhs = 0.0;
                for (l, lv) in st.nonzero() {
                    for (m, mv) in st.nonzero() {
                        lhs += scheme.a(l, m).eval(i, x) * (lv[alpha - 1] * mv[beta - 1]) as f64;
                    }
                }
                record(
                    Identity::SecondOrder { alpha, beta },
                    pt,
                    lhs - problem.a(alpha, beta).eval(i, x),
                );
            }
        }
        record(
            Identity::ZeroOrder,
            pt,
            scheme.a(0, 0).eval(i, x) - problem.a(0, 0).eval(i, x),
        );
        for alpha in 1..=d {
            let lhs: f64 = st
                .nonzero()
                .map(|(l, v)| {
                    let c = scheme.a(l, 0).eval(i, x) + scheme.a(0, l).eval(i, x)
                        + scheme.p(l).eval(i, x)
                        - scheme.q(l).eval(i, x);
                    c * v[alpha - 1] as f64
                })
                .sum();
            let rhs = problem.a(alpha, 0).eval(i, x) + problem.a(0, alpha).eval(i, x);
            record(Identity::FirstOrder { alpha }, pt, lhs - rhs);
        }
    }
    Ok(ConsistencyReport {
        max_residual,
        passed: worst.is_empty(),
        violations: worst,
    })
}

#[derive(Debug, Clone)]
pub struct ParabolicityReport {
    /// Smallest eigenvalue of the symmetric part of `2a - b b^T` over the sample.
    pub min_eigenvalue: f64,
    pub at: SamplePoint,
    /// Sample points where the smallest eigenvalue is below `-1e-10`.
    pub failures: Vec<(SamplePoint, f64)>,
    pub passed: bool,
}

/// Tolerance on negative eigenvalues of `2a - b b^T`.
pub const PARABOLICITY_TOL: f64 = 1e-10;

/// Degenerate parabolicity: `2a^{ab} - b^{a rho} b^{b rho}` (axes only) is
/// positive semidefinite at every sample point.
pub fn check_degenerate_parabolicity(
    problem: &DifferentialProblem,
    sample: &[SamplePoint],
) -> Result<ParabolicityReport> {
    let d = problem.dim();
    check_sample(sample, d)?;
    let mut min_eigenvalue = f64::INFINITY;
    let mut at = sample[0].clone();
    let mut failures = Vec::new();
    for pt in sample {
        let (i, x) = (pt.step, pt.x.as_slice());
        let m = DMatrix::from_fn(d, d, |r, c| {
            let (alpha, beta) = (r + 1, c + 1);
            let bb: f64 = (0..problem.drivers())
                .map(|rho| problem.b(alpha, rho).eval(i, x) * problem.b(beta, rho).eval(i, x))
                .sum();
            2.0 * problem.a(alpha, beta).eval(i, x) - bb
        });
        let sym = 0.5 * (&m + m.transpose());
        let lambda_min = SymmetricEigen::new(sym).eigenvalues.min();
        if lambda_min < min_eigenvalue {
            min_eigenvalue = lambda_min;
            at = pt.clone();
        }
        if lambda_min < -PARABOLICITY_TOL {
            failures.push((pt.clone(), lambda_min));
        }
    }
    Ok(ParabolicityReport {
        min_eigenvalue,
        at,
        passed: failures.is_empty(),
        failures,
    })
}

#[derive(Debug, Clone)]
pub struct PositivityReport {
    /// Smallest `p` or `q` value seen.
    pub min_one_sided: f64,
    /// Largest `|2a - b b^T - sigma sigma^T|` entry, when `sigma` is given.
    pub sigma_residual: Option<f64>,
    pub failures: Vec<(SamplePoint, String)>,
    pub passed: bool,
}

/// `p >= 0`, `q >= 0`, and (if present) the `sigma` factorization identity
/// to `tol`.
pub fn check_scheme_positivity(
    scheme: &DifferenceScheme,
    sample: &[SamplePoint],
    tol: f64,
) -> Result<PositivityReport> {
    check_sample(sample, scheme.stencil().dim())?;
    let mut min_one_sided = f64::INFINITY;
    let mut sigma_residual: Option<f64> = None;
    let mut failures = Vec::new();
    let n0 = scheme.stencil().len() - 1;
    for pt in sample {
        let (i, x) = (pt.step, pt.x.as_slice());
        for l in 1..=n0 {
            let (p, q) = (scheme.p(l).eval(i, x), scheme.q(l).eval(i, x));
            min_one_sided = min_one_sided.min(p).min(q);
            if p < 0.0 || q < 0.0 {
                failures.push((pt.clone(), format!("negative p/q at stencil index {l}")));
            }
        }
        if let Some(sigma) = scheme.sigma() {
            let m = scheme.parabolicity_matrix(i, x);
            let mut worst = 0.0_f64;
            for r in 0..n0 {
                for c in 0..n0 {
                    let ss: f64 = sigma[r]
                        .iter()
                        .zip(&sigma[c])
                        .map(|(u, v)| u.eval(i, x) * v.eval(i, x))
                        .sum();
                    worst = worst.max((m[(r, c)] - ss).abs());
                }
            }
            sigma_residual = Some(sigma_residual.unwrap_or(0.0).max(worst));
            if worst > tol {
                failures.push((pt.clone(), format!("sigma identity off by {worst:.3e}")));
            }
        }
    }
    Ok(PositivityReport {
        min_one_sided,
        sigma_residual,
        passed: failures.is_empty(),
        failures,
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsdError {
    #[error("matrix is not square")]
    NotSquare,
    #[error("matrix is not symmetric (asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix is indefinite (Schur complement entry {0:.3e})")]
    Indefinite(f64),
}

/// `sigma` with `sigma sigma^T = M`; columns past `rank` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdFactor {
    pub sigma: DMatrix<f64>,
    pub rank: usize,
}

/// Pivoted Cholesky factorization of a symmetric positive semidefinite
/// matrix. Stops once the largest remaining diagonal entry falls below
/// `1e-10 (1 + max|M|)` and fails if the leftover Schur complement is not
/// negligible.
pub fn factorize_psd(m: &DMatrix<f64>) -> Result<PsdFactor, PsdError> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(PsdError::NotSquare);
    }
    let scale = 1.0 + m.amax();
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(PsdError::NotSymmetric(asym));
    }
    let tol = 1e-10 * scale;
    let mut work = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut factor = DMatrix::<f64>::zeros(n, n);
    let mut rank = 0;
    for k in 0..n {
        let (piv, dmax) = (k..n)
            .map(|j| (j, work[(j, j)]))
            .fold((k, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
        if dmax <= tol {
            break;
        }
        if piv != k {
            work.swap_rows(k, piv);
            work.swap_columns(k, piv);
            factor.swap_rows(k, piv);
            perm.swap(k, piv);
        }
        let pivot = work[(k, k)].sqrt();
        factor[(k, k)] = pivot;
        for i in k + 1..n {
            factor[(i, k)] = work[(i, k)] / pivot;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                work[(i, j)] -= factor[(i, k)] * factor[(j, k)];
            }
        }
        rank += 1;
    }
    let leftover = (rank..n)
        .flat_map(|i| (rank..n).map(move |j| (i, j)))
        .map(|(i, j)| work[(i, j)].abs())
        .fold(0.0, f64::max);
    if leftover > tol {
        return Err(PsdError::Indefinite(leftover));
    }
    let mut sigma = DMatrix::zeros(n, n);
    for (row, &orig) in perm.iter().enumerate() {
        for c in 0..rank {
            sigma[(orig, c)] = factor[(row, c)];
        }
    }
    Ok(PsdFactor { sigma, rank })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(a11: f64, b11: f64) -> DifferentialProblem {
        DifferentialProblem::new("t", 1, 1, &[1.0], 1.0)
            .unwrap()
            .with_a(1, 1, a11)
            .with_b(1, 0, b11)
    }

    fn pts() -> Vec<SamplePoint> {
        vec![
            SamplePoint::new(0, vec![0.0]),
            SamplePoint::new(3, vec![0.37]),
        ]
    }

    fn value(c: &Coefficient) -> f64 {
        c.eval(0, &[0.1])
    }

    #[test]
    fn example1_copies_coefficients() {
        let s = build_scheme_example1(&one_d(2.0, 1.0));
        assert_eq!(value(s.a(1, 1)), 2.0);
        assert_eq!(value(s.b(1, 0)), 1.0);
        assert_eq!(value(s.p(1)), 0.0);
        assert_eq!(value(s.q(1)), 0.0);
        assert!(s.is_symmetric());
        let zero = build_scheme_example1(&one_d(0.0, 0.0));
        assert!(zero.a.iter().flatten().chain(zero.b.iter().flatten()).all(Coefficient::is_zero));
    }

    #[test]
    fn example1_is_exactly_consistent() {
        let p = one_d(2.0, 1.0)
            .with_a(0, 1, 0.2)
            .with_a(1, 0, Coefficient::spatial(|x| x[0]))
            .with_a(0, 0, -0.3)
            .with_b(0, 0, 0.5);
        let s = build_scheme_example1(&p);
        let r = check_consistency(&s, &p, &pts(), 0.0).unwrap();
        assert_eq!(r.max_residual, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn example2_positive_part_split() {
        let pos = one_d(1.0, 0.0).with_a(0, 1, 0.3).with_a(1, 0, 0.3);
        let s = build_scheme_example2(&pos);
        assert!((value(s.p(1)) - 0.6).abs() < 1e-15);
        assert_eq!(value(s.q(1)), 0.0);
        assert!(!s.is_symmetric());
        let r = check_consistency(&s, &pos, &pts(), 1e-12).unwrap();
        assert!(r.passed && r.max_residual <= 1e-15);

        let neg = one_d(1.0, 0.0).with_a(0, 1, -0.4);
        let s = build_scheme_example2(&neg);
        assert_eq!(value(s.p(1)), 0.0);
        assert!((value(s.q(1)) - 0.4).abs() < 1e-15);
        assert!((value(s.p(1)) - value(s.q(1)) + 0.4).abs() < 1e-15);

        let none = build_scheme_example2(&one_d(1.0, 0.5));
        let ex1 = build_scheme_example1(&one_d(1.0, 0.5));
        assert!(none.is_symmetric());
        assert_eq!(value(none.a(1, 1)), value(ex1.a(1, 1)));
        assert_eq!(value(none.b(1, 0)), value(ex1.b(1, 0)));
    }

    #[test]
    fn perturbed_scheme_reports_identity() {
        let p = one_d(2.0, 1.0);
        let s = build_scheme_example1(&p).with_a(1, 1, 2.01);
        let r = check_consistency(&s, &p, &pts(), 1e-12).unwrap();
        assert!(!r.passed);
        let res = r.residual_of(Identity::SecondOrder { alpha: 1, beta: 1 }).unwrap();
        assert!((res - 0.01).abs() < 1e-12);
        assert_eq!(r.violations.len(), 1);
    }

    #[test]
    fn consistency_rejects_empty_sample() {
        let p = one_d(1.0, 0.0);
        assert!(check_consistency(&build_scheme_example1(&p), &p, &[], 1e-12).is_err());
    }

    #[test]
    fn parabolicity_cases() {
        let full = check_degenerate_parabolicity(&one_d(0.5, 1.0), &pts()).unwrap();
        assert!(full.min_eigenvalue.abs() < 1e-12 && full.passed);
        let heat = check_degenerate_parabolicity(&one_d(1.0, 0.0), &pts()).unwrap();
        assert!((heat.min_eigenvalue - 2.0).abs() < 1e-12);
        let bad = check_degenerate_parabolicity(&one_d(0.0, 1.0), &pts()).unwrap();
        assert!((bad.min_eigenvalue + 1.0).abs() < 1e-12);
        assert!(!bad.passed);
        assert_eq!(bad.failures.len(), 2);
    }

    #[test]
    fn psd_factor_small_cases() {
        let z = factorize_psd(&DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(z.rank, 0);
        assert_eq!(z.sigma, DMatrix::zeros(2, 2));
        let id = factorize_psd(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(id.rank, 2);
        assert!((&id.sigma * id.sigma.transpose() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
        let ones = DMatrix::from_element(2, 2, 1.0);
        let f = factorize_psd(&ones).unwrap();
        assert_eq!(f.rank, 1);
        assert!((f.sigma[(0, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((f.sigma[(1, 0)] - f.sigma[(0, 0)]).abs() < 1e-15);
        assert!((&f.sigma * f.sigma.transpose() - ones).amax() < 1e-12);
    }

    #[test]
    fn psd_factor_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(factorize_psd(&m), Err(PsdError::Indefinite(_))));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(factorize_psd(&m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(factorize_psd(&m), Err(PsdError::NotSymmetric(_))));
    }

    #[test]
    fn sigma_identity_check() {
        let p = one_d(0.5, 0.6);
        let s = build_scheme_example1(&p);
        let f = s.factor_sigma_at(0, &[0.0]).unwrap();
        let s = s
            .with_sigma(vec![vec![Coefficient::Constant(f.sigma[(0, 0)])]])
            .unwrap();
        let r = check_scheme_positivity(&s, &pts(), 1e-10).unwrap();
        assert!(r.passed, "{:?}", r.failures);
        assert!(r.sigma_residual.unwrap() < 1e-12);
    }
}

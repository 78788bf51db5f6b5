//! The implicit Euler time scheme `v_i` with the continuous operators,
//! realized either exactly per Fourier mode (coefficients constant in space)
//! or by the symmetric difference scheme on a much finer grid.

use rustfft::num_complex::Complex64;

use crate::error::{invalid, Error, Result, SolveFailure, SolveFailureKind};
use crate::grid::{GridField, TorusGrid};
use crate::noise::BrownianIncrements;
use crate::problem::{build_scheme_example1, DifferentialProblem};
use crate::spectral::SpectralGrid;
use crate::stepper::{
    check_increments, free_terms, run_recursion, Realization, SchemeRealization, SolverMode, Trajectory,
    TrajectoryMeta,
};

/// Default number of halvings between the finest ladder mesh and the
/// fine-grid reference.
pub const DEFAULT_FINE_LEVELS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceMode {
    #[default]
    /// Exact per-mode recursion; needs coefficients constant in space.
    Spectral,
    /// The symmetric scheme at mesh `h / 2^levels`.
    FineGrid { levels: u32 },
}

fn unit(dim: usize, a: usize) -> Vec<i64> {
    let mut e = vec![0; dim];
    e[a] = 1;
    e
}

/// Symbols of `L` and `M^rho` from constant-in-space coefficients.
pub(crate) struct SpectralRealization {
    sp: SpectralGrid,
    problem: DifferentialProblem,
    tau: f64,
    divisors: Option<(usize, Vec<Complex64>)>,
}

impl SpectralRealization {
    pub(crate) fn new(problem: &DifferentialProblem, grid: &TorusGrid, tau: f64) -> Result<Self> {
        if !problem.has_space_constant_coefficients() {
            return Err(invalid(format!(
                "spectral reference needs coefficients constant in space; '{}' has variable ones",
                problem.name()
            )));
        }
        Ok(Self {
            sp: SpectralGrid::new(grid),
            problem: problem.clone(),
            tau,
            divisors: None,
        })
    }

    fn value(c: &crate::coefficient::Coefficient, i: usize) -> f64 {
        c.uniform_value(i).expect("checked constant in space")
    }

    /// Symbol of the continuous `L_i` at mode `idx`.
    pub(crate) fn symbol_l(&self, idx: usize, i: usize) -> Complex64 {
        let p = &self.problem;
        let d = p.dim();
        let mut s = Complex64::new(Self::value(p.a(0, 0), i), 0.0);
        for alpha in 1..=d {
            let ea = unit(d, alpha - 1);
            let cross = Self::value(p.a(alpha, 0), i) + Self::value(p.a(0, alpha), i);
            if cross != 0.0 {
                s += cross * self.sp.derivative_symbol(idx, &[(&ea, 1)]);
            }
            for beta in 1..=d {
                let c = Self::value(p.a(alpha, beta), i);
                if c != 0.0 {
                    let eb = unit(d, beta - 1);
                    s += c * self.sp.derivative_symbol(idx, &[(&ea, 1), (&eb, 1)]);
                }
            }
        }
        s
    }

    /// Symbol of the continuous `M^rho_i` at mode `idx`.
    pub(crate) fn symbol_m(&self, rho: usize, idx: usize, i: usize) -> Complex64 {
        let p = &self.problem;
        let d = p.dim();
        let mut s = Complex64::new(Self::value(p.b(0, rho), i), 0.0);
        for alpha in 1..=d {
            let c = Self::value(p.b(alpha, rho), i);
            if c != 0.0 {
                s += c * self.sp.derivative_symbol(idx, &[(&unit(d, alpha - 1), 1)]);
            }
        }
        s
    }

    fn divisors(&mut self, i: usize) -> Result<&[Complex64]> {
        let key = if self.problem.is_time_independent() { 0 } else { i };
        if self.divisors.as_ref().map(|d| d.0) != Some(key) {
            let mut out = Vec::with_capacity(self.sp.grid().len());
            for idx in 0..self.sp.grid().len() {
                let div = Complex64::new(1.0, 0.0) - self.tau * self.symbol_l(idx, i);
                if div.norm() < 1e-14 {
                    return Err(SolveFailure::new(SolveFailureKind::SingularMode {
                        mode: idx,
                        divisor: div.norm(),
                    })
                    .into());
                }
                out.push(div);
            }
            self.divisors = Some((key, out));
        }
        Ok(&self.divisors.as_ref().expect("just set").1)
    }
}

impl Realization for SpectralRealization {
    fn solve(&mut self, i: usize, rhs: &GridField) -> Result<GridField> {
        let mut c = self.sp.forward(rhs.values());
        let div = self.divisors(i)?;
        for (v, d) in c.iter_mut().zip(div) {
            *v /= d;
        }
        Ok(self.sp.inverse(c))
    }

    fn noise(&self, rho: usize, i: usize, phi: &GridField) -> Result<GridField> {
        self.sp.apply_symbol(phi, |idx| self.symbol_m(rho, idx, i))
    }
}

/// The reference realization used for `problem` on `grid`.
pub(crate) enum AnyRealization {
    Spectral(SpectralRealization),
    Fine(SchemeRealization),
}

impl AnyRealization {
    pub(crate) fn for_problem(problem: &DifferentialProblem, grid: &TorusGrid, tau: f64, spectral: bool) -> Result<Self> {
        if spectral {
            Ok(Self::Spectral(SpectralRealization::new(problem, grid, tau)?))
        } else {
            let scheme = build_scheme_example1(problem);
            Ok(Self::Fine(SchemeRealization::new(&scheme, grid, grid.h(), tau, SolverMode::Auto)?))
        }
    }
}

impl Realization for AnyRealization {
    fn solve(&mut self, i: usize, rhs: &GridField) -> Result<GridField> {
        match self {
            Self::Spectral(r) => r.solve(i, rhs),
            Self::Fine(r) => r.solve(i, rhs),
        }
    }

    fn noise(&self, rho: usize, i: usize, phi: &GridField) -> Result<GridField> {
        match self {
            Self::Spectral(r) => r.noise(rho, i, phi),
            Self::Fine(r) => r.noise(rho, i, phi),
        }
    }
}

/// Runs the time scheme `v_i` with `n` steps.
///
/// In spectral mode the result lives on `grid`; in fine-grid mode `grid` is
/// the finest ladder grid and the result lives on its refinement by
/// `2^levels`.
pub fn run_reference_time_scheme(
    problem: &DifferentialProblem,
    mode: ReferenceMode,
    grid: &TorusGrid,
    n: usize,
    increments: &BrownianIncrements,
) -> Result<Trajectory> {
    problem.check_grid(grid)?;
    let tau = check_increments(problem, n, increments)?;
    let (grid, label) = match mode {
        ReferenceMode::Spectral => (grid.clone(), "spectral"),
        ReferenceMode::FineGrid { levels } => {
            if levels > 16 {
                return Err(invalid(format!("{levels} refinement levels is too many")));
            }
            (grid.refined(1 << levels), "fine-grid")
        }
    };
    let mut real = AnyRealization::for_problem(problem, &grid, tau, mode == ReferenceMode::Spectral)?;
    let v0 = initial_field(problem, &grid)?;
    let fields = run_recursion(&mut real, v0, increments, |i, _| {
        Ok(free_terms(problem, &grid, tau, increments, i))
    })?;
    Trajectory::new(
        grid,
        tau,
        fields,
        TrajectoryMeta {
            problem: problem.name().to_string(),
            scheme: label.to_string(),
            seed: Some(increments.seed()),
        },
    )
}

pub(crate) fn initial_field(problem: &DifferentialProblem, grid: &TorusGrid) -> Result<GridField> {
    GridField::new(grid.clone(), problem.initial().sample(grid, 0).to_values(grid.len()))
        .map_err(|e| match e {
            Error::InvalidArgument(m) => invalid(format!("initial data: {m}")),
            other => other,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::Coefficient;
    use std::f64::consts::PI;

    fn heat(nu: f64) -> DifferentialProblem {
        DifferentialProblem::new("heat", 1, 0, &[1.0], 0.5)
            .unwrap()
            .with_a(1, 1, nu)
            .with_initial(Coefficient::spatial(|x| (2.0 * PI * x[0]).cos()))
    }

    #[test]
    fn spectral_heat_mode_recursion() {
        let (n, nu) = (64usize, 0.1);
        let p = heat(nu);
        let g = TorusGrid::cube(1, 1.0, 32).unwrap();
        let incr = BrownianIncrements::zeros(n, 0, 0.5 / n as f64).unwrap();
        let r = run_reference_time_scheme(&p, ReferenceMode::Spectral, &g, n, &incr).unwrap();
        let tau = 0.5 / n as f64;
        for i in [1, 10, n] {
            let amp = (1.0 + tau * nu * (2.0 * PI).powi(2)).powi(-(i as i32));
            let exact = g.sample(|x| amp * (2.0 * PI * x[0]).cos()).unwrap();
            assert!(r.field(i).sub(&exact).sup_norm() < 1e-12);
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let p = DifferentialProblem::new("zero", 1, 1, &[1.0], 0.5).unwrap().with_a(1, 1, 0.2);
        let g = TorusGrid::cube(1, 1.0, 16).unwrap();
        let incr = crate::noise::sample_increments(8, 1, 0.5 / 8.0, 3).unwrap();
        for mode in [ReferenceMode::Spectral, ReferenceMode::FineGrid { levels: 1 }] {
            let r = run_reference_time_scheme(&p, mode, &g, 8, &incr).unwrap();
            assert_eq!(r.max_sup(), 0.0);
        }
    }

    #[test]
    fn spectral_rejects_variable_coefficients() {
        let p = heat(0.1).with_a(1, 1, Coefficient::spatial(|x| 1.0 + x[0]));
        let g = TorusGrid::cube(1, 1.0, 16).unwrap();
        let incr = BrownianIncrements::zeros(4, 0, 0.125).unwrap();
        assert!(run_reference_time_scheme(&p, ReferenceMode::Spectral, &g, 4, &incr).is_err());
        let fine = run_reference_time_scheme(&p, ReferenceMode::FineGrid { levels: 2 }, &g, 4, &incr).unwrap();
        assert_eq!(fine.grid().points(), &[64]);
    }

    #[test]
    fn fine_grid_approaches_spectral_at_second_order() {
        let (n, nu) = (16usize, 0.1);
        let p = heat(nu);
        let incr = BrownianIncrements::zeros(n, 0, 0.5 / n as f64).unwrap();
        let mut errs = Vec::new();
        for levels in [0u32, 1, 2] {
            let coarse = TorusGrid::cube(1, 1.0, 16).unwrap();
            let fine = run_reference_time_scheme(&p, ReferenceMode::FineGrid { levels }, &coarse, n, &incr).unwrap();
            let spec = run_reference_time_scheme(&p, ReferenceMode::Spectral, fine.grid(), n, &incr).unwrap();
            errs.push(fine.last().sub(spec.last()).sup_norm());
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.05, "{errs:?}");
        }
    }
}

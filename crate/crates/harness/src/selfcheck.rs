//! Internal consistency checks run by `zakai selfcheck`.
//!
//! The oracles rebuild the space-time scheme from scratch: a dense matrix
//! assembled column by column from grid-field differences and solved by LU,
//! and, for constant coefficients, a per-mode recursion on the discrete
//! symbols evaluated with a direct DFT.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use zakai_core::{
    run_space_time_scheme, sample_increments, vandermonde_weights, BrownianIncrements, Coefficient,
    DifferenceScheme, DifferentialProblem, GridField, Stencil, TorusGrid, Trajectory,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// `sum beta = 1` and `sum_j beta_j base^{-ij} = 0` for `k <= max_k`.
pub fn check_weight_identities(max_k: usize, tol: f64) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut failed = None;
    for base in [2u32, 4] {
        for k in 0..=max_k {
            match vandermonde_weights(k, base) {
                Ok(w) => worst = worst.max(w.identity_residual()),
                Err(e) => failed = Some(format!("k = {k}, base {base}: {e}")),
            }
        }
    }
    let passed = failed.is_none() && worst <= tol;
    CheckResult::new(
        "weight identities",
        passed,
        failed.unwrap_or_else(|| format!("k <= {max_k}, bases 2 and 4: worst residual {worst:.3e}")),
    )
}

fn random_field(grid: &TorusGrid, rng: &mut StdRng) -> GridField {
    GridField::new(grid.clone(), (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("finite values")
}

/// `<d_l phi, psi> = -<phi, d_l psi>` and
/// `<delta_{h,l} phi, psi> = -<phi, delta_{-h,l} psi>` on random fields.
pub fn check_summation_by_parts(seed: u64) -> CheckResult {
    let mut rng = StdRng::seed_from_u64(seed);
    let grid = TorusGrid::new(2, &[1.0, 0.75], &[8, 6]).expect("valid grid");
    let h = grid.h();
    let mut worst: f64 = 0.0;
    for lambda in [vec![1, 0], vec![0, 1], vec![1, 1], vec![2, -1]] {
        let phi = random_field(&grid, &mut rng);
        let psi = random_field(&grid, &mut rng);
        let sym = phi.symmetric_difference(&lambda, h).expect("valid").inner(&psi)
            + phi.inner(&psi.symmetric_difference(&lambda, h).expect("valid"));
        let fwd = phi.forward_difference(&lambda, h).expect("valid").inner(&psi)
            + phi.inner(&psi.forward_difference(&lambda, -h).expect("valid"));
        worst = worst.max(sym.abs()).max(fwd.abs());
    }
    CheckResult::new(
        "summation by parts",
        worst <= 1e-12,
        format!("worst defect {worst:.3e}"),
    )
}

/// Nodal values per time step, looked up from grid coordinates.
fn table_coefficient(grid: &TorusGrid, table: Vec<Vec<f64>>) -> Coefficient {
    let grid = grid.clone();
    let table = Arc::new(table);
    Coefficient::general(move |i, x| {
        let h = grid.h();
        let multi: Vec<usize> = x
            .iter()
            .zip(grid.points())
            .map(|(xa, n)| ((xa / h).round() as i64).rem_euclid(*n as i64) as usize)
            .collect();
        table[i][grid.linear_index(&multi)]
    })
}

/// A scheme and problem with random coefficients varying in space and time
/// on a 2-d torus, with one diagonal stencil vector and two drivers.
pub struct RandomCase {
    pub grid: TorusGrid,
    pub problem: DifferentialProblem,
    pub scheme: DifferenceScheme,
    pub steps: usize,
    pub increments: BrownianIncrements,
}

pub fn random_variable_case(seed: u64, points: usize, steps: usize) -> RandomCase {
    let mut rng = StdRng::seed_from_u64(seed);
    let grid = TorusGrid::cube(2, 1.0, points).expect("valid grid");
    let stencil = Stencil::new(2, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]]).expect("valid stencil");
    let drivers = 2;
    let mut nodal = |lo: f64, hi: f64| -> Coefficient {
        let table = (0..=steps)
            .map(|_| (0..grid.len()).map(|_| rng.random_range(lo..hi)).collect())
            .collect();
        table_coefficient(&grid, table)
    };
    let mut scheme = DifferenceScheme::new(stencil, drivers);
    for l in 0..4 {
        for m in 0..4 {
            let c = if l == m && l > 0 { nodal(0.5, 1.0) } else { nodal(-0.1, 0.1) };
            scheme = scheme.with_a(l, m, c);
        }
        for rho in 0..drivers {
            scheme = scheme.with_b(l, rho, nodal(-0.3, 0.3));
        }
        if l > 0 {
            scheme = scheme.with_p(l, nodal(0.0, 0.2)).with_q(l, nodal(0.0, 0.2));
        }
    }
    let horizon = 0.02 * steps as f64;
    let mut problem = DifferentialProblem::new("random", 2, drivers, &[1.0, 1.0], horizon)
        .expect("valid problem")
        .with_forcing(nodal(-1.0, 1.0))
        .with_initial(nodal(-1.0, 1.0));
    for rho in 0..drivers {
        problem = problem.with_noise_forcing(rho, nodal(-1.0, 1.0));
    }
    let increments = sample_increments(steps, drivers, horizon / steps as f64, seed).expect("valid increments");
    RandomCase {
        grid,
        problem,
        scheme,
        steps,
        increments,
    }
}

fn sample(c: &Coefficient, grid: &TorusGrid, i: usize) -> GridField {
    GridField::new(grid.clone(), grid.all_coords().iter().map(|x| c.eval(i, x)).collect()).expect("finite")
}

fn dense_l(scheme: &DifferenceScheme, grid: &TorusGrid, i: usize) -> DMatrix<f64> {
    let h = grid.h();
    let st = scheme.stencil();
    let n = grid.len();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let phi = GridField::new(grid.clone(), e).expect("finite");
        let mut col = GridField::zeros(grid);
        for (l, vl) in st.vectors().iter().enumerate() {
            for (m, vm) in st.vectors().iter().enumerate() {
                let d = phi
                    .symmetric_difference(vm, h)
                    .and_then(|f| f.symmetric_difference(vl, h))
                    .expect("valid");
                col = col.add(&sample(scheme.a(l, m), grid, i).mul(&d));
            }
            if l > 0 {
                let fwd = phi.forward_difference(vl, h).expect("valid");
                let bwd = phi.forward_difference(vl, -h).expect("valid");
                col = col.add(&sample(scheme.p(l), grid, i).mul(&fwd));
                col = col.sub(&sample(scheme.q(l), grid, i).mul(&bwd));
            }
        }
        out.set_column(j, &DVector::from_column_slice(col.values()));
    }
    out
}

fn m_apply(scheme: &DifferenceScheme, grid: &TorusGrid, rho: usize, i: usize, phi: &GridField) -> GridField {
    let mut out = GridField::zeros(grid);
    for (l, vl) in scheme.stencil().vectors().iter().enumerate() {
        let d = phi.symmetric_difference(vl, grid.h()).expect("valid");
        out = out.add(&sample(scheme.b(l, rho), grid, i).mul(&d));
    }
    out
}

/// The space-time scheme by dense LU, one full matrix per step.
pub fn dense_oracle(case: &RandomCase) -> Vec<GridField> {
    let grid = &case.grid;
    let tau = case.increments.tau();
    let mut v = sample(case.problem.initial(), grid, 0);
    let mut out = vec![v.clone()];
    for i in 1..=case.steps {
        let a = DMatrix::identity(grid.len(), grid.len()) - dense_l(&case.scheme, grid, i) * tau;
        let mut rhs = v.add(&sample(case.problem.forcing(), grid, i).scaled(tau));
        for (rho, xi) in case.increments.step(i).iter().enumerate() {
            let noise = m_apply(&case.scheme, grid, rho, i - 1, &v).add(&sample(case.problem.noise_forcing(rho), grid, i - 1));
            rhs.axpy(*xi, &noise);
        }
        let x = a
            .lu()
            .solve(&DVector::from_column_slice(rhs.values()))
            .expect("oracle matrix is nonsingular");
        v = GridField::new(grid.clone(), x.as_slice().to_vec()).expect("finite");
        out.push(v.clone());
    }
    out
}

fn max_sup_distance(a: &[GridField], b: &[GridField]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.sub(y).sup_norm()).fold(0.0, f64::max)
}

pub fn check_dense_oracle(seed: u64) -> CheckResult {
    let case = random_variable_case(seed, 8, 2);
    let oracle = dense_oracle(&case);
    match run_space_time_scheme(&case.problem, &case.scheme, &case.grid, case.steps, &case.increments) {
        Ok(traj) => {
            let d = max_sup_distance(traj.fields(), &oracle);
            CheckResult::new("dense oracle", d <= 1e-11, format!("N = 8, n = 2: sup distance {d:.3e}"))
        }
        Err(e) => CheckResult::new("dense oracle", false, format!("scheme failed: {e}")),
    }
}

/// Constant coefficients on a 2-d torus; returns the case and the values of
/// every coefficient.
pub fn random_constant_case(seed: u64, points: usize, steps: usize) -> RandomCase {
    let mut rng = StdRng::seed_from_u64(seed);
    let grid = TorusGrid::cube(2, 1.0, points).expect("valid grid");
    let stencil = Stencil::new(2, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]]).expect("valid stencil");
    let drivers = 1;
    let mut scheme = DifferenceScheme::new(stencil, drivers);
    for l in 0..4 {
        for m in 0..4 {
            let c: f64 = if l == m && l > 0 { rng.random_range(0.5..1.0) } else { rng.random_range(-0.1..0.1) };
            scheme = scheme.with_a(l, m, c);
        }
        scheme = scheme.with_b(l, 0, rng.random_range(-0.3..0.3));
        if l > 0 {
            scheme = scheme
                .with_p(l, rng.random_range(0.0..0.2))
                .with_q(l, rng.random_range(0.0..0.2));
        }
    }
    let values: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u0 = table_coefficient(&grid, vec![values; steps + 1]);
    let horizon = 0.02 * steps as f64;
    let problem = DifferentialProblem::new("random-constant", 2, drivers, &[1.0, 1.0], horizon)
        .expect("valid problem")
        .with_initial(u0);
    let increments = sample_increments(steps, drivers, horizon / steps as f64, seed).expect("valid increments");
    RandomCase {
        grid,
        problem,
        scheme,
        steps,
        increments,
    }
}

fn dft(grid: &TorusGrid, values: &[Complex<f64>], sign: f64) -> Vec<Complex<f64>> {
    let coords: Vec<Vec<usize>> = (0..grid.len()).map(|i| grid.multi_index(i)).collect();
    let n = grid.points();
    coords
        .iter()
        .map(|k| {
            coords
                .iter()
                .zip(values)
                .map(|(x, v)| {
                    let phase: f64 = (0..n.len())
                        .map(|a| 2.0 * std::f64::consts::PI * (k[a] * x[a]) as f64 / n[a] as f64)
                        .sum();
                    v * Complex::from_polar(1.0, sign * phase)
                })
                .sum()
        })
        .collect()
}

/// The discrete scheme mode by mode, for constant coefficients and zero free
/// terms.
pub fn spectral_oracle(case: &RandomCase) -> Vec<GridField> {
    let grid = &case.grid;
    let h = grid.h();
    let st = case.scheme.stencil();
    let n = grid.points();
    let c = |coef: &Coefficient| coef.eval(0, &vec![0.0; grid.dim()]);
    let theta = |k: &[usize], v: &[i64]| -> f64 {
        (0..n.len())
            .map(|a| 2.0 * std::f64::consts::PI * k[a] as f64 * v[a] as f64 / n[a] as f64)
            .sum()
    };
    let sym = |k: &[usize], v: &[i64]| -> Complex<f64> {
        if v.iter().all(|x| *x == 0) {
            Complex::new(1.0, 0.0)
        } else {
            Complex::new(0.0, theta(k, v).sin() / h)
        }
    };
    let mut sl = Vec::new();
    let mut sm = Vec::new();
    for idx in 0..grid.len() {
        let k = grid.multi_index(idx);
        let mut l = Complex::new(0.0, 0.0);
        let mut m = Complex::new(0.0, 0.0);
        for (a, va) in st.vectors().iter().enumerate() {
            for (b, vb) in st.vectors().iter().enumerate() {
                l += c(case.scheme.a(a, b)) * sym(&k, va) * sym(&k, vb);
            }
            if a > 0 {
                let t = theta(&k, va);
                let fwd = (Complex::from_polar(1.0, t) - 1.0) / h;
                let bwd = (Complex::from_polar(1.0, -t) - 1.0) / (-h);
                l += c(case.scheme.p(a)) * fwd - c(case.scheme.q(a)) * bwd;
            }
            m += c(case.scheme.b(a, 0)) * sym(&k, va);
        }
        sl.push(l);
        sm.push(m);
    }
    let tau = case.increments.tau();
    let u0 = sample(case.problem.initial(), grid, 0);
    let mut hat = dft(grid, &u0.values().iter().map(|v| Complex::new(*v, 0.0)).collect::<Vec<_>>(), -1.0);
    let mut out = vec![u0];
    for i in 1..=case.steps {
        let xi = case.increments.get(i, 0);
        for (idx, v) in hat.iter_mut().enumerate() {
            *v = *v * (1.0 + sm[idx] * xi) / (1.0 - tau * sl[idx]);
        }
        let back = dft(grid, &hat, 1.0);
        let len = grid.len() as f64;
        out.push(GridField::new(grid.clone(), back.iter().map(|z| z.re / len).collect()).expect("finite"));
    }
    out
}

pub fn check_spectral_oracle(seed: u64) -> CheckResult {
    let case = random_constant_case(seed, 8, 4);
    let oracle = spectral_oracle(&case);
    match run_space_time_scheme(&case.problem, &case.scheme, &case.grid, case.steps, &case.increments) {
        Ok(traj) => {
            let d = max_sup_distance(traj.fields(), &oracle);
            CheckResult::new("spectral oracle", d <= 1e-10, format!("N = 8, n = 4: sup distance {d:.3e}"))
        }
        Err(e) => CheckResult::new("spectral oracle", false, format!("scheme failed: {e}")),
    }
}

/// Every check, in a fixed order.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        check_weight_identities(6, 1e-12),
        check_summation_by_parts(7),
        check_dense_oracle(11),
        check_spectral_oracle(13),
    ]
}

pub fn trajectory_distance(traj: &Trajectory, fields: &[GridField]) -> f64 {
    max_sup_distance(traj.fields(), fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn oracle_detects_a_perturbed_scheme() {
        let case = random_variable_case(3, 6, 2);
        let oracle = dense_oracle(&case);
        let scheme = case.scheme.clone().with_p(1, 0.5);
        let traj = run_space_time_scheme(&case.problem, &scheme, &case.grid, case.steps, &case.increments).unwrap();
        assert!(trajectory_distance(&traj, &oracle) > 1e-6);
    }
}

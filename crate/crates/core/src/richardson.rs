//! Richardson extrapolation over a mesh ladder `h, h/2, ..., h/2^K` and
//! convergence-order estimation.

use crate::error::{invalid, Error, Result};
use crate::grid::GridField;
use crate::stepper::{Trajectory, TrajectoryMeta};

/// Largest supported extrapolation level.
pub const MAX_LEVEL: usize = 12;
/// Errors below this are treated as exact convergence.
pub const EXACT_TOL: f64 = 1e-14;

/// Weights `beta = e_1^T V^{-1}` with `V_{ij} = base^{-(i-1)(j-1)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RichardsonWeights {
    pub level: usize,
    pub base: u32,
    pub beta: Vec<f64>,
}

impl RichardsonWeights {
    /// Largest violation of `sum beta = 1` and `sum_j beta_j base^{-ij} = 0`.
    pub fn identity_residual(&self) -> f64 {
        let b = self.base as f64;
        let mut worst = (self.beta.iter().sum::<f64>() - 1.0).abs();
        for i in 1..=self.level {
            let s: f64 = self
                .beta
                .iter()
                .enumerate()
                .map(|(j, w)| w * b.powi(-((i * j) as i32)))
                .sum();
            worst = worst.max(s.abs());
        }
        worst
    }
}

/// Solves the `(k+1) x (k+1)` Vandermonde system by Gaussian elimination
/// with partial pivoting.
pub fn vandermonde_weights(k: usize, base: u32) -> Result<RichardsonWeights> {
    if base != 2 && base != 4 {
        return Err(invalid(format!("base must be 2 or 4, got {base}")));
    }
    if k > MAX_LEVEL {
        return Err(invalid(format!("level {k} exceeds the conditioning guard {MAX_LEVEL}")));
    }
    let n = k + 1;
    let b = base as f64;
    // beta V = e_1, i.e. V^T beta = e_1; (V^T)_{ij} = base^{-(i)(j)} is symmetric.
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| b.powi(-((i * j) as i32))).collect())
        .collect();
    let mut rhs = vec![0.0; n];
    rhs[0] = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .expect("nonempty range");
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                let (top, bottom) = m.split_at_mut(row);
                for (x, p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *x -= f * p;
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut beta = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| m[row][c] * beta[c]).sum();
        beta[row] = (rhs[row] - s) / m[row][row];
    }
    let w = RichardsonWeights { level: k, base, beta };
    let res = w.identity_residual();
    let scale = w.beta.iter().map(|v| v.abs()).sum::<f64>();
    if res.is_nan() || res > 1e-12 * scale.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "weights for k = {k}, base {base} violate the identities by {res:.3e}"
        )));
    }
    Ok(w)
}

/// Exact sub-sampling from mesh `h / 2^j` to mesh `h`.
pub fn restrict_to_coarse(phi: &GridField, j: u32) -> Result<GridField> {
    if j >= usize::BITS {
        return Err(invalid("restriction level too large"));
    }
    phi.subsample(1usize << j)
}

fn check_ladder(solutions: &[Trajectory], w: &RichardsonWeights) -> Result<()> {
    if solutions.len() != w.beta.len() {
        return Err(invalid(format!(
            "{} solutions for {} weights",
            solutions.len(),
            w.beta.len()
        )));
    }
    let first = &solutions[0];
    for (j, s) in solutions.iter().enumerate() {
        if s.steps() != first.steps() || (s.tau() - first.tau()).abs() > 1e-14 * first.tau() {
            return Err(invalid("ladder members use different time grids"));
        }
        if s.grid().refinement_factor(first.grid()) != Some(1 << j) {
            return Err(Error::GridMismatch(format!(
                "rung {j} with {:?} points does not halve the mesh of {:?}",
                s.grid().points(),
                first.grid().points()
            )));
        }
    }
    Ok(())
}

/// `sum_j beta_j v^{h / 2^j}` on the coarsest grid, step by step.
pub fn richardson_combine(solutions: &[Trajectory], w: &RichardsonWeights) -> Result<Trajectory> {
    check_ladder(solutions, w)?;
    let first = &solutions[0];
    let mut fields = Vec::with_capacity(first.steps() + 1);
    for i in 0..=first.steps() {
        let mut acc = GridField::zeros(first.grid());
        for (j, (s, b)) in solutions.iter().zip(&w.beta).enumerate() {
            acc.axpy(*b, &restrict_to_coarse(s.field(i), j as u32)?);
        }
        fields.push(acc);
    }
    let meta = TrajectoryMeta {
        scheme: format!("{}+richardson{}", first.meta().scheme, w.level),
        ..first.meta().clone()
    };
    Trajectory::new(first.grid().clone(), first.tau(), fields, meta)
}

/// `delta_{h, lambda_1} ... delta_{h, lambda_p}` of the combination, `h` the
/// coarsest mesh.
pub fn extrapolate_derivative(
    solutions: &[Trajectory],
    lambdas: &[Vec<i64>],
    w: &RichardsonWeights,
) -> Result<Trajectory> {
    let combined = richardson_combine(solutions, w)?;
    let h = combined.grid().h();
    combined.map(|f| f.composed_difference(lambdas, h))
}

/// Orders measured from an error ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    /// `log2(e_m / e_{m+1})`, `None` where an error was excluded.
    pub pairwise: Vec<Option<f64>>,
    /// Slope of `log e` against `log h` over the usable rungs.
    pub least_squares: Option<f64>,
    /// Every error was below [`EXACT_TOL`].
    pub exact: bool,
    pub notes: Vec<String>,
}

/// Fits orders to `errors` measured at mesh sizes `hs` (halving).
pub fn estimate_order(hs: &[f64], errors: &[f64]) -> Result<OrderEstimate> {
    if hs.len() != errors.len() || hs.len() < 2 {
        return Err(invalid("need at least two (h, error) pairs of equal length"));
    }
    for w in hs.windows(2) {
        if !(w[1] > 0.0 && (w[0] / w[1] - 2.0).abs() < 1e-9) {
            return Err(invalid(format!("mesh ladder {hs:?} does not halve")));
        }
    }
    if errors.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(invalid("errors must be finite and nonnegative"));
    }
    let mut notes = Vec::new();
    let usable: Vec<bool> = errors.iter().map(|e| *e >= EXACT_TOL).collect();
    for (m, u) in usable.iter().enumerate() {
        if !u {
            notes.push(format!("rung {m} (h = {}) converged exactly; excluded", hs[m]));
        }
    }
    let pairwise = (0..errors.len() - 1)
        .map(|m| (usable[m] && usable[m + 1]).then(|| (errors[m] / errors[m + 1]).log2()))
        .collect();
    let pts: Vec<(f64, f64)> = (0..errors.len())
        .filter(|&m| usable[m])
        .map(|m| (hs[m].ln(), errors[m].ln()))
        .collect();
    let least_squares = (pts.len() >= 2).then(|| {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    Ok(OrderEstimate {
        pairwise,
        least_squares,
        exact: usable.iter().all(|u| !u),
        notes,
    })
}

/// Expected order with its pass band `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderBand {
    pub expected: f64,
    pub min: f64,
    pub max: f64,
}

impl OrderBand {
    pub fn new(expected: f64, min: f64, max: f64) -> Self {
        Self { expected, min, max }
    }

    /// `expected +- tol`.
    pub fn around(expected: f64, tol: f64) -> Self {
        Self::new(expected, expected - tol, expected + tol)
    }

    pub fn contains(&self, order: f64) -> bool {
        order >= self.min && order <= self.max
    }
}

/// Error ladder, fitted orders and the verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub hs: Vec<f64>,
    pub sup_errors: Vec<f64>,
    pub l2h_errors: Vec<f64>,
    pub estimate: OrderEstimate,
    pub band: Option<OrderBand>,
    pub pass: bool,
}

impl ConvergenceReport {
    /// Fits the sup-norm errors and judges them against `band`.
    pub fn new(hs: Vec<f64>, sup_errors: Vec<f64>, l2h_errors: Vec<f64>, band: Option<OrderBand>) -> Result<Self> {
        if l2h_errors.len() != sup_errors.len() {
            return Err(invalid("sup and l2h error lists differ in length"));
        }
        let estimate = estimate_order(&hs, &sup_errors)?;
        let pass = match (band, estimate.least_squares) {
            (_, _) if estimate.exact => true,
            (Some(b), Some(o)) => b.contains(o),
            (None, Some(_)) => true,
            (_, None) => false,
        };
        Ok(Self {
            hs,
            sup_errors,
            l2h_errors,
            estimate,
            band,
            pass,
        })
    }

    pub const CSV_HEADER: &'static str = "h,sup_error,l2h_error,pairwise_order,ls_order,expected_order,pass";

    /// One row per rung; the pairwise order on row `m` compares rungs
    /// `m - 1` and `m`.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for m in 0..self.hs.len() {
            let pair = if m == 0 { None } else { self.estimate.pairwise[m - 1] };
            s.push_str(&format!(
                "{:e},{:e},{:e},{},{},{},{}\n",
                self.hs[m],
                self.sup_errors[m],
                self.l2h_errors[m],
                opt(pair),
                opt(self.estimate.least_squares),
                opt(self.band.map(|b| b.expected)),
                self.pass
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;

    #[test]
    fn small_weights() {
        assert_eq!(vandermonde_weights(0, 2).unwrap().beta, vec![1.0]);
        let w = vandermonde_weights(1, 2).unwrap().beta;
        assert!((w[0] + 1.0).abs() < 1e-14 && (w[1] - 2.0).abs() < 1e-14);
        let w = vandermonde_weights(1, 4).unwrap().beta;
        assert!((w[0] + 1.0 / 3.0).abs() < 1e-14 && (w[1] - 4.0 / 3.0).abs() < 1e-14);
        let w = vandermonde_weights(2, 2).unwrap().beta;
        for (a, b) in w.iter().zip([1.0 / 3.0, -2.0, 8.0 / 3.0]) {
            assert!((a - b).abs() < 1e-13);
        }
        assert!(vandermonde_weights(13, 2).is_err());
        assert!(vandermonde_weights(1, 3).is_err());
    }

    #[test]
    fn identities_up_to_twelve() {
        for base in [2, 4] {
            for k in 0..=MAX_LEVEL {
                let w = vandermonde_weights(k, base).unwrap();
                assert!(w.identity_residual() < 1e-12 * w.beta.iter().map(|b| b.abs()).sum::<f64>());
            }
        }
    }

    #[test]
    fn restriction() {
        let g = TorusGrid::cube(1, 1.0, 8).unwrap();
        let f = GridField::new(g.clone(), (0..8).map(|v| v as f64).collect()).unwrap();
        assert_eq!(restrict_to_coarse(&f, 0).unwrap(), f);
        assert_eq!(restrict_to_coarse(&f, 1).unwrap().values(), &[0.0, 2.0, 4.0, 6.0]);
        assert!(restrict_to_coarse(&f, 3).is_err());
    }

    #[test]
    fn order_estimates() {
        let e = estimate_order(&[0.1, 0.05], &[0.04, 0.01]).unwrap();
        assert!((e.pairwise[0].unwrap() - 2.0).abs() < 1e-12);
        let hs = [0.1, 0.05, 0.025, 0.0125];
        let errs: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powi(3)).collect();
        assert!((estimate_order(&hs, &errs).unwrap().least_squares.unwrap() - 3.0).abs() < 1e-10);
        let e = estimate_order(&hs[..3], &[1e-3, 2.6e-4, 6.4e-5]).unwrap();
        assert!((e.pairwise[0].unwrap() - 1.943).abs() < 1e-3);
        assert!((e.pairwise[1].unwrap() - 2.0224).abs() < 1e-3);
        assert!((e.least_squares.unwrap() - 1.983).abs() < 1e-3);
        let z = estimate_order(&hs[..2], &[0.0, 0.0]).unwrap();
        assert!(z.exact && z.least_squares.is_none() && z.notes.len() == 2);
        assert!(estimate_order(&[0.1], &[0.1]).is_err());
        assert!(estimate_order(&[0.1, 0.03], &[0.1, 0.01]).is_err());
    }

    #[test]
    fn report_csv_rows() {
        let r = ConvergenceReport::new(
            vec![0.1, 0.05, 0.025],
            vec![4e-2, 1e-2, 2.5e-3],
            vec![1.0, 1.0, 1.0],
            Some(OrderBand::new(2.0, 1.8, 2.3)),
        )
        .unwrap();
        assert!(r.pass);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(1).unwrap().contains(",,"));
    }
}

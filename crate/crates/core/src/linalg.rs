//! Sparse storage and the two solvers behind the implicit step: a banded LU
//! with partial pivoting for small systems and Jacobi-preconditioned
//! BiCGSTAB for large ones.

use crate::error::{SolveFailure, SolveFailureKind};

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; duplicate columns are
    /// summed and columns sorted.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                debug_assert!(c < n);
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| self.row(r).find(|(c, _)| *c == r).map_or(0.0, |e| e.1))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Dense copy, row-major. Meant for small matrices and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }
}

/// LU factors of a permuted banded matrix.
///
/// `perm[i]` is the band position of original unknown `i`; the permutation
/// is chosen by the caller to keep the bandwidth small.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row-major band rows of width `2 kl + ku + 1`; entry `(i, j)` lives at
    /// `i * width + (j + kl - i)`.
    band: Vec<f64>,
    /// Multipliers of column `k`, rows `k+1..=k+kl`.
    lower: Vec<f64>,
    pivots: Vec<usize>,
    perm: Vec<usize>,
}

impl BandedLu {
    pub fn factor(matrix: &CsrMatrix, perm: Vec<usize>) -> Result<Self, SolveFailure> {
        let n = matrix.dim();
        assert_eq!(perm.len(), n);
        let (mut kl, mut ku) = (0usize, 0usize);
        for r in 0..n {
            for (c, _) in matrix.row(r) {
                let (pr, pc) = (perm[r], perm[c]);
                if pr > pc {
                    kl = kl.max(pr - pc);
                } else {
                    ku = ku.max(pc - pr);
                }
            }
        }
        let width = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            band: vec![0.0; n * width],
            lower: vec![0.0; n * kl],
            pivots: vec![0; n],
            perm,
        };
        for r in 0..n {
            for (c, v) in matrix.row(r) {
                let (pr, pc) = (lu.perm[r], lu.perm[c]);
                *lu.at_mut(pr, pc) += v;
            }
        }
        let tiny = 1e-14 * matrix.max_abs().max(f64::MIN_POSITIVE);
        let reach = kl + ku;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.at(k, k).abs();
            for i in k + 1..=last_row {
                let v = lu.at(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best.is_nan() || best <= tiny {
                return Err(SolveFailure::new(SolveFailureKind::Singular {
                    row: k,
                    pivot: best,
                }));
            }
            lu.pivots[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = lu.at(k, j);
                    let b = lu.at(p, j);
                    *lu.at_mut(k, j) = b;
                    *lu.at_mut(p, j) = a;
                }
            }
            let pivot = lu.at(k, k);
            for i in k + 1..=last_row {
                let l = lu.at(i, k) / pivot;
                lu.lower[k * kl + (i - k - 1)] = l;
                *lu.at_mut(i, k) = 0.0;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let u = lu.at(k, j);
                        *lu.at_mut(i, j) -= l * u;
                    }
                }
            }
        }
        Ok(lu)
    }

    #[inline]
    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.band[i * self.width() + (j + self.kl - i)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let w = self.width();
        &mut self.band[i * w + (j + self.kl - i)]
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut b = vec![0.0; n];
        for (i, v) in rhs.iter().enumerate() {
            b[self.perm[i]] = *v;
        }
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            let last_row = (k + self.kl).min(n - 1);
            for (off, bi) in b[k + 1..=last_row].iter_mut().enumerate() {
                *bi -= self.lower[k * self.kl + off] * bk;
            }
        }
        let reach = self.kl + self.ku;
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut s = b[k];
            for (j, bj) in b.iter().enumerate().take(last_col + 1).skip(k + 1) {
                s -= self.at(k, j) * bj;
            }
            b[k] = s / self.at(k, k);
        }
        self.perm.iter().map(|&p| b[p]).collect()
    }
}

/// Settings for [`bicgstab`].
#[derive(Debug, Clone, Copy)]
pub struct IterativeSettings {
    pub rel_tol: f64,
    pub max_iter: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned BiCGSTAB starting from `x0`. Succeeds when the true
/// residual `|b - Ax| / |b|` is at most `rel_tol`; restarts on breakdown.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x0: Vec<f64>,
    settings: IterativeSettings,
) -> Result<(Vec<f64>, usize), SolveFailure> {
    let n = a.dim();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precond = |v: &[f64], out: &mut [f64]| {
        for ((o, x), d) in out.iter_mut().zip(v).zip(&inv_diag) {
            *o = x * d;
        }
    };
    let mut x = x0;
    let mut r = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let residual = |x: &[f64], r: &mut [f64], tmp: &mut [f64]| {
        a.matvec(x, tmp);
        for i in 0..n {
            r[i] = b[i] - tmp[i];
        }
        norm(r) / bnorm
    };
    let mut rel = residual(&x, &mut r, &mut tmp);
    let mut iterations = 0;
    let (mut p, mut v, mut y, mut s, mut z, mut t) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    // Outer loop restarts the Krylov recursion from the current iterate.
    while rel > settings.rel_tol && iterations < settings.max_iter {
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        p.iter_mut().for_each(|e| *e = 0.0);
        v.iter_mut().for_each(|e| *e = 0.0);
        loop {
            if iterations >= settings.max_iter {
                break;
            }
            iterations += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 || omega == 0.0 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            precond(&p, &mut y);
            a.matvec(&y, &mut v);
            let denom = dot(&r_hat, &v);
            if denom.abs() < 1e-300 {
                break;
            }
            alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm(&s) / bnorm <= 0.5 * settings.rel_tol {
                for i in 0..n {
                    x[i] += alpha * y[i];
                }
                break;
            }
            precond(&s, &mut z);
            a.matvec(&z, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * y[i] + omega * z[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm(&r) / bnorm <= 0.5 * settings.rel_tol {
                break;
            }
        }
        let previous = rel;
        rel = residual(&x, &mut r, &mut tmp);
        if !rel.is_finite() || (rel >= previous && rel > settings.rel_tol && iterations >= settings.max_iter) {
            break;
        }
    }
    if rel <= settings.rel_tol && x.iter().all(|v| v.is_finite()) {
        Ok((x, iterations))
    } else {
        Err(SolveFailure::new(SolveFailureKind::Stalled {
            residual: rel,
            iterations,
        }))
    }
}

/// Storage order that folds each periodic axis (`0, N-1, 1, N-2, ...`) so
/// that wraparound couplings stay near the diagonal.
pub fn folded_ordering(points: &[usize]) -> Vec<usize> {
    let fold = |j: usize, n: usize| if 2 * j < n { 2 * j } else { 2 * (n - 1 - j) + 1 };
    let total: usize = points.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut multi = vec![0usize; points.len()];
    for _ in 0..total {
        let mut pos = 0;
        for (a, &n) in points.iter().enumerate() {
            pos = pos * n + fold(multi[a], n);
        }
        out.push(pos);
        for a in (0..points.len()).rev() {
            multi[a] += 1;
            if multi[a] < points[a] {
                break;
            }
            multi[a] = 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periodic_laplacian(n: usize, shift: f64) -> CsrMatrix {
        CsrMatrix::from_rows(
            (0..n)
                .map(|i| {
                    vec![
                        (i, shift + 2.0),
                        ((i + 1) % n, -1.0),
                        ((i + n - 1) % n, -0.5),
                        ((i + 2) % n, 0.1),
                    ]
                })
                .collect(),
        )
    }

    fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; b.len()];
        a.matvec(x, &mut ax);
        ax.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn csr_merges_duplicates() {
        let m = CsrMatrix::from_rows(vec![vec![(1, 1.0), (0, 2.0), (1, 3.0)], vec![(1, 1.0)]]);
        assert_eq!(m.to_dense(), vec![vec![2.0, 4.0], vec![0.0, 1.0]]);
        assert_eq!(m.diagonal(), vec![2.0, 1.0]);
        assert_eq!(m.nnz(), 3);
    }

    #[test]
    fn folded_ordering_is_a_permutation_with_narrow_band() {
        let ord = folded_ordering(&[6]);
        assert_eq!(ord, vec![0, 2, 4, 5, 3, 1]);
        let mut sorted = folded_ordering(&[5, 4]);
        sorted.sort();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
        let lu = BandedLu::factor(&periodic_laplacian(64, 1.0), folded_ordering(&[64])).unwrap();
        let (kl, ku) = lu.bandwidths();
        assert!(kl <= 4 && ku <= 4, "{kl} {ku}");
    }

    #[test]
    fn banded_lu_solves_periodic_system() {
        let a = periodic_laplacian(40, 0.3);
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin()).collect();
        let lu = BandedLu::factor(&a, folded_ordering(&[40])).unwrap();
        let x = lu.solve(&b);
        assert!(residual(&a, &x, &b) < 1e-13);
    }

    #[test]
    fn banded_lu_pivots() {
        // Zero leading diagonal forces a row exchange.
        let a = CsrMatrix::from_rows(vec![
            vec![(1, 1.0), (2, 2.0)],
            vec![(0, 3.0), (1, 1.0)],
            vec![(0, 1.0), (1, 1.0), (2, 1.0)],
        ]);
        let lu = BandedLu::factor(&a, vec![0, 1, 2]).unwrap();
        let b = [1.0, 2.0, 3.0];
        assert!(residual(&a, &lu.solve(&b), &b) < 1e-14);
    }

    #[test]
    fn banded_lu_detects_singularity() {
        let a = CsrMatrix::from_rows(vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 1.0), (1, 1.0)]]);
        let err = BandedLu::factor(&a, vec![0, 1]).unwrap_err();
        assert!(matches!(err.kind, SolveFailureKind::Singular { .. }));
    }

    #[test]
    fn bicgstab_converges() {
        let a = periodic_laplacian(200, 0.5);
        let b: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).cos()).collect();
        let settings = IterativeSettings {
            rel_tol: 1e-11,
            max_iter: 2000,
        };
        let (x, _) = bicgstab(&a, &b, b.clone(), settings).unwrap();
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(residual(&a, &x, &b) <= 1e-11 * bn);
        let (z, it) = bicgstab(&a, &vec![0.0; 200], vec![1.0; 200], settings).unwrap();
        assert!(z.iter().all(|v| *v == 0.0) && it == 0);
    }

    #[test]
    fn bicgstab_reports_stall() {
        let a = CsrMatrix::from_rows(vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 1.0), (1, 1.0)]]);
        let settings = IterativeSettings {
            rel_tol: 1e-11,
            max_iter: 20,
        };
        let err = bicgstab(&a, &[1.0, -1.0], vec![0.0, 0.0], settings).unwrap_err();
        assert!(matches!(err.kind, SolveFailureKind::Stalled { .. }));
    }
}

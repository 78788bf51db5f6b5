//! Periodic lattices, grid functions, shift and difference operators, and
//! discrete norms.
//!
//! A [`TorusGrid`] with mesh `h` holds the points `(j_1 h, ..., j_d h)` with
//! `0 <= j_a < N_a`, and all index arithmetic wraps modulo `N_a`. Fields are
//! stored row-major (last axis fastest). Every difference operator is applied
//! matrix-free through precomputed neighbor permutations.

use crate::error::{invalid, Error, Result};

/// Relative tolerance on isotropy of the mesh and on mesh arguments.
const MESH_RTOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct TorusGrid {
    points: Vec<usize>,
    strides: Vec<usize>,
    h: f64,
}

/// Grids are equal when they have the same point counts and meshes agreeing
/// to rounding.
impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points && (self.h - other.h).abs() <= MESH_RTOL * self.h
    }
}

impl TorusGrid {
    /// Builds the grid with `points[a]` nodes along a torus axis of length
    /// `periods[a]`. The mesh must be the same on every axis.
    pub fn new(dim: usize, periods: &[f64], points: &[usize]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGrid("dimension must be at least 1".into()));
        }
        if periods.len() != dim || points.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} periods and point counts, got {} and {}",
                periods.len(),
                points.len()
            )));
        }
        if let Some(p) = periods.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::InvalidGrid(format!("period {p} is not positive")));
        }
        if let Some(n) = points.iter().find(|n| **n < 2) {
            return Err(Error::InvalidGrid(format!(
                "each axis needs at least 2 points, got {n}"
            )));
        }
        let h = periods[0] / points[0] as f64;
        for (a, (p, n)) in periods.iter().zip(points).enumerate().skip(1) {
            let ha = p / *n as f64;
            if (ha - h).abs() > 1e-14 * h {
                return Err(Error::InvalidGrid(format!(
                    "anisotropic mesh: axis 0 has h = {h}, axis {a} has h = {ha}"
                )));
            }
        }
        let mut strides = vec![1; dim];
        for a in (0..dim - 1).rev() {
            strides[a] = strides[a + 1] * points[a + 1];
        }
        Ok(Self {
            points: points.to_vec(),
            strides,
            h,
        })
    }

    /// Grid with `n` points along every axis of a cube of side `period`.
    pub fn cube(dim: usize, period: f64, n: usize) -> Result<Self> {
        Self::new(dim, &vec![period; dim], &vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn periods(&self) -> Vec<f64> {
        self.points.iter().map(|n| *n as f64 * self.h).collect()
    }

    /// Total number of lattice points.
    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `h^d`, the volume attached to one lattice point.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (o, s) in out.iter_mut().zip(&self.strides) {
            *o = idx / s;
            idx %= s;
        }
        out
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.strides)
            .map(|(j, s)| j * s)
            .sum()
    }

    /// Coordinates of lattice point `idx`.
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .into_iter()
            .map(|j| j as f64 * self.h)
            .collect()
    }

    /// All point coordinates, in storage order.
    pub fn all_coords(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.coords(i)).collect()
    }

    /// For every point `x`, the storage index of `x + h * offset` on the torus.
    pub fn neighbor_table(&self, offset: &[i64]) -> Vec<usize> {
        assert_eq!(offset.len(), self.dim(), "offset dimension mismatch");
        let axis_maps: Vec<Vec<usize>> = self
            .points
            .iter()
            .zip(offset)
            .zip(&self.strides)
            .map(|((&n, &o), &s)| {
                let n_i = n as i64;
                (0..n_i).map(|j| ((j + o).rem_euclid(n_i)) as usize * s).collect()
            })
            .collect();
        let mut table = Vec::with_capacity(self.len());
        let mut multi = vec![0usize; self.dim()];
        for _ in 0..self.len() {
            table.push(
                multi
                    .iter()
                    .zip(&axis_maps)
                    .map(|(j, m)| m[*j])
                    .sum::<usize>(),
            );
            for a in (0..self.dim()).rev() {
                multi[a] += 1;
                if multi[a] < self.points[a] {
                    break;
                }
                multi[a] = 0;
            }
        }
        table
    }

    /// The grid with `factor` times as many points per axis (mesh `h / factor`).
    pub fn refined(&self, factor: usize) -> Self {
        assert!(factor >= 1);
        let points: Vec<usize> = self.points.iter().map(|n| n * factor).collect();
        let mut g = Self::new(self.dim(), &self.periods(), &points)
            .expect("refinement of a valid grid is valid");
        g.h = self.h / factor as f64;
        g
    }

    /// The grid with mesh `h * factor`; every axis count must be divisible.
    pub fn coarsened(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.points.iter().any(|n| n % factor != 0 || n / factor < 2) {
            return Err(Error::GridMismatch(format!(
                "cannot coarsen {:?} points by a factor of {factor}",
                self.points
            )));
        }
        let points: Vec<usize> = self.points.iter().map(|n| n / factor).collect();
        let mut g = Self::new(self.dim(), &self.periods(), &points)?;
        g.h = self.h * factor as f64;
        Ok(g)
    }

    /// If `self` refines `coarse` uniformly (same torus, integer point ratio),
    /// returns the ratio.
    pub fn refinement_factor(&self, coarse: &TorusGrid) -> Option<usize> {
        if self.dim() != coarse.dim() {
            return None;
        }
        let factor = self.points[0] / coarse.points[0];
        if factor == 0 {
            return None;
        }
        let same_torus = self
            .periods()
            .iter()
            .zip(coarse.periods())
            .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs());
        let nested = self
            .points
            .iter()
            .zip(&coarse.points)
            .all(|(f, c)| *f == c * factor);
        (same_torus && nested).then_some(factor)
    }

    /// Samples `f` at every lattice point.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Result<GridField> {
        let mut x = vec![0.0; self.dim()];
        let mut values = Vec::with_capacity(self.len());
        for idx in 0..self.len() {
            self.write_coords(idx, &mut x);
            values.push(f(&x));
        }
        GridField::new(self.clone(), values)
    }

    pub(crate) fn write_coords(&self, mut idx: usize, out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(&self.strides) {
            *o = (idx / s) as f64 * self.h;
            idx %= s;
        }
    }

    /// Validates a signed mesh argument against this grid and returns it.
    pub(crate) fn check_mesh(&self, h: f64) -> Result<f64> {
        if h == 0.0 {
            return Err(Error::ZeroMesh);
        }
        if !h.is_finite() || (h.abs() - self.h).abs() > MESH_RTOL * self.h {
            return Err(Error::MeshMismatch {
                given: h,
                grid: self.h,
            });
        }
        Ok(h)
    }
}

/// A finite set of integer displacement vectors containing the origin.
///
/// The origin is always stored first; the remaining vectors keep their input
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stencil {
    dim: usize,
    vectors: Vec<Vec<i64>>,
}

impl Stencil {
    pub fn new(dim: usize, vectors: Vec<Vec<i64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidStencil("dimension must be at least 1".into()));
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::InvalidStencil(format!(
                "vector {v:?} does not have dimension {dim}"
            )));
        }
        for (i, v) in vectors.iter().enumerate() {
            if vectors[..i].contains(v) {
                return Err(Error::InvalidStencil(format!("duplicate vector {v:?}")));
            }
        }
        let origin = vec![0; dim];
        let Some(pos) = vectors.iter().position(|v| *v == origin) else {
            return Err(Error::InvalidStencil("the origin must be included".into()));
        };
        let mut vectors = vectors;
        let o = vectors.remove(pos);
        vectors.insert(0, o);
        Ok(Self { dim, vectors })
    }

    /// `{0, e_1, ..., e_d}`.
    pub fn unit_basis(dim: usize) -> Self {
        let mut vectors = vec![vec![0; dim]];
        for a in 0..dim {
            let mut e = vec![0; dim];
            e[a] = 1;
            vectors.push(e);
        }
        Self { dim, vectors }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of vectors including the origin.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vectors(&self) -> &[Vec<i64>] {
        &self.vectors
    }

    pub fn vector(&self, idx: usize) -> &[i64] {
        &self.vectors[idx]
    }

    /// Indices and vectors of the nonzero members.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, &[i64])> {
        self.vectors
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, v)| (i, v.as_slice()))
    }

    pub fn index_of(&self, v: &[i64]) -> Option<usize> {
        self.vectors.iter().position(|w| w == v)
    }
}

/// Discrete sup norm and `l2h = sqrt(h^d sum |v|^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub sup: f64,
    pub l2h: f64,
}

/// A real function on the lattice of a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "field has {} values but the grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at index {pos}")));
        }
        Ok(Self { grid, values })
    }

    /// Skips the finiteness scan; callers guarantee the invariant.
    pub(crate) fn from_parts(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self::from_parts(grid.clone(), vec![0.0; grid.len()])
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        assert!(c.is_finite());
        Self::from_parts(grid.clone(), vec![c; grid.len()])
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn map_values(&self, f: impl Fn(usize) -> f64) -> Self {
        Self::from_parts(self.grid.clone(), (0..self.values.len()).map(f).collect())
    }

    fn check_vector(&self, lambda: &[i64]) -> Result<()> {
        if lambda.len() != self.grid.dim() {
            return Err(Error::InvalidStencil(format!(
                "vector {lambda:?} does not match grid dimension {}",
                self.grid.dim()
            )));
        }
        Ok(())
    }

    /// `x -> phi(x + s h lambda)` with periodic wraparound.
    pub fn shift(&self, lambda: &[i64], s: i64) -> Result<Self> {
        self.check_vector(lambda)?;
        let offset: Vec<i64> = lambda.iter().map(|l| l * s).collect();
        let table = self.grid.neighbor_table(&offset);
        Ok(self.map_values(|i| self.values[table[i]]))
    }

    /// `(phi(x + h lambda) - phi(x)) / h` for signed `h`; identity for
    /// `lambda = 0`. `|h|` must equal the grid mesh.
    pub fn forward_difference(&self, lambda: &[i64], h: f64) -> Result<Self> {
        self.check_vector(lambda)?;
        let h = self.grid.check_mesh(h)?;
        if lambda.iter().all(|l| *l == 0) {
            return Ok(self.clone());
        }
        let s = h.signum() as i64;
        let offset: Vec<i64> = lambda.iter().map(|l| l * s).collect();
        let table = self.grid.neighbor_table(&offset);
        Ok(self.map_values(|i| (self.values[table[i]] - self.values[i]) / h))
    }

    /// `(phi(x + h lambda) - phi(x - h lambda)) / (2h)`; identity for
    /// `lambda = 0`. Even in the sign of `h`.
    pub fn symmetric_difference(&self, lambda: &[i64], h: f64) -> Result<Self> {
        self.check_vector(lambda)?;
        let h = self.grid.check_mesh(h)?.abs();
        if lambda.iter().all(|l| *l == 0) {
            return Ok(self.clone());
        }
        let neg: Vec<i64> = lambda.iter().map(|l| -l).collect();
        let plus = self.grid.neighbor_table(lambda);
        let minus = self.grid.neighbor_table(&neg);
        Ok(self.map_values(|i| (self.values[plus[i]] - self.values[minus[i]]) / (2.0 * h)))
    }

    /// The product `delta_{h,l_1} ... delta_{h,l_p}` of forward differences.
    ///
    /// Factors are applied in a canonical (sorted) order so the result is
    /// bit-identical for every permutation of `lambdas`.
    pub fn composed_difference(&self, lambdas: &[Vec<i64>], h: f64) -> Result<Self> {
        if lambdas.is_empty() {
            return Ok(self.clone());
        }
        self.grid.check_mesh(h)?;
        let mut sorted: Vec<&Vec<i64>> = lambdas.iter().collect();
        sorted.sort();
        let mut out = self.clone();
        for lambda in sorted {
            out = out.forward_difference(lambda, h)?;
        }
        Ok(out)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn l2h_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn norms(&self) -> Norms {
        Norms {
            sup: self.sup_norm(),
            l2h: self.l2h_norm(),
        }
    }

    /// Discrete L2 inner product `h^d sum f g`.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid, "inner product across grids");
        self.grid.cell_volume()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// `sqrt(sum over (l_1..l_r) in stencil^r of l2h(delta_{h,l_1}..delta_{h,l_r} phi)^2)`.
    pub fn discrete_sobolev_norm(&self, stencil: &Stencil, r: usize, h: f64) -> Result<f64> {
        if stencil.dim() != self.grid.dim() {
            return Err(Error::InvalidStencil("stencil and grid dimensions differ".into()));
        }
        self.grid.check_mesh(h)?;
        fn walk(
            field: &GridField,
            stencil: &Stencil,
            depth: usize,
            h: f64,
            acc: &mut f64,
        ) -> Result<()> {
            if depth == 0 {
                let n = field.l2h_norm();
                *acc += n * n;
                return Ok(());
            }
            for lambda in stencil.vectors() {
                let next = field.forward_difference(lambda, h)?;
                walk(&next, stencil, depth - 1, h, acc)?;
            }
            Ok(())
        }
        let mut acc = 0.0;
        walk(self, stencil, r, h, &mut acc)?;
        Ok(acc.sqrt())
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        assert_eq!(self.grid, other.grid, "axpy across grids");
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map_values(|i| a * self.values[i])
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.grid, other.grid, "sum across grids");
        self.map_values(|i| self.values[i] + other.values[i])
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.grid, other.grid, "difference across grids");
        self.map_values(|i| self.values[i] - other.values[i])
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.grid, other.grid, "product across grids");
        self.map_values(|i| self.values[i] * other.values[i])
    }

    /// Values at the points of the grid coarser by `factor` on every axis.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        if factor == 1 {
            return Ok(self.clone());
        }
        let coarse = self.grid.coarsened(factor)?;
        let mut values = Vec::with_capacity(coarse.len());
        for idx in 0..coarse.len() {
            let multi: Vec<usize> = coarse
                .multi_index(idx)
                .into_iter()
                .map(|j| j * factor)
                .collect();
            values.push(self.values[self.grid.linear_index(&multi)]);
        }
        Ok(Self::from_parts(coarse, values))
    }
}

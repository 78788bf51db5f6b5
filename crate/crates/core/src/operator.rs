//! Matrix-free application and sparse assembly of `L^h_i` and `M^{h,rho}_i`.

use std::borrow::Cow;
use std::collections::BTreeMap;

use crate::coefficient::{Coefficient, Sampled};
use crate::error::{invalid, Error, Result};
use crate::grid::{GridField, TorusGrid};
use crate::linalg::CsrMatrix;
use crate::problem::DifferenceScheme;

/// Weights of a difference operator keyed by lattice offset.
type Taps = BTreeMap<Vec<i64>, f64>;

fn symmetric_taps(lambda: &[i64], h: f64) -> Taps {
    let mut t = Taps::new();
    if lambda.iter().all(|l| *l == 0) {
        t.insert(lambda.to_vec(), 1.0);
    } else {
        let h = h.abs();
        t.insert(lambda.to_vec(), 0.5 / h);
        t.insert(lambda.iter().map(|l| -l).collect(), -0.5 / h);
    }
    t
}

/// Taps of `delta_{h,lambda}` for signed `h`.
fn forward_taps(lambda: &[i64], h: f64) -> Taps {
    let s = h.signum() as i64;
    let mut t = Taps::new();
    t.insert(lambda.iter().map(|l| l * s).collect(), 1.0 / h);
    *t.entry(vec![0; lambda.len()]).or_insert(0.0) -= 1.0 / h;
    t
}

fn compose(a: &Taps, b: &Taps) -> Taps {
    let mut out = Taps::new();
    for (oa, wa) in a {
        for (ob, wb) in b {
            let o: Vec<i64> = oa.iter().zip(ob).map(|(x, y)| x + y).collect();
            *out.entry(o).or_insert(0.0) += wa * wb;
        }
    }
    out.retain(|_, w| *w != 0.0);
    out
}

#[derive(Debug, Clone)]
enum Slot {
    /// Sampled once; the coefficient does not depend on time.
    Fixed(Sampled),
    Dynamic(Coefficient),
}

#[derive(Debug, Clone)]
struct Term {
    coef: Slot,
    scale: f64,
    /// `(neighbor table index, weight)`.
    taps: Vec<(usize, f64)>,
}

/// A linear difference operator `sum_t c_t(i, x) D_t` on a fixed grid, with
/// neighbor tables precomputed.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: TorusGrid,
    tables: Vec<Vec<usize>>,
    terms: Vec<Term>,
}

impl DiscreteOperator {
    fn build(grid: &TorusGrid, parts: Vec<(Coefficient, f64, Taps)>) -> Self {
        let mut offsets: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
        let mut terms = Vec::new();
        for (coef, scale, taps) in parts {
            if coef.is_zero() || taps.is_empty() {
                continue;
            }
            let taps = taps
                .into_iter()
                .map(|(o, w)| {
                    let next = offsets.len();
                    (*offsets.entry(o).or_insert(next), w)
                })
                .collect();
            let coef = if coef.is_time_independent() {
                Slot::Fixed(coef.sample(grid, 0))
            } else {
                Slot::Dynamic(coef)
            };
            terms.push(Term { coef, scale, taps });
        }
        let mut tables = vec![Vec::new(); offsets.len()];
        for (o, k) in offsets {
            tables[k] = grid.neighbor_table(&o);
        }
        Self {
            grid: grid.clone(),
            tables,
            terms,
        }
    }

    fn check_scheme(scheme: &DifferenceScheme, grid: &TorusGrid, h: f64) -> Result<f64> {
        if scheme.stencil().dim() != grid.dim() {
            return Err(Error::InvalidStencil(format!(
                "stencil dimension {} on a {}-dimensional grid",
                scheme.stencil().dim(),
                grid.dim()
            )));
        }
        grid.check_mesh(h)
    }

    /// `L^h`: `sum a^{lm} d_l d_m + sum (p^l delta_{h,l} - q^l delta_{-h,l})`.
    pub fn l_operator(scheme: &DifferenceScheme, grid: &TorusGrid, h: f64) -> Result<Self> {
        let h = Self::check_scheme(scheme, grid, h)?;
        let st = scheme.stencil();
        let mut parts = Vec::new();
        for l in 0..st.len() {
            for m in 0..st.len() {
                let c = scheme.a(l, m);
                if !c.is_zero() {
                    let taps = compose(&symmetric_taps(st.vector(l), h), &symmetric_taps(st.vector(m), h));
                    parts.push((c.clone(), 1.0, taps));
                }
            }
        }
        for (l, lambda) in st.nonzero() {
            if !scheme.p(l).is_zero() {
                parts.push((scheme.p(l).clone(), 1.0, forward_taps(lambda, h)));
            }
            if !scheme.q(l).is_zero() {
                parts.push((scheme.q(l).clone(), -1.0, forward_taps(lambda, -h)));
            }
        }
        Ok(Self::build(grid, parts))
    }

    /// `M^{h,rho} = sum_l b^{l rho} d_l`, `rho` zero-based.
    pub fn m_operator(scheme: &DifferenceScheme, grid: &TorusGrid, h: f64, rho: usize) -> Result<Self> {
        let h = Self::check_scheme(scheme, grid, h)?;
        if rho >= scheme.drivers() {
            return Err(invalid(format!(
                "driver index {rho} out of range for {} drivers",
                scheme.drivers()
            )));
        }
        let st = scheme.stencil();
        let parts = (0..st.len())
            .filter(|&l| !scheme.b(l, rho).is_zero())
            .map(|l| (scheme.b(l, rho).clone(), 1.0, symmetric_taps(st.vector(l), h)))
            .collect();
        Ok(Self::build(grid, parts))
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// True when no term survives (the operator is identically zero).
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_time_independent(&self) -> bool {
        self.terms.iter().all(|t| matches!(t.coef, Slot::Fixed(_)))
    }

    fn sampled<'t>(&self, term: &'t Term, i: usize) -> Cow<'t, Sampled> {
        match &term.coef {
            Slot::Fixed(s) => Cow::Borrowed(s),
            Slot::Dynamic(c) => Cow::Owned(c.sample(&self.grid, i)),
        }
    }

    /// The operator at time index `i` applied to `phi`.
    pub fn apply(&self, phi: &GridField, i: usize) -> Result<GridField> {
        if phi.grid() != &self.grid {
            return Err(Error::GridMismatch("field and operator live on different grids".into()));
        }
        let v = phi.values();
        let mut out = vec![0.0; v.len()];
        for term in &self.terms {
            let c = self.sampled(term, i);
            for (x, o) in out.iter_mut().enumerate() {
                let mut s = 0.0;
                for &(k, w) in &term.taps {
                    s += w * v[self.tables[k][x]];
                }
                *o += term.scale * c.at(x) * s;
            }
        }
        Ok(GridField::from_parts(self.grid.clone(), out))
    }

    /// Sparse matrix of `shift * I + scale * Op_i`.
    pub fn assemble(&self, i: usize, scale: f64, shift: f64) -> CsrMatrix {
        let n = self.grid.len();
        let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|x| vec![(x, shift)]).collect();
        for term in &self.terms {
            let c = self.sampled(term, i);
            for (x, row) in rows.iter_mut().enumerate() {
                let cx = scale * term.scale * c.at(x);
                if cx != 0.0 {
                    for &(k, w) in &term.taps {
                        row.push((self.tables[k][x], cx * w));
                    }
                }
            }
        }
        CsrMatrix::from_rows(rows)
    }
}

/// `L^h_i phi`, matrix-free.
pub fn apply_l(scheme: &DifferenceScheme, phi: &GridField, h: f64, i: usize) -> Result<GridField> {
    DiscreteOperator::l_operator(scheme, phi.grid(), h)?.apply(phi, i)
}

/// `M^{h,rho}_i phi` with zero-based `rho`.
pub fn apply_m(scheme: &DifferenceScheme, phi: &GridField, h: f64, rho: usize, i: usize) -> Result<GridField> {
    DiscreteOperator::m_operator(scheme, phi.grid(), h, rho)?.apply(phi, i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Stencil;
    use std::f64::consts::PI;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(1, &[1.0], &[n]).unwrap()
    }

    fn scheme_1d() -> DifferenceScheme {
        DifferenceScheme::new(Stencil::unit_basis(1), 1)
    }

    #[test]
    fn constant_field_is_annihilated() {
        let g = grid(16);
        let s = scheme_1d().with_a(1, 1, 0.7).with_a(0, 1, 0.2).with_b(1, 0, 0.4);
        let out = apply_l(&s, &GridField::constant(&g, 3.0), g.h(), 0).unwrap();
        assert!(out.sup_norm() < 1e-12);
        let m = apply_m(&s, &GridField::constant(&g, 3.0), g.h(), 0, 0).unwrap();
        assert!(m.sup_norm() < 1e-12);
    }

    #[test]
    fn squared_symmetric_difference_symbol() {
        let (n, k, a) = (32usize, 3.0, 0.8);
        let g = grid(n);
        let h = g.h();
        let s = scheme_1d().with_a(1, 1, a);
        let phi = g.sample(|x| (2.0 * PI * k * x[0]).cos()).unwrap();
        let out = apply_l(&s, &phi, h, 0).unwrap();
        let sym = -a * ((2.0 * PI * k * h).sin() / h).powi(2);
        for (o, p) in out.values().iter().zip(phi.values()) {
            assert!((o - sym * p).abs() < 1e-11);
        }
    }

    #[test]
    fn one_sided_terms_on_linear_data() {
        let g = grid(16);
        let h = g.h();
        let phi = g.sample(|x| x[0]).unwrap();
        let s = scheme_1d().with_p(1, 0.6);
        let out = apply_l(&s, &phi, h, 0).unwrap();
        for idx in 0..15 {
            assert!((out.values()[idx] - 0.6).abs() < 1e-12);
        }
        let s = scheme_1d().with_q(1, 0.6);
        let out = apply_l(&s, &phi, h, 0).unwrap();
        for idx in 1..16 {
            assert!((out.values()[idx] + 0.6).abs() < 1e-12);
        }
    }

    #[test]
    fn zeroth_order_noise_is_multiplication() {
        let g = grid(8);
        let phi = g.sample(|x| (2.0 * PI * x[0]).sin() + 0.3).unwrap();
        let s = scheme_1d().with_b(0, 0, 1.5);
        let out = apply_m(&s, &phi, g.h(), 0, 4).unwrap();
        assert_eq!(out.values(), phi.scaled(1.5).values());
        assert!(apply_m(&s, &phi, g.h(), 1, 0).is_err());
        assert!(apply_m(&s, &phi, 0.0, 0, 0).is_err());
    }

    #[test]
    fn assembled_matrix_matches_matrix_free() {
        let g = TorusGrid::new(2, &[1.0, 1.0], &[6, 6]).unwrap();
        let s = DifferenceScheme::new(Stencil::unit_basis(2), 0)
            .with_a(1, 1, Coefficient::spatial(|x| 1.0 + 0.5 * (2.0 * PI * x[1]).sin()))
            .with_a(1, 2, 0.2)
            .with_a(2, 1, 0.2)
            .with_a(2, 2, Coefficient::general(|i, x| 0.5 + 0.1 * i as f64 + x[0]))
            .with_a(0, 0, -0.3)
            .with_p(1, 0.4)
            .with_q(2, Coefficient::temporal(|i| 0.1 * i as f64));
        let op = DiscreteOperator::l_operator(&s, &g, g.h()).unwrap();
        assert!(!op.is_time_independent());
        let phi = g.sample(|x| (x[0] * 7.0).sin() * (x[1] * 3.0 + 1.0).cos()).unwrap();
        for i in [0, 3] {
            let free = op.apply(&phi, i).unwrap();
            let mat = op.assemble(i, 1.0, 0.0);
            let mut y = vec![0.0; g.len()];
            mat.matvec(phi.values(), &mut y);
            for (a, b) in free.values().iter().zip(&y) {
                assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn negative_mesh_swaps_one_sided_terms() {
        let g = grid(16);
        let phi = g.sample(|x| (2.0 * PI * x[0]).sin()).unwrap();
        let p = apply_l(&scheme_1d().with_p(1, 1.0), &phi, -g.h(), 0).unwrap();
        let q = apply_l(&scheme_1d().with_q(1, -1.0), &phi, g.h(), 0).unwrap();
        for (a, b) in p.values().iter().zip(q.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

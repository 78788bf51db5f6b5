use proptest::prelude::*;
use zakai_core::{
    apply_l, apply_m, estimate_order, vandermonde_weights, DifferenceScheme, GridField, Stencil, TorusGrid,
};

fn field(grid: &TorusGrid, v: Vec<f64>) -> GridField {
    GridField::new(grid.clone(), v).unwrap()
}

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn grid2() -> TorusGrid {
    TorusGrid::new(2, &[1.0, 0.5], &[6, 3]).unwrap()
}

fn scheme(c: &[f64]) -> DifferenceScheme {
    let st = Stencil::new(2, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, -1]]).unwrap();
    let mut s = DifferenceScheme::new(st, 1);
    for l in 0..4 {
        for m in 0..4 {
            s = s.with_a(l, m, c[4 * l + m]);
        }
        s = s.with_b(l, 0, c[16 + l]);
    }
    s.with_p(1, c[20].abs()).with_q(2, c[21].abs())
}

proptest! {
    #[test]
    fn summation_by_parts(phi in values(18), psi in values(18), l in 0usize..3) {
        let g = grid2();
        let lambda = [vec![1, 0], vec![0, 1], vec![1, -1]][l].clone();
        let (phi, psi, h) = (field(&g, phi), field(&g, psi), g.h());
        let sym = phi.symmetric_difference(&lambda, h).unwrap().inner(&psi)
            + phi.inner(&psi.symmetric_difference(&lambda, h).unwrap());
        let fwd = phi.forward_difference(&lambda, h).unwrap().inner(&psi)
            + phi.inner(&psi.forward_difference(&lambda, -h).unwrap());
        prop_assert!(sym.abs() < 1e-12 && fwd.abs() < 1e-12);
    }

    #[test]
    fn first_order_noise_operator_is_skew(phi in values(18), psi in values(18), b in values(4)) {
        let g = grid2();
        let st = Stencil::new(2, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, -1]]).unwrap();
        let mut s = DifferenceScheme::new(st, 1);
        for (l, c) in b.iter().enumerate().skip(1) {
            s = s.with_b(l, 0, *c);
        }
        let (phi, psi) = (field(&g, phi), field(&g, psi));
        let lhs = apply_m(&s, &phi, g.h(), 0, 0).unwrap().inner(&psi);
        let rhs = phi.inner(&apply_m(&s, &psi, g.h(), 0, 0).unwrap());
        prop_assert!((lhs + rhs).abs() < 1e-11);
    }

    #[test]
    fn operators_are_linear(phi in values(18), psi in values(18), c in values(22), a in -2.0f64..2.0) {
        let g = grid2();
        let s = scheme(&c);
        let (phi, psi, h) = (field(&g, phi), field(&g, psi), g.h());
        let mut combo = phi.clone();
        combo.axpy(a, &psi);
        let mut expect = apply_l(&s, &phi, h, 0).unwrap();
        expect.axpy(a, &apply_l(&s, &psi, h, 0).unwrap());
        let got = apply_l(&s, &combo, h, 0).unwrap();
        prop_assert!(got.sub(&expect).sup_norm() <= 1e-10 * (1.0 + expect.sup_norm()));
    }

    #[test]
    fn richardson_cancels_polynomial_error(c in values(4), k in 0usize..4, base in prop::sample::select(vec![2u32, 4])) {
        let w = vandermonde_weights(k, base).unwrap();
        let eps = 1.0 / base as f64;
        let value = |j: usize| -> f64 {
            let x = eps.powi(j as i32);
            (0..=k).map(|p| c.get(p).copied().unwrap_or(0.0) * x.powi(p as i32)).sum()
        };
        let combined: f64 = w.beta.iter().enumerate().map(|(j, b)| b * value(j)).sum();
        prop_assert!((combined - c[0]).abs() < 1e-10);
    }

    #[test]
    fn power_law_errors_give_their_exponent(p in 0.5f64..6.0, scale in 0.01f64..100.0) {
        let hs = [0.25, 0.125, 0.0625, 0.03125];
        let errors: Vec<f64> = hs.iter().map(|h: &f64| scale * h.powf(p)).collect();
        let est = estimate_order(&hs, &errors).unwrap();
        prop_assert!((est.least_squares.unwrap() - p).abs() < 1e-10);
    }
}

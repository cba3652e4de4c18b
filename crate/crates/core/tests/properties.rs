use std::sync::Arc;

use cartanlab::algebra::AlgebraElement;
use cartanlab::gauge::{covariant_coderivative, covariant_derivative, curvature, ym_energy};
use cartanlab::hodge::{hodge_decompose, laplacian, HodgeSolveConfig};
use cartanlab::immersion::{frame_field, split_connection, connection_form, Fixture};
use cartanlab::{Form, Grid, LieAlgebra};
use proptest::prelude::*;

fn alg(label: &str) -> Arc<LieAlgebra> {
    Arc::new(LieAlgebra::from_label(label).unwrap())
}

fn form_from(grid: &Grid, degree: usize, a: &Arc<LieAlgebra>, seed: &[f64]) -> Form {
    let len = Form::zeros(grid, degree, a).unwrap().data().len();
    let data = (0..len).map(|i| seed[i % seed.len()] * ((i * 7 + 3) as f64).sin()).collect();
    Form::from_data(grid, degree, a, data).unwrap()
}

fn element(v: &[f64]) -> AlgebraElement {
    AlgebraElement(v.to_vec())
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 5..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bracket_is_antisymmetric_and_bounded(label in prop::sample::select(vec!["so:3", "so:4", "so:5", "so:2,1", "abelian:3"]),
                                            x in prop::collection::vec(-1.0f64..1.0, 10),
                                            y in prop::collection::vec(-1.0f64..1.0, 10)) {
        let a = alg(label);
        let d = a.dim();
        let (x, y) = (element(&x[..d]), element(&y[..d]));
        let xy = a.bracket(&x, &y).unwrap();
        let yx = a.bracket(&y, &x).unwrap();
        prop_assert!((&xy + &yx).norm() <= 1e-15);
        prop_assert!(xy.norm() <= x.norm() * y.norm() * (1.0 + 1e-9) + 1e-15);
    }

    #[test]
    fn jacobi_holds(label in prop::sample::select(vec!["so:3", "so:4", "so:1,2", "so:2,2"]),
                    v in prop::collection::vec(-1.0f64..1.0, 18)) {
        let a = alg(label);
        let d = a.dim();
        let r = a.jacobi_residual(&element(&v[..d]), &element(&v[6..6 + d]), &element(&v[12..12 + d])).unwrap();
        prop_assert!(r <= 1e-14);
    }

    #[test]
    fn d_squared_and_star(n in 2usize..=4, k in 0usize..=4, seed in values()) {
        prop_assume!(k <= n);
        let g = Grid::cube(n, 4).unwrap();
        let f = form_from(&g, k, &alg("so:3"), &seed);
        if k + 2 <= n {
            prop_assert!(f.d().unwrap().d().unwrap().l2_norm() <= 1e-12 * f.l2_norm());
        }
        let sign = if (k * (n - k)) % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert_eq!(f.star().star(), f.scaled(sign));
    }

    #[test]
    fn codifferential_is_adjoint(n in 1usize..=3, k in 0usize..3, s1 in values(), s2 in values()) {
        prop_assume!(k < n);
        let g = Grid::new(&vec![5; n]).unwrap();
        let a = form_from(&g, k, &alg("so:4"), &s1);
        let b = form_from(&g, k + 1, &alg("so:4"), &s2);
        let lhs = a.d().unwrap().pairing(&b).unwrap();
        let rhs = a.pairing(&b.codiff().unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn graded_antisymmetry(p in 0usize..=2, q in 0usize..=2, s1 in values(), s2 in values()) {
        prop_assume!(p + q <= 3);
        let g = Grid::cube(3, 4).unwrap();
        let a = form_from(&g, p, &alg("so:3"), &s1);
        let b = form_from(&g, q, &alg("so:3"), &s2);
        let sign = if (p * q) % 2 == 0 { -1.0 } else { 1.0 };
        let r = a.wedge_bracket(&b).unwrap().lin_comb(1.0, &b.wedge_bracket(&a).unwrap(), -sign).unwrap();
        prop_assert!(r.l2_norm() <= 1e-13);
    }

    #[test]
    fn laplacian_commutes_with_d(k in 0usize..3, seed in values()) {
        let g = Grid::cube(3, 4).unwrap();
        let f = form_from(&g, k, &alg("abelian:2"), &seed);
        let r = laplacian(&f.d().unwrap()).unwrap().sub(&laplacian(&f).unwrap().d().unwrap()).unwrap();
        prop_assert!(r.l2_norm() <= 1e-10 * (1.0 + laplacian(&f).unwrap().l2_norm()));
    }

    #[test]
    fn hodge_pieces_reconstruct_and_are_orthogonal(k in 1usize..=2, seed in values()) {
        let g = Grid::cube(2, 8).unwrap();
        let f = form_from(&g, k, &alg("so:3"), &seed);
        let h = hodge_decompose(&f, &HodgeSolveConfig::default()).unwrap();
        prop_assert!(h.reconstruction_residual <= 1e-8 * f.l2_norm());
        let ex = h.exact_part().unwrap();
        let scale = f.l2_norm().powi(2);
        prop_assert!(ex.pairing(&h.rho).unwrap().abs() <= 1e-8 * scale);
        prop_assert!(ex.pairing(&h.harmonic).unwrap().abs() <= 1e-8 * scale);
        prop_assert!(h.rho.pairing(&h.harmonic).unwrap().abs() <= 1e-8 * scale);
    }

    #[test]
    fn covariant_coderivative_is_adjoint(k in 0usize..2, s1 in values(), s2 in values(), s3 in values()) {
        let g = Grid::cube(2, 5).unwrap();
        let al = alg("so:3");
        let a = form_from(&g, 1, &al, &s1);
        let w = form_from(&g, k, &al, &s2);
        let v = form_from(&g, k + 1, &al, &s3);
        let lhs = covariant_derivative(&a, &w).unwrap().pairing(&v).unwrap();
        let rhs = w.pairing(&covariant_coderivative(&a, &v).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn energy_is_curvature_norm_squared(seed in values()) {
        let g = Grid::cube(2, 4).unwrap();
        let a = form_from(&g, 1, &alg("so:3"), &seed);
        let e = ym_energy(&a).unwrap();
        let w = curvature(&a).unwrap().l2_norm();
        prop_assert!((e - w * w).abs() <= 1e-12 * (1.0 + e));
    }

    #[test]
    fn graph_frames_are_orthonormal_and_blocks_reassemble(amp in 0.0f64..0.3, k0 in -2i32..=2, k1 in -2i32..=2) {
        let g = Grid::cube(2, 16).unwrap();
        let u = Fixture::Graph { amplitude: amp, wavevector: vec![k0, k1] }.sample(&g).unwrap();
        let f = frame_field(&u).unwrap();
        prop_assert!(f.orthonormality_defect() <= 1e-10);
        for p in 0..g.len() {
            prop_assert!((f.determinant(p) - 1.0).abs() <= 1e-10);
        }
        let omega = connection_form(&f).unwrap();
        let blocks = split_connection(&omega, 2).unwrap();
        prop_assert_eq!(blocks.assemble().unwrap(), omega);
    }
}

use hessianlab::app::parse_expression;
use hessianlab::cone::{
    d_matrix, gamma_m_contains, garding_gap, sigma_k, sigma_k_minors, HermitianMatrix,
};
use hessianlab::glue::smooth_max;
use hessianlab::grid::{GridField, GridGeometry};
use hessianlab::io::{read_field, write_field};
use hessianlab::sampling::{random_cone_member, random_hermitian, rng};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use std::sync::Arc;

fn hermitian(n: usize, seed: u64) -> HermitianMatrix {
    random_hermitian(&mut rng(seed), n, 1.0)
}

fn unitary(n: usize, seed: u64) -> DMatrix<Complex64> {
    let h = random_hermitian(&mut rng(seed ^ 0x9e37), n, 1.0);
    let g = DMatrix::from_fn(n, n, |p, q| h.get(p, q) + Complex64::new((p + 2 * q) as f64 * 0.1, 0.3));
    g.qr().q()
}

fn conjugate(a: &HermitianMatrix, u: &DMatrix<Complex64>) -> HermitianMatrix {
    let b = u * a.to_nalgebra() * u.adjoint();
    let n = a.dim();
    HermitianMatrix::from_fn(n, |p, q| b[(p, q)]).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn symmetric_functions_are_unitarily_invariant(n in 1usize..=5, seed in any::<u64>()) {
        let a = hermitian(n, seed);
        let b = conjugate(&a, &unitary(n, seed));
        for k in 0..=n {
            let (sa, sb) = (sigma_k(&a, k).unwrap(), sigma_k(&b, k).unwrap());
            prop_assert!(close(sa, sb, 1e-10), "k={k}: {sa} vs {sb}");
        }
    }

    #[test]
    fn three_routes_to_s_k_agree(n in 1usize..=5, seed in any::<u64>()) {
        let a = hermitian(n, seed);
        let s = a.symmetric_functions();
        for k in 0..=n {
            let minors = sigma_k_minors(&a, k).unwrap();
            prop_assert!(close(s[k], minors, 1e-10));
            prop_assert!(close(sigma_k(&a, k).unwrap(), minors, 1e-10));
        }
    }

    #[test]
    fn homogeneity(n in 1usize..=5, seed in any::<u64>(), t in 0.01f64..10.0) {
        let a = hermitian(n, seed);
        for k in 1..=n {
            let scaled = sigma_k(&a.scaled(t), k).unwrap();
            prop_assert!(close(scaled, t.powi(k as i32) * sigma_k(&a, k).unwrap(), 1e-9));
        }
        let m = n;
        let d = d_matrix(&a.scaled(t), m).unwrap();
        let d1 = d_matrix(&a, m).unwrap().scaled(t.powi(m as i32 - 1));
        for (x, y) in d.entries().iter().zip(d1.entries()) {
            prop_assert!((x - y).norm() <= 1e-9 * (1.0 + y.norm()));
        }
    }

    #[test]
    fn cones_are_nested(n in 1usize..=6, seed in any::<u64>(), m in 1usize..=6) {
        let m = m.min(n);
        let a = random_cone_member(&mut rng(seed), n, m, 1.0);
        for k in 1..=m {
            prop_assert!(gamma_m_contains(&a, k).unwrap().member, "Γ_{m} ⊄ Γ_{k}");
        }
    }

    #[test]
    fn cone_is_invariant_under_positive_scaling_and_sums(n in 2usize..=5, seed in any::<u64>(), t in 0.01f64..100.0) {
        let m = 1 + (seed as usize) % n;
        let mut r = rng(seed);
        let a = random_cone_member(&mut r, n, m, 1.0);
        let b = random_cone_member(&mut r, n, m, 1.0);
        prop_assert!(gamma_m_contains(&a.scaled(t), m).unwrap().member);
        prop_assert!(gamma_m_contains(&a.add(&b).unwrap(), m).unwrap().member);
        prop_assert!(garding_gap(&a, &b, m).unwrap() >= -1e-10);
    }

    #[test]
    fn smooth_max_bounds(values in prop::collection::vec(-1e3f64..1e3, 1..32), j in 1e-3f64..1e4) {
        let s = smooth_max(&values, j).unwrap();
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slack = 1e-12 * (1.0 + max.abs());
        prop_assert!(s >= max - slack);
        prop_assert!(s <= max + (values.len() as f64).ln() / j + slack);
    }

    #[test]
    fn smooth_max_is_monotone_and_translation_equivariant(
        values in prop::collection::vec(-10f64..10.0, 1..8),
        shift in -5f64..5.0,
        j in 0.1f64..100.0,
    ) {
        let s = smooth_max(&values, j).unwrap();
        let moved: Vec<f64> = values.iter().map(|v| v + shift).collect();
        prop_assert!((smooth_max(&moved, j).unwrap() - s - shift).abs() <= 1e-10);
        let raised: Vec<f64> = values.iter().map(|v| v + shift.abs()).collect();
        prop_assert!(smooth_max(&raised, j).unwrap() >= s - 1e-12);
    }

    #[test]
    fn expressions_follow_arithmetic(a in -1e3f64..1e3, b in -1e3f64..1e3, x in -2f64..2.0) {
        let text = format!("{a:?} + {b:?} * x1 - max({a:?}, x1)");
        let v = parse_expression(&text).unwrap().eval(&[x, 0.0]).unwrap();
        prop_assert!((v - (a + b * x - a.max(x))).abs() <= 1e-9 * (1.0 + a.abs() + b.abs()));
    }

    #[test]
    fn field_round_trip_is_bit_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 16)) {
        let geom = Arc::new(GridGeometry::torus(1, 4, 1.0).unwrap());
        let field = GridField::new(geom, None, values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        write_field(&path, &field).unwrap();
        let back = read_field(&path).unwrap();
        prop_assert!(back.values().iter().zip(field.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

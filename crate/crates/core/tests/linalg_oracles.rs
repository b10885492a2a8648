mod common;

use common::*;
use deeponet_core::linalg::{self, DataMatrix};
use proptest::prelude::*;

#[test]
fn gemm_variants_match_triple_loop() {
    let mut r = rng(1);
    for (m, k, n) in [(1, 1, 1), (3, 7, 2), (17, 5, 33), (64, 65, 3)] {
        let a = random_matrix(m, k, &mut r);
        let b = random_matrix(k, n, &mut r);
        let want = naive_matmul(&a, &b);
        let got = a.matmul(&b).unwrap();
        assert!(frob_sq(&diff(&got, &want)) <= 1e-24 * frob_sq(&want).max(1.0));
        let tn = naive_transpose(&a).matmul_tn(&b).unwrap();
        assert!(frob_sq(&diff(&tn, &want)) <= 1e-24 * frob_sq(&want).max(1.0));
        let nt = a.matmul_nt(&naive_transpose(&b)).unwrap();
        assert!(frob_sq(&diff(&nt, &want)) <= 1e-24 * frob_sq(&want).max(1.0));
    }
}

#[test]
fn singular_values_match_jacobi_eigen_oracle() {
    let mut r = rng(2);
    for (m, n) in [(6, 4), (4, 6), (12, 12), (30, 7)] {
        let a = random_matrix(m, n, &mut r);
        let f = linalg::svd(&a).unwrap();
        let oracle = singular_values_oracle(&a);
        for (s, o) in f.s.iter().zip(&oracle) {
            assert!((s - o).abs() <= 1e-10 * oracle[0], "{s} vs {o}");
        }
    }
}

#[test]
fn pseudoinverse_matches_normal_equations() {
    let mut r = rng(3);
    let t = random_matrix(20, 6, &mut r);
    let got = linalg::pseudoinverse(&t, None).unwrap();
    let want = pinv_normal_equations(&t);
    assert!(frob_sq(&diff(&got, &want)) <= 1e-20 * frob_sq(&want));
}

#[test]
fn rank_deficient_matrix() {
    let mut r = rng(4);
    let a = naive_matmul(&random_matrix(15, 3, &mut r), &random_matrix(3, 9, &mut r));
    assert_eq!(linalg::numerical_rank(&a, None).unwrap(), 3);
    let f = linalg::svd(&a).unwrap();
    assert_eq!(f.numerical_rank(None), 3);
}

#[test]
fn spectral_norm_is_largest_singular_value() {
    let mut r = rng(5);
    let t = random_matrix(25, 8, &mut r);
    let s1 = singular_values_oracle(&t)[0];
    assert!(rel(linalg::spectral_norm(&t), s1) < 1e-8);
}

#[test]
fn csv_round_trip_is_bitwise() {
    let mut r = rng(6);
    let a = random_matrix(5, 4, &mut r);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    a.write_csv(&path).unwrap();
    assert_eq!(DataMatrix::read_csv(&path).unwrap(), a);
}

fn matrix(max: usize) -> impl Strategy<Value = DataMatrix> {
    (1..=max, 1..=max).prop_flat_map(|(m, n)| {
        prop::collection::vec(-10.0f64..10.0, m * n).prop_map(move |v| DataMatrix::new(m, n, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_with_orthonormal_factors(a in matrix(12)) {
        let f = linalg::svd(&a).unwrap();
        let us = f.u.scale_columns(&f.s).unwrap();
        let back = us.matmul_nt(&f.v).unwrap();
        let scale = frob_sq(&a).max(1e-300);
        prop_assert!(frob_sq(&diff(&back, &a)) <= 1e-22 * scale.max(1.0));
        let r = f.s.len();
        let utu = naive_matmul(&naive_transpose(&f.u), &f.u);
        let vtv = naive_matmul(&naive_transpose(&f.v), &f.v);
        prop_assert!(frob_sq(&diff(&utu, &DataMatrix::identity(r))) < 1e-20);
        prop_assert!(frob_sq(&diff(&vtv, &DataMatrix::identity(r))) < 1e-20);
        prop_assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn projection_error_invariant_under_basis_change(seed in 0u64..1000) {
        let mut r = rng(seed);
        let a = random_matrix(14, 9, &mut r);
        let t = random_matrix(14, 4, &mut r);
        let c = random_matrix(4, 4, &mut r);
        let e1 = linalg::projection_error(&t, &a).unwrap();
        let e2 = linalg::projection_error(&naive_matmul(&t, &c), &a).unwrap();
        prop_assert!(rel(e1, e2) < 1e-8);
    }

    #[test]
    fn truncated_svd_beats_random_bases(seed in 0u64..1000, n in 1usize..6) {
        let mut r = rng(seed);
        let a = random_matrix(10, 12, &mut r);
        let f = linalg::svd(&a).unwrap();
        let split = linalg::truncate(&f, n).unwrap();
        let best = linalg::projection_error(&split.phi1, &a).unwrap();
        let tail: f64 = split.sigma2.iter().map(|s| s * s).sum();
        prop_assert!(rel(best, tail) < 1e-9);
        let q = random_orthonormal(10, n, &mut r);
        prop_assert!(best <= linalg::projection_error(&q, &a).unwrap() * (1.0 + 1e-12));
    }
}

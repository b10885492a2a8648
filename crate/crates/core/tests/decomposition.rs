mod common;

use common::*;
use deeponet_core::errdecomp::{self, decompose};
use deeponet_core::linalg::{self, DataMatrix};
use proptest::prelude::*;

fn triple(seed: u64, n: usize, m: usize, nb: usize) -> (DataMatrix, DataMatrix, DataMatrix) {
    let mut r = rng(seed);
    (random_matrix(n, nb, &mut r), random_matrix(m, nb, &mut r), random_matrix(n, m, &mut r))
}

#[test]
fn decomposition_matches_oracle_pieces() {
    let (t, b, a) = triple(7, 9, 6, 4);
    let r = decompose(&t, &b, &a).unwrap();
    let coeffs = naive_matmul(&pinv_normal_equations(&t), &a);
    let trunk = frob_sq(&diff(&a, &naive_matmul(&t, &coeffs)));
    let resid = diff(&naive_transpose(&b), &coeffs);
    let branch = frob_sq(&naive_matmul(&t, &resid));
    let total = frob_sq(&diff(&naive_matmul(&t, &naive_transpose(&b)), &a));
    assert!(rel(r.eps_trunk, trunk) < 1e-10);
    assert!(rel(r.eps_branch, branch) < 1e-10);
    assert!(rel(r.eps_total, total) < 1e-12);
    assert!(rel(r.eps_c, frob_sq(&resid)) < 1e-10);
    let s = singular_values_oracle(&t);
    assert!(rel(r.t_norm, s[0]) < 1e-10);
    assert!(rel(r.delta_total, (total / frob_sq(&a)).sqrt()) < 1e-12);
}

#[test]
fn optimal_branch_leaves_only_trunk_error() {
    let (t, _, a) = triple(8, 12, 10, 3);
    let b = errdecomp::optimal_branch(&t, &a).unwrap();
    let r = decompose(&t, &b, &a).unwrap();
    assert!(r.eps_branch < 1e-24 * r.a_norm_sq.max(1.0));
    assert!(rel(r.eps_total, r.eps_trunk) < 1e-10);
}

#[test]
fn zero_data_gives_zero_relative_errors() {
    let (t, b, _) = triple(9, 5, 4, 2);
    let a = DataMatrix::zeros(5, 4);
    let r = decompose(&t, &b, &a).unwrap();
    assert_eq!(r.delta_trunk, 0.0);
    assert!(r.delta_branch.is_infinite());
}

#[test]
fn rejects_mismatched_shapes() {
    let (t, b, a) = triple(10, 5, 4, 2);
    assert!(decompose(&t, &b.transpose(), &a).is_err());
    assert!(decompose(&t.transpose(), &b, &a).is_err());
}

#[test]
fn mode_loss_identity_and_base_on_svd_trunk() {
    let mut r = rng(11);
    let a = random_matrix(15, 12, &mut r);
    let f = linalg::svd(&a).unwrap();
    let split = linalg::truncate(&f, 6).unwrap();
    let t = split.scaled_phi1();
    let b = random_matrix(12, 6, &mut r);
    let report = errdecomp::mode_loss_report(&split.sigma1, &split.v1, &b, None, 15).unwrap();
    let weighted: f64 = report.modes.iter().map(|m| m.weighted_train).sum();
    let d = decompose(&t, &b, &a).unwrap();
    assert!(rel(weighted, d.eps_branch) < 1e-10);
    assert!(rel(report.total_train, d.eps_branch / (15.0 * 12.0)) < 1e-10);
    for m in &report.modes {
        assert!((m.base_train - 1.0).abs() < 1e-10);
    }
    assert!(rel(d.eps_trunk, split.tail_energy()) < 1e-9);
}

#[test]
fn test_side_identity() {
    let mut r = rng(12);
    let a = random_matrix(14, 9, &mut r);
    let a_te = random_matrix(14, 5, &mut r);
    let f = linalg::svd(&a).unwrap();
    let split = linalg::truncate(&f, 4).unwrap();
    let t = split.scaled_phi1();
    let w1 = errdecomp::test_coefficients(&split.phi1, &split.sigma1, &a_te, f.default_tolerance()).unwrap();
    let b_te = random_matrix(5, 4, &mut r);
    let (l, base) = errdecomp::mode_losses_test(&b_te, &w1, 9).unwrap();
    let d = decompose(&t, &b_te, &a_te).unwrap();
    let weighted: f64 = split.sigma1.iter().zip(&l).map(|(s, l)| s * s * l).sum();
    // Test losses carry the m_tr/m_te factor.
    assert!(rel(weighted * 5.0 / 9.0, d.eps_branch) < 1e-10);
    let trunk = errdecomp::test_trunk_error(&split.phi1, &split.sigma1, &w1, &a_te).unwrap();
    assert!(rel(trunk, d.eps_trunk) < 1e-9);
    let base_sum: f64 = split.sigma1.iter().zip(&base).map(|(s, b)| s * s * b).sum();
    assert!(rel(base_sum * 5.0 / 9.0, frob_sq(&naive_matmul(&t, &naive_transpose(&w1)))) < 1e-10);
}

#[test]
fn near_degenerate_flags_repeated_singular_values() {
    assert_eq!(errdecomp::near_degenerate(&[3.0, 2.0, 2.0, 1.0]), vec![1]);
    assert!(errdecomp::near_degenerate(&[3.0, 2.0, 1.0]).is_empty());
    assert!(errdecomp::near_degenerate(&[]).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_exact(seed in any::<u64>(), n in 1usize..20, m in 1usize..20, nb in 1usize..8) {
        let (t, b, a) = triple(seed, n, m, nb);
        let r = decompose(&t, &b, &a).unwrap();
        prop_assert!(rel(r.eps_total, r.eps_trunk + r.eps_branch) < 1e-9);
        prop_assert!(r.eps_branch <= r.eps_d * (1.0 + 1e-10) + 1e-14);
        prop_assert!(r.eps_trunk >= 0.0 && r.eps_branch >= 0.0);
    }

    #[test]
    fn trunk_error_depends_only_on_span(seed in any::<u64>(), n in 4usize..16, m in 1usize..12) {
        let mut r = rng(seed);
        let t = random_matrix(n, 3, &mut r);
        let mix = random_matrix(3, 3, &mut r);
        prop_assume!(singular_values_oracle(&mix)[2] > 1e-2);
        let a = random_matrix(n, m, &mut r);
        let b = random_matrix(m, 3, &mut r);
        let r1 = decompose(&t, &b, &a).unwrap();
        let r2 = decompose(&naive_matmul(&t, &mix), &b, &a).unwrap();
        prop_assert!(rel(r1.eps_trunk, r2.eps_trunk) < 1e-8);
    }
}

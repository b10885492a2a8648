//! Splits the DeepONet error into trunk (projection) and branch parts for
//! several trunk bases on the same KdV data, using the optimal branch
//! `Bᵀ = T⁺A` and a perturbed branch.
//!
//! cargo run --release --example error_decomposition

use deeponet_core::deeponet::{self, TrunkKind};
use deeponet_core::errdecomp;
use deeponet_core::linalg::{self, DataMatrix};
use deeponet_core::pde_data::{self, ProblemSpec};

fn main() -> deeponet_core::Result<()> {
    let spec = ProblemSpec::kdv(0.2).with_grid(100, 100);
    let (train, test) = pde_data::build_dataset(&spec, 120, 30, 0)?;
    let svd = linalg::svd(&train.a)?;
    let n_basis = 20;

    println!("trunk          eps_T/|A|^2   eps_B/|A|^2   eps_D bound   test delta_T");
    for kind in TrunkKind::FIXED {
        let t = deeponet::trunk_matrix(kind, &train.grid, Some(&svd), n_basis)?;
        let b_opt = errdecomp::optimal_branch(&t, &train.a)?;
        // Perturb the optimal coefficients so the branch error is non-zero.
        let b = DataMatrix::from_fn(b_opt.rows(), b_opt.cols(), |i, j| {
            b_opt[(i, j)] * (1.0 + 0.05 * ((i * 31 + j * 17) % 7) as f64 / 7.0)
        });
        let r = errdecomp::decompose(&t, &b, &train.a)?;
        assert!((r.eps_trunk + r.eps_branch - r.eps_total).abs() <= 1e-9 * r.eps_total);
        assert!(r.eps_branch <= r.eps_d * (1.0 + 1e-12));
        let te = errdecomp::decompose(&t, &errdecomp::optimal_branch(&t, &test.a)?, &test.a)?;
        println!(
            "{:<14} {:>11.3e}   {:>11.3e}   {:>11.3e}   {:>11.3e}",
            kind.name(),
            r.eps_trunk / r.a_norm_sq,
            r.eps_branch / r.a_norm_sq,
            r.eps_d / r.a_norm_sq,
            te.delta_trunk,
        );
    }

    // Eckart-Young: the SVD trunk's projection error is the singular-value tail.
    let phi1 = svd.u.columns(0, n_basis);
    let tail: f64 = svd.s[n_basis..].iter().map(|s| s * s).sum();
    println!(
        "SVD projection error {:.6e}, singular-value tail {tail:.6e}",
        linalg::projection_error(&phi1, &train.a)?
    );
    Ok(())
}

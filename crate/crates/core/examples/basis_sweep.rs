//! Trains DeepONets with every trunk basis over a few basis sizes and prints
//! the train/test relative errors split into trunk and branch parts.
//!
//! cargo run --release --example basis_sweep

use deeponet_core::experiment::{self, ExperimentConfig};

fn main() -> deeponet_core::Result<()> {
    let mut config = ExperimentConfig::preset("desk-bases")?;
    config.epochs = 300;
    config.sweep.n_basis = vec![5, 10, 20];
    let out = std::env::temp_dir().join("deeponet-example-bases");
    let report = experiment::basis_sweep(&config, &out)?;

    println!("{:<14} {:>3} {:>10} {:>10} {:>10} {:>10}", "trunk", "N", "delta", "delta_T", "delta_B", "test");
    for r in &report.rows {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3e}"));
        println!(
            "{:<14} {:>3} {:>10} {:>10} {:>10} {:>10}",
            r.trunk.name(),
            r.n_basis,
            f(r.delta_train),
            f(r.delta_trunk_train),
            f(r.delta_branch_train),
            f(r.delta_test),
        );
    }
    println!("runs and plot series under {}", out.display());
    Ok(())
}

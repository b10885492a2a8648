//! Modified DeepONet (SVD trunk `Φ₁Σ₁`) on reduced KdV, trained with GD and
//! with Adam. GD only brings the leading modes below their base loss; Adam
//! reaches many more.
//!
//! cargo run --release --example mode_losses

use deeponet_core::deeponet::{self, DeepOnet, ModelConfig, Objective, TrainConfig, TrainingSet};
use deeponet_core::optim::{OptimizerConfig, OptimizerKind};
use deeponet_core::pde_data::{self, ProblemSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> deeponet_core::Result<()> {
    let spec = ProblemSpec::kdv(0.2).with_grid(100, 100);
    let (train, test) = pde_data::build_dataset(&spec, 120, 30, 0)?;
    let n_basis = 20;
    let set = TrainingSet::from_datasets(&train, Some(&test))?.with_modes(n_basis)?;

    for kind in [OptimizerKind::Gd, OptimizerKind::Adam] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = DeepOnet::new(ModelConfig::modified(n_basis, 64, 5), &train.grid, spec.input_dim, Some(&set.svd), &mut rng)?;
        let config = TrainConfig::new(800, OptimizerConfig::new(kind, 1e-4), Objective::Modal { e: 0.0 });
        let history = deeponet::train(&mut model, &set, &config, None)?;
        let report = model.mode_report(&set)?;

        println!("{kind:?}: final loss {:.4e}", history.final_train_loss().unwrap_or(f64::NAN));
        println!("   i      sigma    L_train     L_test  improved");
        for m in &report.modes {
            println!(
                "{:>4} {:>10.3e} {:>10.3e} {:>10.3e}  {}",
                m.i,
                m.sigma,
                m.l_train,
                m.l_test.unwrap_or(f64::NAN),
                if m.improved_train { "yes" } else { "" }
            );
        }
        println!("modes below base loss: {}/{}\n", report.improved_train_count(), n_basis);
    }
    Ok(())
}

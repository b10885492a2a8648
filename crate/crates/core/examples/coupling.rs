//! Mode coupling under gradient descent: the diagonal term `d`, the
//! cross-mode term `Ω` and `γ = Ω/(d+Ω)` over training, for two widths,
//! plus a first-order Taylor check of the predicted loss change.
//!
//! cargo run --release --example coupling

use deeponet_core::coupling::{self, CouplingTracker};
use deeponet_core::deeponet::{self, DeepOnet, ModelConfig, Objective, TrainConfig, TrainingSet};
use deeponet_core::optim::{OptimizerConfig, OptimizerKind};
use deeponet_core::pde_data::{self, ProblemSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> deeponet_core::Result<()> {
    let spec = ProblemSpec::kdv(0.2).with_grid(100, 100);
    let (train, test) = pde_data::build_dataset(&spec, 120, 30, 0)?;
    let set = TrainingSet::from_datasets(&train, Some(&test))?.with_modes(20)?;
    let alpha = 1e-4;

    for width in [16, 64] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = DeepOnet::new(ModelConfig::modified(20, width, 5), &train.grid, spec.input_dim, Some(&set.svd), &mut rng)?;

        let checks = coupling::taylor_sequence(&model, &set, alpha, 5)?;
        let worst = checks.iter().map(|c| c.relative_gap()).fold(0.0, f64::max);
        println!("width {width}: Taylor prediction vs measured loss change, worst gap {worst:.2e}");

        let mut tracker = CouplingTracker::new(500);
        let config = TrainConfig::new(3000, OptimizerConfig::new(OptimizerKind::Gd, alpha), Objective::Modal { e: 0.0 });
        deeponet::train(&mut model, &set, &config, Some(&mut tracker))?;
        println!("  epoch          d      omega    -gamma");
        for r in &tracker.rows {
            println!(
                "  {:>5} {:>10.3e} {:>10.3e} {:>9.4}",
                r.epoch,
                r.d,
                r.omega,
                r.gamma.map_or(f64::NAN, |g| -g)
            );
        }
        println!("  mean -gamma {:.4}", tracker.mean_neg_gamma().unwrap_or(f64::NAN));
    }
    Ok(())
}

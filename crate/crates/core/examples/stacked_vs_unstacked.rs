//! Stacked branches (one network per mode) against a single unstacked
//! network of matching parameter count.
//!
//! cargo run --release --example stacked_vs_unstacked

use deeponet_core::deeponet::{self, BranchKind, DeepOnet, ModelConfig, Objective, TrainConfig, TrainingSet};
use deeponet_core::nn;
use deeponet_core::optim::{OptimizerConfig, OptimizerKind};
use deeponet_core::pde_data::{self, ProblemSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> deeponet_core::Result<()> {
    // Width matching at the full KdV size.
    let w = deeponet::match_unstacked_width(42, 50, 5, 400);
    let stacked = 50 * nn::param_count(400, 42, 5, 1);
    let unstacked = nn::param_count(400, w, 5, 50);
    println!("50 stacked nets of width 42: {stacked} parameters; unstacked width {w}: {unstacked}");

    let spec = ProblemSpec::kdv(0.2).with_grid(100, 100);
    let (train, test) = pde_data::build_dataset(&spec, 120, 30, 0)?;
    let n_basis = 10;
    let set = TrainingSet::from_datasets(&train, Some(&test))?.with_modes(n_basis)?;
    let w_stacked = 8;
    let w_unstacked = deeponet::match_unstacked_width(w_stacked, n_basis, 5, spec.input_dim);

    for (branch, width) in [(BranchKind::Stacked, w_stacked), (BranchKind::Unstacked, w_unstacked)] {
        let config = ModelConfig {
            branch,
            ..ModelConfig::modified(n_basis, width, 5)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = DeepOnet::new(config, &train.grid, spec.input_dim, Some(&set.svd), &mut rng)?;
        let train_config = TrainConfig::new(400, OptimizerConfig::new(OptimizerKind::Adam, 1e-3), Objective::Modal { e: 0.0 });
        deeponet::train(&mut model, &set, &train_config, None)?;
        let report = model.mode_report(&set)?;
        let l: Vec<String> = report.l_train().iter().map(|x| format!("{x:.2}")).collect();
        println!(
            "{branch:?} width {width} ({} params): train loss {:.4e}, L_i [{}]",
            model.param_count(),
            report.total_train,
            l.join(" ")
        );
    }
    Ok(())
}

//! Loss re-weighting `σᵢ^{2+2e}`: with `e = −1` every mode counts equally and
//! Adam drives the unweighted mode losses towards a common level.
//!
//! cargo run --release --example reweighting

use deeponet_core::deeponet::{self, DeepOnet, ModelConfig, Objective, TrainConfig, TrainingSet};
use deeponet_core::experiment::coefficient_of_variation;
use deeponet_core::optim::{self, OptimizerConfig, OptimizerKind};
use deeponet_core::pde_data::{self, ProblemSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> deeponet_core::Result<()> {
    let spec = ProblemSpec::kdv(0.2).with_grid(100, 100);
    let (train, test) = pde_data::build_dataset(&spec, 120, 30, 0)?;
    let set = TrainingSet::from_datasets(&train, Some(&test))?.with_modes(20)?;
    let sigma1 = set.modes.as_ref().map_or(1.0, |m| m.sigma1[0]);

    for kind in [OptimizerKind::Gd, OptimizerKind::Adam] {
        for e in [0.0, -0.5, -1.0] {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut model = DeepOnet::new(ModelConfig::modified(20, 64, 5), &train.grid, spec.input_dim, Some(&set.svd), &mut rng)?;
            let config = TrainConfig::new(800, OptimizerConfig::new(kind, 1e-4), Objective::Modal { e });
            let history = deeponet::train(&mut model, &set, &config, None)?;
            let l = model.mode_report(&set)?.l_train();
            println!(
                "{kind:?} e={e:>4}: lr scale {:.3e}, status {:?}, CV(L_i) {:.3}, L_1 {:.3e}, L_20 {:.3e}",
                if kind == OptimizerKind::Gd { optim::reweight_lr_scale(sigma1, e) } else { 1.0 },
                history.status,
                coefficient_of_variation(&l),
                l[0],
                l[19],
            );
        }
    }
    Ok(())
}

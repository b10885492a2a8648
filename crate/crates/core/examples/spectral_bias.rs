//! Synthetic operator data with dictated frequencies per right singular
//! function: frequency estimators, then training a modified DeepONet with
//! increasing (`α > 0`) and decreasing (`α < 0`) frequencies.
//!
//! cargo run --release --example spectral_bias

use deeponet_core::deeponet::{self, DeepOnet, ModelConfig, Objective, TrainConfig, TrainingSet};
use deeponet_core::optim::{OptimizerConfig, OptimizerKind};
use deeponet_core::spectral::{self, EstimatorKind, SyntheticSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> deeponet_core::Result<()> {
    // Estimator quality on eight functions with growing frequency.
    let spec = SyntheticSpec {
        n_modes: 8,
        ..SyntheticSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data = spectral::synth_dataset(&spec, &mut rng)?;
    let dictated = data.mode_frequencies();
    for (kind, k) in [
        (EstimatorKind::Tv, 3),
        (EstimatorKind::LaplacianEnergy, 50),
        (EstimatorKind::ProjectedFourier, spec.input_dim),
    ] {
        let est = spectral::estimate_all(&data.points, &data.v, kind, k)?;
        println!("{kind:?}: Spearman with dictated frequencies {:.3}", spectral::spearman(&est.values, &dictated));
    }

    for alpha in [0.2, -0.2] {
        let spec = SyntheticSpec {
            alpha,
            m_test: 100,
            ..SyntheticSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = spectral::synth_dataset(&spec, &mut rng)?;
        let set = TrainingSet::new(
            data.points.clone(),
            data.a.clone(),
            Some((data.points_test.clone(), data.a_test.clone())),
        )?
        .with_modes(spec.n_modes)?;
        let grid = set.grid_default();
        let mut model = DeepOnet::new(ModelConfig::modified(spec.n_modes, 50, 5), &grid, spec.input_dim, Some(&set.svd), &mut rng)?;
        let config = TrainConfig::new(2000, OptimizerConfig::new(OptimizerKind::Adam, 2e-3), Objective::Modal { e: 0.0 });
        deeponet::train(&mut model, &set, &config, None)?;
        let l = model.mode_report(&set)?.l_train();
        let f = data.mode_frequencies();
        println!("alpha = {alpha:+}");
        for (i, (li, fi)) in l.iter().zip(&f).enumerate() {
            println!("  mode {} frequency {fi:.3} L_train {li:.3e}", i + 1);
        }
        println!("  Spearman(L_i, f_i) = {:.3}", spectral::spearman(&l, &f));
    }
    Ok(())
}

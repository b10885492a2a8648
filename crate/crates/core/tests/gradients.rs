mod common;

use common::*;
use deeponet_core::deeponet::{BranchKind, DeepOnet, ModelConfig, Objective, TrainingSet, TrunkKind};
use deeponet_core::optim;

const H: f64 = 3e-3;

fn toy_set(seed: u64) -> TrainingSet {
    let mut r = rng(seed);
    let p = random_matrix(4, 7, &mut r);
    let a = random_matrix(9, 7, &mut r);
    TrainingSet::new(p, a, None).unwrap().with_modes(3).unwrap()
}

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| j as f64 / n as f64).collect()
}

#[test]
fn modal_gradient_matches_finite_differences() {
    let set = toy_set(0);
    for branch in [BranchKind::Unstacked, BranchKind::Stacked] {
        for (width, depth) in [(3, 1), (17, 5)] {
            let config = ModelConfig {
                branch,
                ..ModelConfig::modified(3, width, depth)
            };
            let model = DeepOnet::new(config, &grid(9), 4, Some(&set.svd), &mut rng(1)).unwrap();
            for e in [0.0, -1.0, 0.5] {
                let (gap, n) = fd_gradient_gap(&model, &set, Objective::Modal { e }, H, 0.0);
                assert_eq!(n, model.param_count());
                assert!(gap < 1e-6, "{branch:?} w{width} d{depth} e{e}: {gap:e}");
            }
        }
    }
}

#[test]
fn pointwise_gradient_with_learned_trunk() {
    let set = toy_set(2);
    let config = ModelConfig {
        trunk: TrunkKind::Learned,
        trunk_width: 5,
        trunk_depth: 2,
        ..ModelConfig::modified(3, 6, 2)
    };
    let model = DeepOnet::new(config, &grid(9), 4, None, &mut rng(3)).unwrap();
    let (gap, n) = fd_gradient_gap(&model, &set, Objective::Pointwise, H, 0.0);
    assert_eq!(n, model.param_count());
    assert!(gap < 1e-6, "{gap:e}");
}

#[test]
fn modal_gradient_is_weighted_sum_of_mode_gradients() {
    let set = toy_set(4);
    let model = DeepOnet::new(ModelConfig::modified(3, 8, 3), &grid(9), 4, Some(&set.svd), &mut rng(5)).unwrap();
    let modes = set.modes.as_ref().unwrap();
    let per_mode = model.per_mode_gradients(&set.p_train, &modes.v1, 1.0).unwrap();
    for e in [0.0, -1.0] {
        let (_, grad) = model.loss_and_gradient(&set, Objective::Modal { e }).unwrap();
        let (combined, _) = optim::reweight_gradient(&per_mode, &modes.sigma1, e, set.n(), set.m_train()).unwrap();
        for (a, b) in grad.iter().zip(&combined) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12), "{a} vs {b}");
        }
    }
}

mod common;

use common::*;
use deeponet_core::deeponet::{
    self, BranchKind, DeepOnet, ModelConfig, Objective, TrainConfig, TrainStatus, TrainingSet,
};
use deeponet_core::errdecomp::decompose;
use deeponet_core::nn;
use deeponet_core::optim::{Optimizer, OptimizerConfig, OptimizerKind};

fn toy(seed: u64, n_basis: usize) -> TrainingSet {
    let mut r = rng(seed);
    let p = random_matrix(6, 20, &mut r);
    let a = random_matrix(12, 20, &mut r);
    let p_te = random_matrix(6, 5, &mut r);
    let a_te = random_matrix(12, 5, &mut r);
    TrainingSet::new(p, a, Some((p_te, a_te))).unwrap().with_modes(n_basis).unwrap()
}

fn model(set: &TrainingSet, config: ModelConfig, seed: u64) -> DeepOnet {
    DeepOnet::new(config, &set.grid_default(), set.p_train.rows(), Some(&set.svd), &mut rng(seed)).unwrap()
}

#[test]
fn modal_loss_is_branch_error_per_entry() {
    let set = toy(0, 4);
    let m = model(&set, ModelConfig::modified(4, 10, 2), 1);
    let modes = set.modes.as_ref().unwrap();
    let t = modes.phi1.scale_columns(&modes.sigma1).unwrap();
    let b = m.branch_matrix(&set.p_train).unwrap();
    let r = decompose(&t, &b, &set.a_train).unwrap();
    let loss = m.train_loss(&set, Objective::Modal { e: 0.0 }).unwrap();
    assert!(rel(loss, r.eps_branch / (12.0 * 20.0)) < 1e-10);
    let report = m.mode_report(&set).unwrap();
    assert!(rel(report.total_train, loss) < 1e-12);
    // The pointwise loss adds the constant trunk error.
    let pw = m.train_loss(&set, Objective::Pointwise).unwrap();
    assert!(rel(pw, (r.eps_branch + r.eps_trunk) / (12.0 * 20.0)) < 1e-10);
}

#[test]
fn training_is_deterministic() {
    let set = toy(1, 3);
    let cfg = TrainConfig::new(25, OptimizerConfig::new(OptimizerKind::Adam, 1e-3), Objective::Modal { e: 0.0 });
    let run = || {
        let mut m = model(&set, ModelConfig::modified(3, 8, 2), 5);
        let h = deeponet::train(&mut m, &set, &cfg, None).unwrap();
        (h.to_csv(), m.params())
    };
    let (h1, p1) = run();
    let (h2, p2) = run();
    assert_eq!(h1, h2);
    assert_eq!(p1, p2);
}

#[test]
fn zero_epochs_records_the_initial_state_only() {
    let set = toy(2, 3);
    let mut m = model(&set, ModelConfig::modified(3, 8, 2), 5);
    let before = m.params();
    let cfg = TrainConfig::new(0, OptimizerConfig::new(OptimizerKind::Gd, 1e-3), Objective::Modal { e: 0.0 });
    let h = deeponet::train(&mut m, &set, &cfg, None).unwrap();
    assert_eq!(h.records.len(), 1);
    assert_eq!(h.records[0].epoch, 0);
    assert!(h.records[0].test_loss.is_some());
    assert_eq!(h.status, TrainStatus::Completed);
    assert_eq!(m.params(), before);
    assert_eq!(h.to_csv().lines().count(), 2);
}

#[test]
fn small_gd_steps_decrease_the_loss() {
    let set = toy(3, 3);
    let mut m = model(&set, ModelConfig::modified(3, 8, 2), 6);
    let cfg = TrainConfig::new(50, OptimizerConfig::new(OptimizerKind::Gd, 1e-3), Objective::Modal { e: 0.0 });
    let h = deeponet::train(&mut m, &set, &cfg, None).unwrap();
    assert_eq!(h.records.len(), 51);
    for w in h.records.windows(2) {
        assert!(w[1].train_loss <= w[0].train_loss, "{} -> {}", w[0].train_loss, w[1].train_loss);
    }
}

#[test]
fn huge_learning_rate_is_reported_as_divergence() {
    let set = toy(4, 3);
    let mut m = model(&set, ModelConfig::modified(3, 8, 2), 7);
    let cfg = TrainConfig::new(500, OptimizerConfig::new(OptimizerKind::Gd, 1e6), Objective::Modal { e: 0.0 });
    let h = deeponet::train(&mut m, &set, &cfg, None).unwrap();
    let TrainStatus::Diverged { epoch } = h.status else {
        panic!("expected divergence, got {:?}", h.status);
    };
    assert_eq!(h.records.last().unwrap().epoch, epoch);
    assert!(epoch < 500);
}

#[test]
fn learning_rate_decays_stepwise() {
    let set = toy(5, 2);
    let mut m = model(&set, ModelConfig::modified(2, 4, 1), 8);
    let mut opt = OptimizerConfig::new(OptimizerKind::Gd, 1e-4);
    opt.decay_every = 3;
    opt.decay_rate = 0.5;
    let h = deeponet::train(&mut m, &set, &TrainConfig::new(7, opt, Objective::Modal { e: 0.0 }), None).unwrap();
    let lrs: Vec<f64> = h.records.iter().map(|r| r.lr).collect();
    // Update t (from 1) uses 0.5^⌊t/3⌋ α₁.
    let expect = [1.0, 1.0, 0.5, 0.5, 0.5, 0.25, 0.25, 0.25].map(|x| x * 1e-4);
    for (a, b) in lrs.iter().zip(expect) {
        assert!(rel(*a, b) < 1e-14, "{lrs:?}");
    }
}

#[test]
fn model_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let set = toy(6, 3);
    for branch in [BranchKind::Unstacked, BranchKind::Stacked] {
        let config = ModelConfig { branch, ..ModelConfig::modified(3, 5, 2) };
        let m = model(&set, config, 9);
        let path = dir.path().join(format!("{branch:?}"));
        m.save(&path).unwrap();
        let back = DeepOnet::load(&path).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.predict(&set.p_test.clone().unwrap()).unwrap(), m.predict(&set.p_test.clone().unwrap()).unwrap());
    }
    std::fs::remove_file(dir.path().join("Unstacked").join("trunk.csv")).unwrap();
    assert!(DeepOnet::load(dir.path().join("Unstacked")).is_err());
}

#[test]
fn adam_step_matches_hand_computation() {
    let cfg = OptimizerConfig::new(OptimizerKind::Adam, 0.1);
    let mut opt = Optimizer::new(cfg, 2).unwrap();
    let mut p = vec![1.0, -2.0];
    let g1 = [0.5, -0.25];
    let g2 = [0.1, 0.3];
    opt.step(&mut p, &g1, 1.0).unwrap();
    opt.step(&mut p, &g2, 1.0).unwrap();
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    for k in 0..2 {
        let mut x = [1.0, -2.0][k];
        let (mut m, mut v) = (0.0, 0.0);
        for (t, g) in [g1[k], g2[k]].into_iter().enumerate() {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32 + 1));
            let vh = v / (1.0 - b2.powi(t as i32 + 1));
            x -= 0.1 * mh / (vh.sqrt() + eps);
        }
        assert!(rel(p[k], x) < 1e-14, "{} vs {x}", p[k]);
    }
}

#[test]
fn adagrad_and_gd_steps() {
    let mut p = vec![1.0];
    let mut gd = Optimizer::new(OptimizerConfig::new(OptimizerKind::Gd, 0.5), 1).unwrap();
    gd.step(&mut p, &[2.0], 2.0).unwrap();
    assert_eq!(p[0], 1.0 - 0.5 * 2.0 * 2.0);
    let mut q = vec![0.0];
    let mut ada = Optimizer::new(OptimizerConfig::new(OptimizerKind::AdaGrad, 0.1), 1).unwrap();
    ada.step(&mut q, &[3.0], 1.0).unwrap();
    ada.step(&mut q, &[4.0], 1.0).unwrap();
    let expect = -0.1 * 3.0 / (9.0f64.sqrt() + 1e-8) - 0.1 * 4.0 / (25.0f64.sqrt() + 1e-8);
    assert!(rel(q[0], expect) < 1e-14, "{}", q[0]);
}

#[test]
fn width_matching_by_enumeration() {
    let target = 50 * nn::param_count(400, 42, 5, 1);
    let gap = |w: usize| (nn::param_count(400, w, 5, 50) as i64 - target as i64).abs();
    let best = (1..2000).min_by_key(|&w| gap(w)).unwrap();
    assert_eq!(deeponet::match_unstacked_width(42, 50, 5, 400), best);
    let stacked = ModelConfig { branch: BranchKind::Stacked, ..ModelConfig::modified(50, 42, 5) };
    assert_eq!(stacked.branch_param_count(400).unwrap(), target);
}

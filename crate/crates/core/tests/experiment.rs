mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use deeponet_core::deeponet::{TrainStatus, TrunkKind};
use deeponet_core::experiment::{
    self, ExperimentConfig, PlotKind, PlotSource, RunReport, SweepKind, SweepReport,
};

fn tiny() -> ExperimentConfig {
    let mut c = ExperimentConfig::desk_kdv();
    c.grid_points = Some(32);
    c.input_dim = Some(32);
    c.m_train = 24;
    c.m_test = 6;
    c.n_basis = 5;
    c.width = 8;
    c.depth = 2;
    c.epochs = 12;
    c.mode_every = 4;
    c
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

#[test]
fn run_writes_a_consistent_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let report = experiment::run(&tiny(), &out).unwrap();
    assert_eq!(report.history.records.len(), 13);
    assert_eq!(report.history.status, TrainStatus::Completed);
    assert_eq!(read(out.join("history.csv")), report.history.to_csv());
    let modes = report.modes.as_ref().unwrap();
    assert_eq!(read(out.join("modes.csv")), modes.to_csv());
    assert_eq!(modes.modes.len(), 5);
    // Epochs 0, 4, 8, 12.
    assert_eq!(report.history.mode_records.len(), 4);
    let back = RunReport::read(out.join("report.json")).unwrap();
    assert_eq!(back, report);
    let e = report.error_train.as_ref().unwrap();
    assert!((e.eps_total - e.eps_trunk - e.eps_branch).abs() <= 1e-9 * e.eps_total);
    // The recorded modal loss is the branch error per entry.
    let last = report.history.final_train_loss().unwrap();
    assert!(common::rel(last, e.eps_branch / (32.0 * 24.0)) < 1e-9);
    assert!(report.error_test.is_some());
    assert!(out.join("model").join("model.json").exists());
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = experiment::run(&tiny(), &dir.path().join("a")).unwrap();
    let b = experiment::run(&tiny(), &dir.path().join("b")).unwrap();
    for f in ["history.csv", "modes.csv"] {
        assert_eq!(read(dir.path().join("a").join(f)), read(dir.path().join("b").join(f)));
    }
    assert_eq!(a.config_hash, b.config_hash);
    assert_eq!(a.dataset_hash, b.dataset_hash);
    let mut c = tiny();
    c.seed = 1;
    let other = experiment::run(&c, &dir.path().join("c")).unwrap();
    assert_ne!(other.dataset_hash, a.dataset_hash);
}

#[test]
fn generated_data_can_be_reused() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = experiment::gen_data(&tiny(), &dir.path().join("data")).unwrap();
    let mut c = tiny();
    c.data_dir = Some(dir.path().join("data"));
    let r = experiment::run(&c, &dir.path().join("run")).unwrap();
    assert_eq!(r.dataset_hash, train.meta.hash);
    c.problem = deeponet_core::pde_data::ProblemKind::Burgers;
    assert!(experiment::run(&c, &dir.path().join("bad")).is_err());
}

#[test]
fn plot_series_have_fixed_headers() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny();
    c.coupling.every = 4;
    c.coupling.taylor_steps = 3;
    c.coupling.keep_matrices = true;
    c.spectral.enabled = true;
    c.spectral.k_le = 5;
    let out = dir.path().join("run");
    let report = experiment::run(&c, &out).unwrap();
    let paths = experiment::emit_all(&report, &out.join("plots")).unwrap();
    assert_eq!(paths.len(), 4);
    assert!(read(out.join("plots/loss_curves.csv")).starts_with("series,x,y,lr\n"));
    for kind in ["mode_losses", "coupling", "frequencies"] {
        let text = read(out.join(format!("plots/{kind}.csv")));
        assert!(text.starts_with("series,x,y\n"), "{kind}");
        assert!(text.lines().skip(1).all(|l| l.split(',').count() == 3), "{kind}");
    }
    assert!(read(out.join("coupling.csv")).starts_with("epoch,d,omega,gamma,taylor_pred,measured_dl\n"));
    assert!(read(out.join("frequencies.csv")).starts_with("mode,tv_k3,le_k5,proj_fourier,dictated\n"));
    assert_eq!(read(out.join("taylor.csv")).lines().count(), 4);
    assert!(out.join("S_epoch0.csv").exists() && out.join("S_epoch12.csv").exists());
    let rows = report.coupling.as_ref().unwrap();
    assert_eq!(rows.iter().map(|r| r.epoch).collect::<Vec<_>>(), [0, 4, 8, 12]);
    assert!(rows.iter().all(|r| r.d <= 0.0));
    assert!(experiment::plot_series(PlotSource::Run(&report), PlotKind::BasisSweep).is_err());
}

#[test]
fn pointwise_runs_have_no_mode_series() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny();
    c.trunk = TrunkKind::Legendre;
    let report = experiment::run(&c, &dir.path().join("run")).unwrap();
    assert!(report.modes.is_none());
    assert!(experiment::plot_series(PlotSource::Run(&report), PlotKind::ModeLosses).is_err());
    assert_eq!(experiment::emit_all(&report, &dir.path().join("plots")).unwrap().len(), 1);
}

#[test]
fn basis_sweep_orders_the_svd_trunk_first() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny();
    c.epochs = 3;
    c.sweep.n_basis = vec![2, 4, 8];
    c.sweep.trunks = vec![TrunkKind::SvdScaled, TrunkKind::Legendre, TrunkKind::Cosine];
    let report = experiment::basis_sweep(&c, dir.path()).unwrap();
    assert_eq!(report.rows.len(), 9);
    assert_eq!(SweepReport::read(dir.path().join("sweep.json")).unwrap(), report);
    assert_eq!(read(dir.path().join("sweep.csv")), report.to_csv());
    let trunk = |t: TrunkKind, n: usize| {
        report.rows.iter().find(|r| r.trunk == t && r.n_basis == n).unwrap().delta_trunk_train.unwrap()
    };
    for w in [2, 4, 8].windows(2) {
        assert!(trunk(TrunkKind::SvdScaled, w[1]) <= trunk(TrunkKind::SvdScaled, w[0]));
    }
    for n in [2, 4, 8] {
        for t in [TrunkKind::Legendre, TrunkKind::Cosine] {
            assert!(trunk(TrunkKind::SvdScaled, n) <= trunk(t, n) * (1.0 + 1e-12));
        }
    }
    let series = experiment::plot_series(PlotSource::Sweep(&report), PlotKind::BasisSweep).unwrap();
    assert!(series.contains("svd_scaled/delta_trunk_train,2,"));
}

#[test]
fn sweep_rows_follow_the_sweep_kind() {
    let mut c = tiny();
    c.sweep.widths = vec![4, 8];
    let labels = |k| experiment::sweep_configs(&c, k).unwrap().into_iter().map(|(l, _)| l).collect::<Vec<_>>();
    assert_eq!(labels(SweepKind::Widths), ["unstacked-w4", "unstacked-w8"]);
    assert_eq!(labels(SweepKind::Optimizers), ["gd", "adam", "adagrad"]);
    assert_eq!(labels(SweepKind::Exponents).len(), 5);
    let coupling = experiment::sweep_configs(&c, SweepKind::Coupling).unwrap();
    assert!(coupling.iter().all(|(_, c)| c.coupling.every > 0));
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_deeponet")).args(args).output().unwrap()
}

const TINY: &[&str] = &[
    "--grid", "32", "--input-dim", "32", "--m-train", "24", "--m-test", "6", "--n-basis", "4",
    "--width", "6", "--depth", "2", "--epochs", "5",
];

#[test]
fn cli_train_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["train", "-o", out.to_str().unwrap()];
    args.extend(TINY);
    let r = cli(&args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(out.join("plots/mode_losses.csv").exists());
    let report = out.join("report.json");
    let p = cli(&["plot", report.to_str().unwrap(), "--kind", "loss-curves", "-o", dir.path().to_str().unwrap()]);
    assert!(p.status.success());
    assert!(dir.path().join("loss_curves.csv").exists());
    assert_eq!(cli(&["plot", report.to_str().unwrap(), "--kind", "bogus"]).status.code(), Some(2));
    assert_eq!(cli(&["plot", "/nonexistent/report.json", "--kind", "coupling"]).status.code(), Some(1));
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(&["train", "--preset", "nope"]).status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"problem":"kdv"}"#).unwrap();
    assert_eq!(cli(&["train", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let out = dir.path().join("div");
    let mut args = vec!["train", "-o", out.to_str().unwrap(), "--optimizer", "gd", "--alpha1", "1e9"];
    args.extend(TINY);
    let r = cli(&args);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    let report = RunReport::read(out.join("report.json")).unwrap();
    assert!(report.diverged());
    assert!(read(out.join("history.csv")).lines().count() >= 2);
}

//! Drives a run through the experiment harness the CLI uses: a JSON config
//! with overrides, the run directory it produces, and plot-ready series.
//!
//! cargo run --release --example experiment_config

use deeponet_core::experiment::{self, ExperimentConfig, Overrides, PlotKind, PlotSource, RunReport};

fn main() -> deeponet_core::Result<()> {
    let json = ExperimentConfig::preset("desk-kdv")?.to_json()?;
    let mut config = ExperimentConfig::from_json(&json)?;
    config.apply(&Overrides {
        epochs: Some(200),
        mode_every: Some(50),
        ..Overrides::default()
    });

    let out = std::env::temp_dir().join("deeponet-example-run");
    let report = experiment::run(&config, &out)?;
    println!("config {} -> {}", &report.config_hash[..12], out.display());
    if let Some(e) = &report.error_train {
        println!("train: delta {:.4e} = trunk {:.4e} (+) branch {:.4e}", e.delta_total, e.delta_trunk, e.delta_branch);
    }

    // Reports round-trip through the parser.
    let back = RunReport::read(out.join("report.json"))?;
    assert_eq!(back.history, report.history);

    for kind in [PlotKind::LossCurves, PlotKind::ModeLosses] {
        let path = experiment::emit_plot_series(PlotSource::Run(&back), kind, &out.join("plots"))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

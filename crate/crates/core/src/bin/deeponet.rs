use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use deeponet_core::experiment::{
    self, ExperimentConfig, Overrides, PlotKind, PlotSource, RunReport, SweepKind, SweepReport,
};
use deeponet_core::{Error, Result};

#[derive(Parser)]
#[command(name = "deeponet", version, about = "DeepONet error decomposition and mode-loss experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment config; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Named preset used when no config file is given.
    #[arg(long, default_value = "desk-kdv")]
    preset: String,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/test datasets.
    GenData(Common),
    /// Train one model and write its report.
    Train(Common),
    /// Trunk basis × N sweep.
    SweepBases(Common),
    /// Re-weighting exponent sweep.
    SweepExponents(Common),
    /// GD / Adam / AdaGrad comparison.
    SweepOptimizers(Common),
    /// Branch width sweep (optionally stacked vs. width-matched unstacked).
    SweepWidths(Common),
    /// Mode-coupling terms over training, one run per width.
    Coupling(Common),
    /// Frequency estimates of the right singular functions plus a training run.
    Spectral(Common),
    /// Synthetic-data spectral-bias run.
    Synth(Common),
    /// Re-emit a plot series from an existing report.json or sweep.json.
    Plot {
        report: PathBuf,
        /// mode_losses, loss_curves, coupling, frequencies or basis_sweep.
        #[arg(long)]
        kind: String,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut config = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(&c.preset)?,
    };
    config.apply(&c.overrides);
    Ok(config)
}

fn print_run(r: &RunReport, out: &Path) {
    println!("wrote {}", out.display());
    if let Some(loss) = r.history.final_train_loss() {
        println!("final train loss {loss:.6e} ({:?})", r.history.status);
    }
    if let Some(e) = &r.error_train {
        println!(
            "train delta {:.4e} (trunk {:.4e}, branch {:.4e})",
            e.delta_total, e.delta_trunk, e.delta_branch
        );
    }
    if let Some(e) = &r.error_test {
        println!(
            "test  delta {:.4e} (trunk {:.4e}, branch {:.4e})",
            e.delta_total, e.delta_trunk, e.delta_branch
        );
    }
    if let Some(m) = &r.modes {
        println!("modes below base loss: {}/{}", m.improved_train_count(), m.modes.len());
    }
    if let Some(g) = r.mean_neg_gamma() {
        println!("mean -gamma {g:.4}");
    }
    if let Some(f) = &r.frequencies {
        if let Some(rho) = f.rho_loss_dictated.or(f.rho_loss_tv) {
            println!("spearman(L_i, frequency) {rho:.3}");
        }
    }
}

fn run_single(config: &ExperimentConfig, label: &str, f: fn(&ExperimentConfig, &Path) -> Result<RunReport>) -> Result<bool> {
    let out = config.output_dir(label)?;
    let report = f(config, &out)?;
    experiment::emit_all(&report, &out.join("plots"))?;
    print_run(&report, &out);
    Ok(report.diverged())
}

fn run_sweep(config: &ExperimentConfig, kind: SweepKind) -> Result<bool> {
    let out = config.output_dir(&format!("sweep-{}", kind.name()))?;
    let report = experiment::sweep(config, kind, &out)?;
    if kind == SweepKind::Bases {
        experiment::emit_plot_series(PlotSource::Sweep(&report), PlotKind::BasisSweep, &out.join("plots"))?;
    }
    for row in &report.rows {
        let run = RunReport::read(out.join(&row.label).join("report.json"))?;
        experiment::emit_all(&run, &out.join(&row.label).join("plots"))?;
    }
    print!("{}", report.to_csv());
    println!("wrote {}", out.display());
    Ok(report.any_diverged())
}

fn plot(report: &Path, kind: &str, output: Option<PathBuf>) -> Result<()> {
    let kind: PlotKind = kind.parse()?;
    let dir = output.unwrap_or_else(|| report.parent().unwrap_or(Path::new(".")).join("plots"));
    let path = if kind == PlotKind::BasisSweep {
        experiment::emit_plot_series(PlotSource::Sweep(&SweepReport::read(report)?), kind, &dir)?
    } else {
        experiment::emit_plot_series(PlotSource::Run(&RunReport::read(report)?), kind, &dir)?
    };
    println!("wrote {}", path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData(c) => {
            let config = load_config(&c)?;
            let out = config.output_dir("data")?;
            let (train, test) = experiment::gen_data(&config, &out)?;
            println!(
                "wrote {} ({} train / {} test samples, n = {}, rank {})",
                out.display(),
                train.m(),
                test.m(),
                train.n(),
                train.numerical_rank()?
            );
            Ok(false)
        }
        Command::Train(c) => run_single(&load_config(&c)?, "train", experiment::run),
        Command::SweepBases(c) => run_sweep(&load_config(&c)?, SweepKind::Bases),
        Command::SweepExponents(c) => run_sweep(&load_config(&c)?, SweepKind::Exponents),
        Command::SweepOptimizers(c) => run_sweep(&load_config(&c)?, SweepKind::Optimizers),
        Command::SweepWidths(c) => run_sweep(&load_config(&c)?, SweepKind::Widths),
        Command::Coupling(c) => run_sweep(&load_config(&c)?, SweepKind::Coupling),
        Command::Spectral(c) => run_single(&load_config(&c)?, "spectral", experiment::spectral_run),
        Command::Synth(c) => run_single(&load_config(&c)?, "synth", experiment::synth),
        Command::Plot { report, kind, output } => plot(&report, &kind, output).map(|()| false),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("training diverged; partial report written");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Error::exit_code(&e) as u8)
        }
    }
}

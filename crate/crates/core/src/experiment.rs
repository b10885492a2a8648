//! Experiment harness behind the `deeponet` binary: configuration and
//! presets, single runs, sweeps, and plot-ready CSV series.
//!
//! Every run writes into its own directory: `report.json`, `history.csv`,
//! and depending on the configuration `modes.csv`, `coupling.csv`,
//! `taylor.csv`, `frequencies.csv` and the trained model.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupling::{self, CouplingRow, CouplingTracker, TaylorCheck};
use crate::deeponet::{
    self, BranchKind, DeepOnet, ModelConfig, Objective, TrainConfig, TrainHistory, TrainObserver,
    TrainStatus, TrainingSet, TrunkKind,
};
use crate::errdecomp::{self, ErrorReport, ModeLossReport};
use crate::error::{Error, Result};
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::pde_data::{self, Dataset, ProblemKind, ProblemSpec};
use crate::spectral::{self, EstimatorKind, SyntheticData, SyntheticSpec};

/// Version of the `report.json` / `sweep.json` layout.
pub const REPORT_SCHEMA: u32 = 1;

/// Environment variable naming the root directory for run outputs.
pub const OUTPUT_ROOT_ENV: &str = "DEEPONET_OUT";

/// ChaCha stream for model initialisation; datasets use streams 0 and 1.
const MODEL_STREAM: u64 = 2;
const SYNTH_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reweight {
    /// Exponent `e` of the mode weights `σᵢ^{2+2e}`.
    pub e: f64,
}

impl Default for Reweight {
    fn default() -> Self {
        Self { e: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingConfig {
    /// Sample `d`, `Ω`, `γ` every `every` epochs; 0 turns tracking off.
    pub every: usize,
    /// GD steps of the first-order Taylor check run before training.
    pub taylor_steps: usize,
    /// Also write the full `S` matrix at each sampled epoch.
    pub keep_matrices: bool,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            every: 0,
            taylor_steps: 20,
            keep_matrices: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    /// Estimate the frequencies of the right singular functions in every run.
    pub enabled: bool,
    pub k_tv: usize,
    pub k_le: usize,
    /// Projections for the projected-Fourier estimator; defaults to the
    /// number of input modes (PDE data) or the input dimension (synthetic).
    pub projections: Option<usize>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            k_tv: 3,
            k_le: 50,
            projections: None,
        }
    }
}

/// Lists driving the sweep subcommands. An empty list means "the single
/// value from the base configuration", except where noted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n_basis: Vec<usize>,
    /// Empty: every trunk kind.
    pub trunks: Vec<TrunkKind>,
    /// Empty: `e ∈ {−1, −0.5, 0, 0.5, 1}`.
    pub exponents: Vec<f64>,
    /// Empty: GD, Adam and AdaGrad.
    pub optimizers: Vec<OptimizerKind>,
    pub widths: Vec<usize>,
    /// In a width sweep, pair every stacked width with the unstacked width of
    /// matching parameter count.
    pub compare_branches: bool,
}

/// Multipliers applied to a preset to shrink or grow it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeskScale {
    pub grid: f64,
    pub samples: f64,
    pub epochs: f64,
}

impl Default for DeskScale {
    fn default() -> Self {
        Self {
            grid: 1.0,
            samples: 1.0,
            epochs: 1.0,
        }
    }
}

fn default_trunk() -> TrunkKind {
    TrunkKind::SvdScaled
}

fn default_branch() -> BranchKind {
    BranchKind::Unstacked
}

fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub tau: f64,
    /// Grid points `n`; the problem default when absent.
    #[serde(default)]
    pub grid_points: Option<usize>,
    /// Input sensors `M`; the problem default when absent.
    #[serde(default)]
    pub input_dim: Option<usize>,
    pub m_train: usize,
    pub m_test: usize,
    pub n_basis: usize,
    #[serde(default = "default_trunk")]
    pub trunk: TrunkKind,
    #[serde(default = "default_branch")]
    pub branch: BranchKind,
    pub width: usize,
    pub depth: usize,
    /// Learned-trunk width and depth; the branch values when absent.
    #[serde(default)]
    pub trunk_width: Option<usize>,
    #[serde(default)]
    pub trunk_depth: Option<usize>,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub reweight: Reweight,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default = "default_one")]
    pub eval_every: usize,
    #[serde(default)]
    pub mode_every: usize,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub synth: SyntheticSpec,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub desk_scale: DeskScale,
    /// Directory with prebuilt `train/` and `test/` datasets.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: &[&str] = &[
    "desk-kdv",
    "desk-ad",
    "desk-burgers",
    "desk-bases",
    "desk-coupling",
    "desk-synth",
    "full-bases",
    "full-gd",
    "full-reweight-gd",
    "full-adam",
    "full-reweight-adam",
    "full-optimizers",
    "full-synth",
    "full-branch-ad",
    "full-branch-kdv",
    "full-branch-burgers",
    "full-stacked",
    "full-coupling",
];

impl ExperimentConfig {
    /// Reduced KdV setup that trains in seconds.
    pub fn desk_kdv() -> Self {
        Self {
            problem: ProblemKind::Kdv,
            tau: 0.2,
            grid_points: Some(100),
            input_dim: Some(100),
            m_train: 120,
            m_test: 30,
            n_basis: 20,
            trunk: TrunkKind::SvdScaled,
            branch: BranchKind::Unstacked,
            width: 64,
            depth: 5,
            trunk_width: None,
            trunk_depth: None,
            optimizer: OptimizerConfig::new(OptimizerKind::Gd, 1e-4),
            reweight: Reweight::default(),
            epochs: 800,
            seed: 0,
            eval_every: 1,
            mode_every: 0,
            coupling: CouplingConfig::default(),
            spectral: SpectralConfig::default(),
            synth: SyntheticSpec::default(),
            sweep: SweepConfig::default(),
            desk_scale: DeskScale::default(),
            data_dir: None,
            output: None,
        }
    }

    /// KdV at full size (`n = M = 400`, 900/100 samples).
    fn full_kdv(optimizer: OptimizerKind, alpha1: f64, width: usize, epochs: usize) -> Self {
        Self {
            grid_points: None,
            input_dim: None,
            m_train: 900,
            m_test: 100,
            n_basis: 50,
            width,
            optimizer: OptimizerConfig::new(optimizer, alpha1),
            epochs,
            ..Self::desk_kdv()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let mut c = match name {
            "desk-kdv" => Self::desk_kdv(),
            "desk-ad" => Self {
                problem: ProblemKind::AdvectionDiffusion,
                tau: 0.5,
                m_train: 200,
                m_test: 50,
                ..Self::desk_kdv()
            },
            "desk-burgers" => Self {
                problem: ProblemKind::Burgers,
                tau: 0.1,
                input_dim: Some(50),
                ..Self::desk_kdv()
            },
            "desk-bases" => {
                let mut c = Self::desk_kdv();
                c.optimizer = OptimizerConfig::new(OptimizerKind::Adam, 2e-3);
                c.sweep.n_basis = vec![5, 10, 15, 20];
                c.eval_every = 50;
                c
            }
            "desk-coupling" => {
                let mut c = Self::desk_kdv();
                c.epochs = 4000;
                c.eval_every = 100;
                c.coupling.every = 100;
                c.sweep.widths = vec![16, 64, 256];
                c
            }
            "desk-synth" | "full-synth" => {
                let mut c = Self::desk_kdv();
                c.n_basis = c.synth.n_modes;
                c.width = 50;
                c.optimizer = OptimizerConfig::new(OptimizerKind::Adam, 2e-3);
                c.epochs = 2000;
                c.synth.m_test = 100;
                c.spectral.enabled = true;
                c
            }
            "full-bases" => {
                let mut c = Self::full_kdv(OptimizerKind::Adam, 2e-3, 100, 5000);
                c.sweep.n_basis = (1..=10).map(|k| 10 * k).collect();
                c
            }
            "full-gd" => Self::full_kdv(OptimizerKind::Gd, 1e-4, 335, 4000),
            "full-reweight-gd" => {
                let mut c = Self::full_kdv(OptimizerKind::Gd, 1e-4, 335, 4000);
                c.sweep.exponents = vec![-1.0, -0.5, 0.0, 0.5, 1.0];
                c
            }
            "full-adam" => Self::full_kdv(OptimizerKind::Adam, 1e-4, 335, 4000),
            "full-reweight-adam" => {
                let mut c = Self::full_kdv(OptimizerKind::Adam, 1e-4, 335, 4000);
                c.sweep.exponents = vec![-1.0, -0.5, 0.0, 0.5, 1.0];
                c
            }
            "full-optimizers" => {
                let mut c = Self::full_kdv(OptimizerKind::Gd, 1e-4, 335, 4000);
                c.sweep.optimizers = vec![OptimizerKind::Gd, OptimizerKind::Adam, OptimizerKind::AdaGrad];
                c
            }
            "full-branch-ad" => Self {
                problem: ProblemKind::AdvectionDiffusion,
                tau: 0.5,
                n_basis: 20,
                spectral: SpectralConfig {
                    enabled: true,
                    ..SpectralConfig::default()
                },
                ..Self::full_kdv(OptimizerKind::Adam, 1e-4, 332, 4000)
            },
            "full-branch-kdv" => Self {
                spectral: SpectralConfig {
                    enabled: true,
                    ..SpectralConfig::default()
                },
                ..Self::full_kdv(OptimizerKind::Adam, 1e-4, 335, 4000)
            },
            "full-branch-burgers" => Self {
                problem: ProblemKind::Burgers,
                tau: 0.1,
                n_basis: 20,
                spectral: SpectralConfig {
                    enabled: true,
                    ..SpectralConfig::default()
                },
                ..Self::full_kdv(OptimizerKind::Adam, 1e-4, 337, 4000)
            },
            "full-stacked" => {
                let mut c = Self::full_kdv(OptimizerKind::Adam, 1e-4, 42, 4000);
                c.branch = BranchKind::Stacked;
                c.sweep.widths = vec![42];
                c.sweep.compare_branches = true;
                c
            }
            "full-coupling" => {
                let mut c = Self::full_kdv(OptimizerKind::Gd, 1e-4, 50, 4000);
                c.coupling.every = 10;
                c.coupling.keep_matrices = true;
                c.sweep.widths = vec![50, 100, 220, 335, 495];
                c
            }
            other => {
                return Err(Error::Config {
                    field: "preset".into(),
                    message: format!("unknown preset `{other}` (known: {})", PRESETS.join(", ")),
                })
            }
        };
        if c.problem == ProblemKind::Burgers && c.input_dim == Some(100) {
            c.input_dim = Some(50);
        }
        Ok(c)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_string(self)?;
        Ok(hex(&Sha256::digest(json.as_bytes())))
    }

    /// The configuration with [`DeskScale`] folded in (multipliers reset to 1).
    pub fn scaled(&self) -> Self {
        let s = self.desk_scale;
        let mut c = self.clone();
        let mul = |v: usize, f: f64| ((v as f64 * f).round() as usize).max(1);
        if s.grid != 1.0 {
            let base = self.base_problem();
            let n = self.grid_points.unwrap_or(base.grid_points);
            let m_in = self.input_dim.unwrap_or(base.input_dim);
            c.grid_points = Some(mul(n, s.grid));
            // Periodic problems sample the input on the solution grid.
            if m_in == n {
                c.input_dim = c.grid_points;
            }
        }
        if s.samples != 1.0 {
            c.m_train = mul(self.m_train, s.samples);
            c.m_test = if self.m_test == 0 { 0 } else { mul(self.m_test, s.samples) };
            c.synth.m = mul(self.synth.m, s.samples);
        }
        if s.epochs != 1.0 {
            c.epochs = (self.epochs as f64 * s.epochs).round() as usize;
        }
        c.desk_scale = DeskScale::default();
        c
    }

    fn base_problem(&self) -> ProblemSpec {
        match self.problem {
            ProblemKind::AdvectionDiffusion => ProblemSpec::advection_diffusion(self.tau),
            ProblemKind::Kdv => ProblemSpec::kdv(self.tau),
            ProblemKind::Burgers => ProblemSpec::burgers(self.tau),
        }
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        let base = self.base_problem();
        let n = self.grid_points.unwrap_or(base.grid_points);
        let m = self.input_dim.unwrap_or(base.input_dim);
        base.with_grid(n, m)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            trunk: self.trunk,
            branch: self.branch,
            n_basis: self.n_basis,
            width: self.width,
            depth: self.depth,
            trunk_width: self.trunk_width.unwrap_or(self.width),
            trunk_depth: self.trunk_depth.unwrap_or(self.depth),
        }
    }

    /// Modal loss for the SVD-scaled trunk, pointwise MSE otherwise.
    pub fn objective(&self) -> Objective {
        if self.trunk == TrunkKind::SvdScaled {
            Objective::Modal { e: self.reweight.e }
        } else {
            Objective::Pointwise
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            eval_every: self.eval_every,
            mode_every: self.mode_every,
            ..TrainConfig::new(self.epochs, self.optimizer, self.objective())
        }
    }

    /// Checks everything that can be checked without generating data.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Config {
                field: field.into(),
                message,
            })
        };
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau", format!("must be positive, got {}", self.tau));
        }
        if self.m_train == 0 {
            return bad("m_train", "must be positive".into());
        }
        if self.n_basis == 0 {
            return bad("n_basis", "must be positive".into());
        }
        if self.width == 0 || self.depth == 0 {
            return bad("width", "width and depth must be positive".into());
        }
        if self.trunk_width == Some(0) || self.trunk_depth == Some(0) {
            return bad("trunk_width", "learned-trunk width and depth must be positive".into());
        }
        self.optimizer.validate()?;
        if !self.reweight.e.is_finite() {
            return bad("reweight.e", "must be finite".into());
        }
        if self.reweight.e != 0.0 && self.trunk != TrunkKind::SvdScaled {
            return bad("reweight.e", "re-weighting needs the svd_scaled trunk".into());
        }
        if self.coupling.every > 0 && self.trunk != TrunkKind::SvdScaled {
            return bad("coupling.every", "coupling needs the svd_scaled trunk".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be positive".into());
        }
        let s = self.desk_scale;
        for (name, v) in [("grid", s.grid), ("samples", s.samples), ("epochs", s.epochs)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("desk_scale.{name}"), format!("must be positive, got {v}"));
            }
        }
        if self.spectral.k_tv == 0 || self.spectral.k_le == 0 || self.spectral.projections == Some(0) {
            return bad("spectral", "neighbour and projection counts must be positive".into());
        }
        if self.sweep.n_basis.contains(&0) {
            return bad("sweep.n_basis", "entries must be positive".into());
        }
        if self.sweep.widths.contains(&0) {
            return bad("sweep.widths", "entries must be positive".into());
        }
        if self.sweep.exponents.iter().any(|e| !e.is_finite()) {
            return bad("sweep.exponents", "entries must be finite".into());
        }
        if let Some(dir) = &self.data_dir {
            for split in ["train", "test"] {
                let meta = dir.join(split).join("meta.json");
                if !meta.is_file() {
                    return bad("data_dir", format!("{} does not exist", meta.display()));
                }
            }
        } else {
            self.problem_spec().validate().map_err(|e| Error::Config {
                field: "problem".into(),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Applies command-line overrides; set flags win over file values.
    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = o.$field.clone() { self.$field = v; } )* };
        }
        set!(problem, tau, m_train, m_test, n_basis, trunk, branch, width, depth, epochs, seed, eval_every, mode_every);
        if o.grid_points.is_some() {
            self.grid_points = o.grid_points;
        }
        if o.input_dim.is_some() {
            self.input_dim = o.input_dim;
        }
        if let Some(kind) = o.optimizer {
            self.optimizer.kind = kind;
        }
        if let Some(a) = o.alpha1 {
            self.optimizer.alpha1 = a;
        }
        if let Some(e) = o.e {
            self.reweight.e = e;
        }
        if let Some(k) = o.coupling_every {
            self.coupling.every = k;
        }
        if o.keep_matrices {
            self.coupling.keep_matrices = true;
        }
        if o.data_dir.is_some() {
            self.data_dir = o.data_dir.clone();
        }
        if o.output.is_some() {
            self.output = o.output.clone();
        }
        if !o.n_basis_list.is_empty() {
            self.sweep.n_basis = o.n_basis_list.clone();
        }
        if !o.trunks.is_empty() {
            self.sweep.trunks = o.trunks.clone();
        }
        if !o.exponents.is_empty() {
            self.sweep.exponents = o.exponents.clone();
        }
        if !o.optimizers.is_empty() {
            self.sweep.optimizers = o.optimizers.clone();
        }
        if !o.widths.is_empty() {
            self.sweep.widths = o.widths.clone();
        }
        if o.compare_branches {
            self.sweep.compare_branches = true;
        }
        if let Some(f) = o.scale_grid {
            self.desk_scale.grid = f;
        }
        if let Some(f) = o.scale_samples {
            self.desk_scale.samples = f;
        }
        if let Some(f) = o.scale_epochs {
            self.desk_scale.epochs = f;
        }
    }

    /// Output directory: the configured one, else
    /// `$DEEPONET_OUT/<label>-<hash prefix>` (root defaults to `runs`).
    pub fn output_dir(&self, label: &str) -> Result<PathBuf> {
        if let Some(dir) = &self.output {
            return Ok(dir.clone());
        }
        let root = std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        Ok(root.join(format!("{label}-{}", &self.hash()?[..12])))
    }
}

/// Command-line overrides for [`ExperimentConfig`]; `None` and empty lists
/// leave the configured value alone.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub problem: Option<ProblemKind>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    #[arg(long = "grid")]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub input_dim: Option<usize>,
    #[arg(long)]
    pub m_train: Option<usize>,
    #[arg(long)]
    pub m_test: Option<usize>,
    #[arg(long = "n-basis")]
    pub n_basis: Option<usize>,
    #[arg(long)]
    pub trunk: Option<TrunkKind>,
    #[arg(long)]
    pub branch: Option<BranchKind>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha1: Option<f64>,
    /// Re-weighting exponent.
    #[arg(long, allow_hyphen_values = true)]
    pub e: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub mode_every: Option<usize>,
    #[arg(long)]
    pub coupling_every: Option<usize>,
    #[arg(long)]
    pub keep_matrices: bool,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long = "n-basis-list", value_delimiter = ',')]
    pub n_basis_list: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub trunks: Vec<TrunkKind>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub exponents: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub optimizers: Vec<OptimizerKind>,
    #[arg(long, value_delimiter = ',')]
    pub widths: Vec<usize>,
    #[arg(long)]
    pub compare_branches: bool,
    #[arg(long)]
    pub scale_grid: Option<f64>,
    #[arg(long)]
    pub scale_samples: Option<f64>,
    #[arg(long)]
    pub scale_epochs: Option<f64>,
}

/// Training data for a run, independent of where it came from.
#[derive(Debug, Clone)]
pub struct RunData {
    pub set: TrainingSet,
    pub grid: Vec<f64>,
    /// Frequencies the data was built with (synthetic data only).
    pub dictated: Option<Vec<f64>>,
    /// Default projection count for the projected-Fourier estimator.
    pub projections: usize,
    pub dataset_hash: String,
}

impl RunData {
    pub fn from_datasets(train: &Dataset, test: &Dataset) -> Result<Self> {
        let test = (test.m() > 0).then_some(test);
        Ok(Self {
            set: TrainingSet::from_datasets(train, test)?,
            grid: train.grid.clone(),
            dictated: None,
            projections: train.meta.problem.input.n_modes,
            dataset_hash: train.meta.hash.clone(),
        })
    }

    pub fn from_synthetic(data: &SyntheticData) -> Result<Self> {
        let test = (data.a_test.cols() > 0).then(|| (data.points_test.clone(), data.a_test.clone()));
        let set = TrainingSet::new(data.points.clone(), data.a.clone(), test)?;
        let grid = set.grid_default();
        let mut h = Sha256::new();
        h.update(data.points.to_csv_string());
        h.update(data.a.to_csv_string());
        Ok(Self {
            set,
            grid,
            dictated: Some(data.mode_frequencies()),
            projections: data.spec.input_dim,
            dataset_hash: hex(&h.finalize()),
        })
    }
}

/// Loads `data_dir/{train,test}` or generates the configured PDE datasets.
pub fn load_datasets(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match &config.data_dir {
        Some(dir) => {
            let train = Dataset::read_dir(dir.join("train"))?;
            let test = Dataset::read_dir(dir.join("test"))?;
            if train.meta.problem.kind != config.problem {
                return Err(Error::Config {
                    field: "problem".into(),
                    message: format!(
                        "data in {} is {:?}, config says {:?}",
                        dir.display(),
                        train.meta.problem.kind,
                        config.problem
                    ),
                });
            }
            Ok((train, test))
        }
        None => pde_data::build_dataset(&config.problem_spec(), config.m_train, config.m_test, config.seed),
    }
}

/// Generates the datasets and writes them to `out/train` and `out/test`.
pub fn gen_data(config: &ExperimentConfig, out: &Path) -> Result<(Dataset, Dataset)> {
    let config = config.scaled();
    config.validate()?;
    let (train, test) = load_datasets(&config)?;
    train.write_dir(out.join("train"))?;
    test.write_dir(out.join("test"))?;
    Ok((train, test))
}

/// Synthetic data for `config.synth` drawn from the configured seed.
pub fn synth_data(config: &ExperimentConfig) -> Result<SyntheticData> {
    config.synth.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SYNTH_STREAM);
    spectral::synth_dataset(&config.synth, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyRow {
    /// One-based mode index.
    pub mode: usize,
    pub tv: f64,
    pub le: f64,
    pub proj_fourier: f64,
    pub dictated: Option<f64>,
}

/// Frequency estimates of the right singular functions `V₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyTable {
    pub k_tv: usize,
    pub k_le: usize,
    pub projections: usize,
    pub rows: Vec<FrequencyRow>,
    /// Spearman correlation of each estimator with the dictated frequencies.
    pub rho_dictated: Option<[f64; 3]>,
    /// Spearman correlation between final `L_{i,tr}` and the TV estimate.
    pub rho_loss_tv: Option<f64>,
    /// Spearman correlation between final `L_{i,tr}` and the dictated
    /// frequencies.
    pub rho_loss_dictated: Option<f64>,
}

impl FrequencyTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("mode,tv_k{},le_k{},proj_fourier,dictated\n", self.k_tv, self.k_le);
        for r in &self.rows {
            let d = r.dictated.map(|x| format!("{x:e}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:e},{:e},{:e},{}", r.mode, r.tv, r.le, r.proj_fourier, d);
        }
        s
    }
}

/// Estimates the frequency of the first `n_modes` right singular functions
/// of the training data.
pub fn frequency_table(config: &SpectralConfig, data: &RunData, n_modes: usize) -> Result<FrequencyTable> {
    let set = &data.set;
    let r = n_modes.min(set.svd.v.cols());
    let v1 = set.svd.v.columns(0, r);
    let projections = config.projections.unwrap_or(data.projections);
    let tv = spectral::estimate_all(&set.p_train, &v1, EstimatorKind::Tv, config.k_tv)?;
    let le = spectral::estimate_all(&set.p_train, &v1, EstimatorKind::LaplacianEnergy, config.k_le)?;
    let pf = spectral::estimate_all(&set.p_train, &v1, EstimatorKind::ProjectedFourier, projections)?;
    let dictated = data.dictated.as_ref().map(|d| d[..r].to_vec());
    let rows = (0..r)
        .map(|i| FrequencyRow {
            mode: i + 1,
            tv: tv.values[i],
            le: le.values[i],
            proj_fourier: pf.values[i],
            dictated: dictated.as_ref().map(|d| d[i]),
        })
        .collect();
    let rho_dictated = dictated.as_ref().map(|d| {
        [
            spectral::spearman(&tv.values, d),
            spectral::spearman(&le.values, d),
            spectral::spearman(&pf.values, d),
        ]
    });
    Ok(FrequencyTable {
        k_tv: config.k_tv,
        k_le: config.k_le,
        projections,
        rows,
        rho_dictated,
        rho_loss_tv: None,
        rho_loss_dictated: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema: u32,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub dataset_hash: String,
    pub param_count: usize,
    /// Absent when training diverged and the decomposition is not finite.
    pub error_train: Option<ErrorReport>,
    pub error_test: Option<ErrorReport>,
    pub modes: Option<ModeLossReport>,
    pub history: TrainHistory,
    pub coupling: Option<Vec<CouplingRow>>,
    pub taylor: Option<Vec<TaylorCheck>>,
    pub frequencies: Option<FrequencyTable>,
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn diverged(&self) -> bool {
        matches!(self.history.status, TrainStatus::Diverged { .. })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &serde_json::to_string_pretty(self)?)
    }

    /// Reads a report, rejecting unknown fields and other schema versions.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if report.schema != REPORT_SCHEMA {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("report schema {} (expected {REPORT_SCHEMA})", report.schema),
            });
        }
        Ok(report)
    }

    /// Mean of `−γ` over the sampled epochs, if coupling was tracked.
    pub fn mean_neg_gamma(&self) -> Option<f64> {
        let vals: Vec<f64> = self.coupling.as_ref()?.iter().filter_map(|r| r.gamma).map(|g| -g).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn finite_report(r: Result<ErrorReport>) -> Result<Option<ErrorReport>> {
    match r {
        Ok(r) if r.eps_total.is_finite() && r.eps_branch.is_finite() => Ok(Some(r)),
        Ok(_) => Ok(None),
        Err(e) if e.is_numerical() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Generates (or loads) the PDE data and runs one configuration.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let config = config.scaled();
    config.validate()?;
    let (train, test) = load_datasets(&config)?;
    run_with(&config, &RunData::from_datasets(&train, &test)?, out)
}

/// Trains one model on `data` and writes the run directory `out`.
///
/// A diverged run still produces a report; its history is cut at the
/// divergence epoch and `history.status` says so.
pub fn run_with(config: &ExperimentConfig, data: &RunData, out: &Path) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let svd_scaled = config.trunk == TrunkKind::SvdScaled;
    let set = if svd_scaled {
        data.set.clone().with_modes(config.n_basis)?
    } else {
        data.set.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(MODEL_STREAM);
    let mut model = DeepOnet::new(
        config.model_config(),
        &data.grid,
        set.p_train.rows(),
        Some(&set.svd),
        &mut rng,
    )?;
    model.dataset_hash = Some(data.dataset_hash.clone());

    let taylor = if config.coupling.every > 0 && config.coupling.taylor_steps > 0 {
        Some(coupling::taylor_sequence(
            &model,
            &set,
            config.optimizer.alpha1,
            config.coupling.taylor_steps,
        )?)
    } else {
        None
    };
    let mut tracker = (config.coupling.every > 0).then(|| {
        let mut t = CouplingTracker::new(config.coupling.every);
        t.keep_matrices = config.coupling.keep_matrices;
        t
    });
    let history = deeponet::train(
        &mut model,
        &set,
        &config.train_config(),
        tracker.as_mut().map(|t| t as &mut dyn TrainObserver),
    )?;

    let t = model.trunk_values()?;
    let error_train = finite_report(
        model
            .branch_matrix(&set.p_train)
            .and_then(|b| errdecomp::decompose(&t, &b, &set.a_train)),
    )?;
    let error_test = match (&set.p_test, &set.a_test) {
        (Some(p), Some(a)) => finite_report(model.branch_matrix(p).and_then(|b| errdecomp::decompose(&t, &b, a)))?,
        _ => None,
    };
    let modes = if svd_scaled && error_train.is_some() {
        Some(model.mode_report(&set)?)
    } else {
        None
    };
    let frequencies = if config.spectral.enabled {
        let mut table = frequency_table(&config.spectral, data, config.n_basis)?;
        if let Some(m) = &modes {
            let l: Vec<f64> = m.l_train()[..table.rows.len()].to_vec();
            let tv: Vec<f64> = table.rows.iter().map(|r| r.tv).collect();
            table.rho_loss_tv = Some(spectral::spearman(&l, &tv));
            if let Some(d) = &data.dictated {
                table.rho_loss_dictated = Some(spectral::spearman(&l, &d[..l.len()]));
            }
        }
        Some(table)
    } else {
        None
    };

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("history.csv"), &history.to_csv())?;
    if let Some(m) = &modes {
        write_text(&out.join("modes.csv"), &m.to_csv())?;
    }
    if let Some(t) = &tracker {
        write_text(&out.join("coupling.csv"), &t.to_csv())?;
        t.write_matrices(out)?;
    }
    if let Some(checks) = &taylor {
        let mut s = String::from("step,predicted,measured,relative_gap\n");
        for (k, c) in checks.iter().enumerate() {
            let _ = writeln!(s, "{},{:e},{:e},{:e}", k, c.predicted, c.measured, c.relative_gap());
        }
        write_text(&out.join("taylor.csv"), &s)?;
    }
    if let Some(f) = &frequencies {
        write_text(&out.join("frequencies.csv"), &f.to_csv())?;
    }
    model.save(out.join("model"))?;

    let report = RunReport {
        schema: REPORT_SCHEMA,
        config_hash: config.hash()?,
        config: config.clone(),
        dataset_hash: data.dataset_hash.clone(),
        param_count: model.param_count(),
        error_train,
        error_test,
        modes,
        history,
        coupling: tracker.map(|t| t.rows),
        taylor,
        frequencies,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    report.write(out.join("report.json"))?;
    Ok(report)
}

/// Synthetic-data run: dictated-frequency data, frequency estimates, and the trained
/// modified DeepONet's mode losses.
pub fn synth(config: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let mut config = config.scaled();
    config.n_basis = config.synth.n_modes;
    config.trunk = TrunkKind::SvdScaled;
    config.spectral.enabled = true;
    config.data_dir = None;
    let data = synth_data(&config)?;
    run_with(&config, &RunData::from_synthetic(&data)?, out)
}

/// Frequency analysis of a PDE dataset's right singular functions, with a
/// training run so the final mode losses can be ranked against them.
pub fn spectral_run(config: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let mut config = config.clone();
    config.spectral.enabled = true;
    run(&config, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Bases,
    Exponents,
    Optimizers,
    Widths,
    Coupling,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Bases => "bases",
            SweepKind::Exponents => "exponents",
            SweepKind::Optimizers => "optimizers",
            SweepKind::Widths => "widths",
            SweepKind::Coupling => "coupling",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRow {
    pub label: String,
    pub trunk: TrunkKind,
    pub branch: BranchKind,
    pub n_basis: usize,
    pub width: usize,
    pub optimizer: OptimizerKind,
    pub e: f64,
    pub param_count: usize,
    pub status: TrainStatus,
    #[serde(with = "crate::serde_float::option")]
    pub final_train_loss: Option<f64>,
    pub delta_train: Option<f64>,
    pub delta_trunk_train: Option<f64>,
    pub delta_branch_train: Option<f64>,
    pub delta_test: Option<f64>,
    pub delta_trunk_test: Option<f64>,
    pub delta_branch_test: Option<f64>,
    pub improved_train: Option<usize>,
    /// Coefficient of variation of the final `L_{i,tr}`.
    pub cv_l_train: Option<f64>,
    pub mean_neg_gamma: Option<f64>,
}

impl SweepRow {
    fn from_report(label: String, r: &RunReport) -> Self {
        let c = &r.config;
        let tr = r.error_train.as_ref();
        let te = r.error_test.as_ref();
        Self {
            label,
            trunk: c.trunk,
            branch: c.branch,
            n_basis: c.n_basis,
            width: c.width,
            optimizer: c.optimizer.kind,
            e: c.reweight.e,
            param_count: r.param_count,
            status: r.history.status,
            final_train_loss: r.history.final_train_loss(),
            delta_train: tr.map(|e| e.delta_total),
            delta_trunk_train: tr.map(|e| e.delta_trunk),
            delta_branch_train: tr.map(|e| e.delta_branch),
            delta_test: te.map(|e| e.delta_total),
            delta_trunk_test: te.map(|e| e.delta_trunk),
            delta_branch_test: te.map(|e| e.delta_branch),
            improved_train: r.modes.as_ref().map(ModeLossReport::improved_train_count),
            cv_l_train: r.modes.as_ref().map(|m| coefficient_of_variation(&m.l_train())),
            mean_neg_gamma: r.mean_neg_gamma(),
        }
    }
}

/// Population standard deviation over mean.
pub fn coefficient_of_variation(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    var.sqrt() / mean
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepReport {
    pub schema: u32,
    pub kind: SweepKind,
    pub base_config_hash: String,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut s = String::from(
            "label,trunk,branch,n_basis,width,optimizer,e,param_count,status,final_train_loss,\
             delta_train,delta_trunk_train,delta_branch_train,delta_test,delta_trunk_test,\
             delta_branch_test,improved_train,cv_l_train,mean_neg_gamma\n",
        );
        for r in &self.rows {
            let status = match r.status {
                TrainStatus::Completed => "completed".to_string(),
                TrainStatus::Diverged { epoch } => format!("diverged@{epoch}"),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.label,
                r.trunk.name(),
                branch_name(r.branch),
                r.n_basis,
                r.width,
                optimizer_name(r.optimizer),
                r.e,
                r.param_count,
                status,
                opt(r.final_train_loss),
                opt(r.delta_train),
                opt(r.delta_trunk_train),
                opt(r.delta_branch_train),
                opt(r.delta_test),
                opt(r.delta_trunk_test),
                opt(r.delta_branch_test),
                r.improved_train.map(|k| k.to_string()).unwrap_or_default(),
                opt(r.cv_l_train),
                opt(r.mean_neg_gamma),
            );
        }
        s
    }

    pub fn any_diverged(&self) -> bool {
        self.rows.iter().any(|r| matches!(r.status, TrainStatus::Diverged { .. }))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if report.schema != REPORT_SCHEMA {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("sweep schema {} (expected {REPORT_SCHEMA})", report.schema),
            });
        }
        Ok(report)
    }
}

fn branch_name(b: BranchKind) -> &'static str {
    match b {
        BranchKind::Unstacked => "unstacked",
        BranchKind::Stacked => "stacked",
    }
}

fn optimizer_name(k: OptimizerKind) -> &'static str {
    match k {
        OptimizerKind::Gd => "gd",
        OptimizerKind::Adam => "adam",
        OptimizerKind::AdaGrad => "adagrad",
    }
}

/// The labelled configurations a sweep runs, in output order.
pub fn sweep_configs(base: &ExperimentConfig, kind: SweepKind) -> Result<Vec<(String, ExperimentConfig)>> {
    let base = base.scaled();
    let mut out = Vec::new();
    match kind {
        SweepKind::Bases => {
            let trunks = if base.sweep.trunks.is_empty() {
                TrunkKind::FIXED.into_iter().chain([TrunkKind::Learned]).collect()
            } else {
                base.sweep.trunks.clone()
            };
            let ns = if base.sweep.n_basis.is_empty() {
                vec![base.n_basis]
            } else {
                base.sweep.n_basis.clone()
            };
            for &trunk in &trunks {
                for &n in &ns {
                    let mut c = base.clone();
                    c.trunk = trunk;
                    c.n_basis = n;
                    c.reweight.e = 0.0;
                    c.coupling.every = 0;
                    out.push((format!("{}-N{n}", trunk.name()), c));
                }
            }
        }
        SweepKind::Exponents => {
            let es = if base.sweep.exponents.is_empty() {
                vec![-1.0, -0.5, 0.0, 0.5, 1.0]
            } else {
                base.sweep.exponents.clone()
            };
            for e in es {
                let mut c = base.clone();
                c.trunk = TrunkKind::SvdScaled;
                c.reweight.e = e;
                out.push((format!("e{e}"), c));
            }
        }
        SweepKind::Optimizers => {
            let kinds = if base.sweep.optimizers.is_empty() {
                vec![OptimizerKind::Gd, OptimizerKind::Adam, OptimizerKind::AdaGrad]
            } else {
                base.sweep.optimizers.clone()
            };
            for k in kinds {
                let mut c = base.clone();
                c.optimizer.kind = k;
                out.push((optimizer_name(k).to_string(), c));
            }
        }
        SweepKind::Widths | SweepKind::Coupling => {
            let widths = if base.sweep.widths.is_empty() {
                vec![base.width]
            } else {
                base.sweep.widths.clone()
            };
            for &w in &widths {
                let mut c = base.clone();
                c.width = w;
                if kind == SweepKind::Coupling {
                    c.trunk = TrunkKind::SvdScaled;
                    c.optimizer.kind = OptimizerKind::Gd;
                    if c.coupling.every == 0 {
                        c.coupling.every = 10;
                    }
                }
                out.push((format!("{}-w{w}", branch_name(c.branch)), c.clone()));
                if kind == SweepKind::Widths && base.sweep.compare_branches && c.branch == BranchKind::Stacked {
                    let input_dim = c.problem_spec().input_dim;
                    let wu = deeponet::match_unstacked_width(w, c.n_basis, c.depth, input_dim);
                    let mut u = c;
                    u.branch = BranchKind::Unstacked;
                    u.width = wu;
                    out.push((format!("unstacked-w{wu}"), u));
                }
            }
        }
    }
    Ok(out)
}

/// Runs every configuration of a sweep on shared data, each into
/// `out/<label>`, then writes `out/sweep.csv` and `out/sweep.json`.
pub fn sweep(base: &ExperimentConfig, kind: SweepKind, out: &Path) -> Result<SweepReport> {
    let scaled = base.scaled();
    scaled.validate()?;
    let configs = sweep_configs(&scaled, kind)?;
    for (_, c) in &configs {
        c.validate()?;
    }
    let (train, test) = load_datasets(&scaled)?;
    let data = RunData::from_datasets(&train, &test)?;
    let reports: Vec<RunReport> = configs
        .par_iter()
        .map(|(label, c)| run_with(c, &data, &out.join(label)))
        .collect::<Result<_>>()?;
    let rows = configs
        .into_iter()
        .zip(&reports)
        .map(|((label, _), r)| SweepRow::from_report(label, r))
        .collect();
    let report = SweepReport {
        schema: REPORT_SCHEMA,
        kind,
        base_config_hash: scaled.hash()?,
        rows,
    };
    write_text(&out.join("sweep.csv"), &report.to_csv())?;
    write_text(&out.join("sweep.json"), &serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Basis sweep: one row per (trunk kind, N) with train and test `δ`, `δ_T`,
/// `δ_B`.
pub fn basis_sweep(base: &ExperimentConfig, out: &Path) -> Result<SweepReport> {
    sweep(base, SweepKind::Bases, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    ModeLosses,
    LossCurves,
    Coupling,
    Frequencies,
    BasisSweep,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::ModeLosses => "mode_losses",
            PlotKind::LossCurves => "loss_curves",
            PlotKind::Coupling => "coupling",
            PlotKind::Frequencies => "frequencies",
            PlotKind::BasisSweep => "basis_sweep",
        }
    }
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "mode_losses" => Ok(PlotKind::ModeLosses),
            "loss_curves" => Ok(PlotKind::LossCurves),
            "coupling" => Ok(PlotKind::Coupling),
            "frequencies" => Ok(PlotKind::Frequencies),
            "basis_sweep" => Ok(PlotKind::BasisSweep),
            other => Err(Error::Config {
                field: "kind".into(),
                message: format!(
                    "unknown plot kind `{other}` (expected mode_losses, loss_curves, coupling, frequencies or basis_sweep)"
                ),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum PlotSource<'a> {
    Run(&'a RunReport),
    Sweep(&'a SweepReport),
}

/// Long-format `series,x,y` rows for one plot; loss curves carry an extra
/// `lr` column.
pub fn plot_series(source: PlotSource<'_>, kind: PlotKind) -> Result<String> {
    let missing = |what: &str| Error::InvalidArgument(format!("{} series need {what}", kind.name()));
    let mut s = String::new();
    let row = |s: &mut String, series: &str, x: f64, y: f64| {
        let _ = writeln!(s, "{series},{x},{y:e}");
    };
    match (kind, source) {
        (PlotKind::LossCurves, PlotSource::Run(r)) => {
            s.push_str("series,x,y,lr\n");
            for rec in &r.history.records {
                let _ = writeln!(s, "train_loss,{},{:e},{:e}", rec.epoch, rec.train_loss, rec.lr);
            }
            for rec in &r.history.records {
                if let Some(t) = rec.test_loss {
                    let _ = writeln!(s, "test_loss,{},{:e},{:e}", rec.epoch, t, rec.lr);
                }
            }
        }
        (PlotKind::ModeLosses, PlotSource::Run(r)) => {
            let m = r.modes.as_ref().ok_or_else(|| missing("a modified-DeepONet run"))?;
            s.push_str("series,x,y\n");
            for l in &m.modes {
                row(&mut s, "weighted_train", l.i as f64, l.weighted_train);
            }
            for l in &m.modes {
                if let Some(w) = l.weighted_test {
                    row(&mut s, "weighted_test", l.i as f64, w);
                }
            }
            for l in &m.modes {
                row(&mut s, "base_train", l.i as f64, l.sigma * l.sigma * l.base_train);
            }
            for l in &m.modes {
                if let Some(b) = l.base_test {
                    row(&mut s, "base_test", l.i as f64, l.sigma * l.sigma * b);
                }
            }
            for snap in &r.history.mode_records {
                let label = format!("weighted_train@{}", snap.epoch);
                for (l, li) in m.modes.iter().zip(&snap.l_train) {
                    row(&mut s, &label, l.i as f64, l.sigma * l.sigma * li);
                }
            }
        }
        (PlotKind::Coupling, PlotSource::Run(r)) => {
            let rows = r.coupling.as_ref().ok_or_else(|| missing("a run with coupling tracking"))?;
            s.push_str("series,x,y\n");
            for (name, f) in [
                ("d", (|c: &CouplingRow| Some(c.d)) as fn(&CouplingRow) -> Option<f64>),
                ("omega", |c| Some(c.omega)),
                ("gamma", |c| c.gamma),
                ("neg_gamma", |c| c.gamma.map(|g| -g)),
                ("taylor_pred", |c| Some(c.taylor_pred)),
                ("measured_dl", |c| c.measured_dl),
            ] {
                for c in rows {
                    if let Some(y) = f(c) {
                        row(&mut s, name, c.epoch as f64, y);
                    }
                }
            }
        }
        (PlotKind::Frequencies, PlotSource::Run(r)) => {
            let t = r.frequencies.as_ref().ok_or_else(|| missing("a run with frequency estimates"))?;
            s.push_str("series,x,y\n");
            let tv = format!("tv_k{}", t.k_tv);
            let le = format!("le_k{}", t.k_le);
            for f in &t.rows {
                row(&mut s, &tv, f.mode as f64, f.tv);
            }
            for f in &t.rows {
                row(&mut s, &le, f.mode as f64, f.le);
            }
            for f in &t.rows {
                row(&mut s, "proj_fourier", f.mode as f64, f.proj_fourier);
            }
            for f in &t.rows {
                if let Some(d) = f.dictated {
                    row(&mut s, "dictated", f.mode as f64, d);
                }
            }
        }
        (PlotKind::BasisSweep, PlotSource::Sweep(sw)) => {
            if sw.kind != SweepKind::Bases {
                return Err(missing("a basis sweep"));
            }
            s.push_str("series,x,y\n");
            for (suffix, f) in [
                ("delta_train", (|r: &SweepRow| r.delta_train) as fn(&SweepRow) -> Option<f64>),
                ("delta_trunk_train", |r| r.delta_trunk_train),
                ("delta_branch_train", |r| r.delta_branch_train),
                ("delta_test", |r| r.delta_test),
                ("delta_trunk_test", |r| r.delta_trunk_test),
                ("delta_branch_test", |r| r.delta_branch_test),
            ] {
                for r in &sw.rows {
                    if let Some(y) = f(r) {
                        row(&mut s, &format!("{}/{suffix}", r.trunk.name()), r.n_basis as f64, y);
                    }
                }
            }
        }
        (PlotKind::BasisSweep, PlotSource::Run(_)) => return Err(missing("a sweep report")),
        (_, PlotSource::Sweep(_)) => return Err(missing("a run report")),
    }
    Ok(s)
}

/// Writes [`plot_series`] to `dir/<kind>.csv` and returns the path.
pub fn emit_plot_series(source: PlotSource<'_>, kind: PlotKind, dir: &Path) -> Result<PathBuf> {
    let text = plot_series(source, kind)?;
    let path = dir.join(format!("{}.csv", kind.name()));
    write_text(&path, &text)?;
    Ok(path)
}

/// Emits every series a run report supports.
pub fn emit_all(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = vec![emit_plot_series(PlotSource::Run(report), PlotKind::LossCurves, dir)?];
    if report.modes.is_some() {
        paths.push(emit_plot_series(PlotSource::Run(report), PlotKind::ModeLosses, dir)?);
    }
    if report.coupling.is_some() {
        paths.push(emit_plot_series(PlotSource::Run(report), PlotKind::Coupling, dir)?);
    }
    if report.frequencies.is_some() {
        paths.push(emit_plot_series(PlotSource::Run(report), PlotKind::Frequencies, dir)?);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESETS {
            let c = ExperimentConfig::preset(name).unwrap();
            c.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
            assert_eq!(back, c, "{name}");
        }
        assert!(matches!(ExperimentConfig::preset("nope"), Err(Error::Config { .. })));
    }

    #[test]
    fn seed_is_mandatory_and_unknown_fields_rejected() {
        let mut v = serde_json::to_value(ExperimentConfig::desk_kdv()).unwrap();
        v.as_object_mut().unwrap().remove("seed");
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        let mut v = serde_json::to_value(ExperimentConfig::desk_kdv()).unwrap();
        v.as_object_mut().unwrap().insert("sed".into(), 1.into());
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = ExperimentConfig::desk_kdv();
        c.trunk = TrunkKind::Legendre;
        c.reweight.e = -1.0;
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "reweight.e"),
            other => panic!("{other:?}"),
        }
        let mut c = ExperimentConfig::desk_kdv();
        c.optimizer.alpha1 = -1.0;
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "optimizer.alpha1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_win() {
        let mut c = ExperimentConfig::desk_kdv();
        c.apply(&Overrides {
            width: Some(7),
            e: Some(-0.5),
            optimizer: Some(OptimizerKind::Adam),
            widths: vec![1, 2],
            ..Overrides::default()
        });
        assert_eq!(c.width, 7);
        assert_eq!(c.reweight.e, -0.5);
        assert_eq!(c.optimizer.kind, OptimizerKind::Adam);
        assert_eq!(c.sweep.widths, vec![1, 2]);
        assert_eq!(c.depth, 5);
    }

    #[test]
    fn desk_scale_multiplies() {
        let mut c = ExperimentConfig::desk_kdv();
        c.desk_scale = DeskScale {
            grid: 0.5,
            samples: 0.5,
            epochs: 0.25,
        };
        let s = c.scaled();
        assert_eq!((s.grid_points, s.input_dim), (Some(50), Some(50)));
        assert_eq!((s.m_train, s.m_test, s.epochs), (60, 15, 200));
        assert_eq!(s.desk_scale, DeskScale::default());
    }

    #[test]
    fn plot_kind_parsing() {
        assert_eq!("loss-curves".parse::<PlotKind>().unwrap(), PlotKind::LossCurves);
        assert!(matches!("histogram".parse::<PlotKind>(), Err(Error::Config { .. })));
    }

    #[test]
    fn sweep_labels() {
        let mut c = ExperimentConfig::desk_kdv();
        c.sweep.n_basis = vec![5, 10];
        c.sweep.trunks = vec![TrunkKind::Cosine, TrunkKind::SvdScaled];
        let labels: Vec<String> = sweep_configs(&c, SweepKind::Bases).unwrap().into_iter().map(|(l, _)| l).collect();
        assert_eq!(labels.len(), 4);
        assert_eq!(labels[0], format!("{}-N5", TrunkKind::Cosine.name()));
        let mut c = ExperimentConfig::preset("full-stacked").unwrap();
        c.sweep.widths = vec![42];
        let runs = sweep_configs(&c, SweepKind::Widths).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[1].1.width, 495);
    }
}

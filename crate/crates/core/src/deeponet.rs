//! DeepONet models `Ã = T Bᵀ`: learned or fixed trunk bases, stacked or
//! unstacked branch networks, and the full-batch training loop.
//!
//! The "modified" model fixes the trunk to `Φ₁Σ₁` from the SVD of the
//! training data and trains only the branch against `V₁`, which removes the
//! trunk error from the objective and makes the loss decompose per mode.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::errdecomp::{self, ModeLossReport};
use crate::error::{Error, Result};
use crate::linalg::{self, DataMatrix, SvdFactors};
use crate::nn::{self, ForwardCache, MlpParams, MlpShape};
use crate::optim::{self, Optimizer, OptimizerConfig, OptimizerKind};
use crate::pde_data::Dataset;

/// Training loss above which a run is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrunkKind {
    Learned,
    SvdScaled,
    SvdUnscaled,
    Legendre,
    Chebyshev,
    Cosine,
}

impl TrunkKind {
    pub const FIXED: [TrunkKind; 5] = [
        TrunkKind::SvdScaled,
        TrunkKind::SvdUnscaled,
        TrunkKind::Legendre,
        TrunkKind::Chebyshev,
        TrunkKind::Cosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrunkKind::Learned => "learned",
            TrunkKind::SvdScaled => "svd_scaled",
            TrunkKind::SvdUnscaled => "svd_unscaled",
            TrunkKind::Legendre => "legendre",
            TrunkKind::Chebyshev => "chebyshev",
            TrunkKind::Cosine => "cosine",
        }
    }
}

impl std::str::FromStr for TrunkKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "learned" => Ok(Self::Learned),
            "svd_scaled" | "svd" => Ok(Self::SvdScaled),
            "svd_unscaled" => Ok(Self::SvdUnscaled),
            "legendre" => Ok(Self::Legendre),
            "chebyshev" => Ok(Self::Chebyshev),
            "cosine" => Ok(Self::Cosine),
            other => Err(format!("unknown trunk kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Unstacked,
    Stacked,
}

impl std::str::FromStr for BranchKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "unstacked" => Ok(Self::Unstacked),
            "stacked" => Ok(Self::Stacked),
            other => Err(format!("unknown branch kind `{other}`")),
        }
    }
}

/// Evaluates the fixed trunk basis `kind` on `grid` (values in `[0, 1]`).
/// Column `k` holds the `k`-th basis function; SVD variants take the
/// leading `n_basis` left singular vectors of the training data.
pub fn trunk_matrix(
    kind: TrunkKind,
    grid: &[f64],
    train_svd: Option<&SvdFactors>,
    n_basis: usize,
) -> Result<DataMatrix> {
    if n_basis == 0 {
        return Err(Error::InvalidArgument("n_basis must be positive".into()));
    }
    let n = grid.len();
    match kind {
        TrunkKind::Learned => Err(Error::InvalidArgument(
            "a learned trunk has no fixed basis matrix".into(),
        )),
        TrunkKind::SvdScaled | TrunkKind::SvdUnscaled => {
            let f = train_svd.ok_or_else(|| {
                Error::InvalidArgument("SVD trunk requires the training-data SVD".into())
            })?;
            if f.u.rows() != n {
                return Err(Error::mismatch("trunk_matrix", n, f.u.rows()));
            }
            if n_basis > f.s.len() {
                return Err(Error::InvalidArgument(format!(
                    "requested {n_basis} SVD modes but only {} are available",
                    f.s.len()
                )));
            }
            let phi = f.u.columns(0, n_basis);
            if kind == TrunkKind::SvdScaled {
                phi.scale_columns(&f.s[..n_basis])
            } else {
                Ok(phi)
            }
        }
        TrunkKind::Legendre | TrunkKind::Chebyshev => {
            let mut t = DataMatrix::zeros(n, n_basis);
            for (i, &x) in grid.iter().enumerate() {
                let s = 2.0 * x - 1.0;
                let row = t.row_mut(i);
                row[0] = 1.0;
                if n_basis > 1 {
                    row[1] = s;
                }
                for k in 1..n_basis.saturating_sub(1) {
                    let kf = k as f64;
                    row[k + 1] = if kind == TrunkKind::Legendre {
                        ((2.0 * kf + 1.0) * s * row[k] - kf * row[k - 1]) / (kf + 1.0)
                    } else {
                        2.0 * s * row[k] - row[k - 1]
                    };
                }
            }
            Ok(t)
        }
        TrunkKind::Cosine => Ok(DataMatrix::from_fn(n, n_basis, |i, k| {
            (k as f64 * std::f64::consts::PI * grid[i]).cos()
        })),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub trunk: TrunkKind,
    pub branch: BranchKind,
    pub n_basis: usize,
    /// Hidden width of each branch network.
    pub width: usize,
    pub depth: usize,
    /// Hidden width and depth of the learned trunk (ignored otherwise).
    pub trunk_width: usize,
    pub trunk_depth: usize,
}

impl ModelConfig {
    /// Modified DeepONet: SVD-scaled trunk with an unstacked branch.
    pub fn modified(n_basis: usize, width: usize, depth: usize) -> Self {
        Self {
            trunk: TrunkKind::SvdScaled,
            branch: BranchKind::Unstacked,
            n_basis,
            width,
            depth,
            trunk_width: width,
            trunk_depth: depth,
        }
    }

    pub fn branch_shapes(&self, input_dim: usize) -> Result<Vec<MlpShape>> {
        match self.branch {
            BranchKind::Unstacked => Ok(vec![MlpShape::new(
                input_dim,
                self.width,
                self.depth,
                self.n_basis,
            )?]),
            BranchKind::Stacked => {
                let s = MlpShape::new(input_dim, self.width, self.depth, 1)?;
                Ok(vec![s; self.n_basis])
            }
        }
    }

    pub fn branch_param_count(&self, input_dim: usize) -> Result<usize> {
        Ok(self
            .branch_shapes(input_dim)?
            .iter()
            .map(MlpShape::param_count)
            .sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trunk {
    Fixed(DataMatrix),
    /// Trunk network mapping a coordinate to `N` outputs, evaluated on the
    /// stored `1 × n` coordinate row.
    Learned { net: MlpParams, coords: DataMatrix },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Branch {
    Unstacked(MlpParams),
    Stacked(Vec<MlpParams>),
}

impl Branch {
    fn nets(&self) -> &[MlpParams] {
        match self {
            Branch::Unstacked(p) => std::slice::from_ref(p),
            Branch::Stacked(v) => v,
        }
    }

    fn nets_mut(&mut self) -> &mut [MlpParams] {
        match self {
            Branch::Unstacked(p) => std::slice::from_mut(p),
            Branch::Stacked(v) => v,
        }
    }
}

/// Forward state of the branch for one input batch.
pub struct BranchCache {
    caches: Vec<ForwardCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepOnet {
    pub config: ModelConfig,
    pub input_dim: usize,
    pub trunk: Trunk,
    pub branch: Branch,
    /// Hash of the training dataset the fixed trunk was built from.
    pub dataset_hash: Option<String>,
}

impl DeepOnet {
    /// Builds a model on `grid`. SVD trunks need `train_svd`; branch (and
    /// learned trunk) weights are Glorot-initialised from `rng`.
    pub fn new<R: Rng + ?Sized>(
        config: ModelConfig,
        grid: &[f64],
        input_dim: usize,
        train_svd: Option<&SvdFactors>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut nets = Vec::new();
        for shape in config.branch_shapes(input_dim)? {
            nets.push(MlpParams::glorot(shape, rng)?);
        }
        let branch = match config.branch {
            BranchKind::Unstacked => Branch::Unstacked(nets.remove(0)),
            BranchKind::Stacked => Branch::Stacked(nets),
        };
        let trunk = match config.trunk {
            TrunkKind::Learned => {
                let shape = MlpShape::new(1, config.trunk_width, config.trunk_depth, config.n_basis)?;
                Trunk::Learned {
                    net: MlpParams::glorot(shape, rng)?,
                    coords: DataMatrix::new(1, grid.len(), grid.to_vec())?,
                }
            }
            kind => Trunk::Fixed(trunk_matrix(kind, grid, train_svd, config.n_basis)?),
        };
        Ok(Self {
            config,
            input_dim,
            trunk,
            branch,
            dataset_hash: None,
        })
    }

    pub fn n_basis(&self) -> usize {
        self.config.n_basis
    }

    pub fn grid_len(&self) -> usize {
        match &self.trunk {
            Trunk::Fixed(t) => t.rows(),
            Trunk::Learned { coords, .. } => coords.cols(),
        }
    }

    pub fn branch_param_count(&self) -> usize {
        self.branch.nets().iter().map(MlpParams::len).sum()
    }

    /// Length of the flat parameter vector (branch nets, then the learned
    /// trunk if any).
    pub fn param_count(&self) -> usize {
        self.branch_param_count()
            + match &self.trunk {
                Trunk::Learned { net, .. } => net.len(),
                Trunk::Fixed(_) => 0,
            }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for net in self.branch.nets() {
            out.extend_from_slice(&net.values);
        }
        if let Trunk::Learned { net, .. } = &self.trunk {
            out.extend_from_slice(&net.values);
        }
        out
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::mismatch("set_params", self.param_count(), values.len()));
        }
        let mut off = 0;
        for net in self.branch.nets_mut() {
            let len = net.len();
            net.values.copy_from_slice(&values[off..off + len]);
            off += len;
        }
        if let Trunk::Learned { net, .. } = &mut self.trunk {
            net.values.copy_from_slice(&values[off..]);
        }
        Ok(())
    }

    /// The trunk matrix `T` (`n × N`).
    pub fn trunk_values(&self) -> Result<DataMatrix> {
        match &self.trunk {
            Trunk::Fixed(t) => Ok(t.clone()),
            Trunk::Learned { net, coords } => Ok(nn::forward(net, coords)?.0.transpose()),
        }
    }

    /// Branch outputs `Bᵀ` (`N × m`) with the state needed for backward.
    pub fn branch_forward(&self, p_hat: &DataMatrix) -> Result<(DataMatrix, BranchCache)> {
        if p_hat.rows() != self.input_dim {
            return Err(Error::mismatch("branch input", self.input_dim, p_hat.rows()));
        }
        match &self.branch {
            Branch::Unstacked(net) => {
                let (out, cache) = nn::forward(net, p_hat)?;
                Ok((out, BranchCache { caches: vec![cache] }))
            }
            Branch::Stacked(nets) => {
                let m = p_hat.cols();
                let mut out = DataMatrix::zeros(nets.len(), m);
                let mut caches = Vec::with_capacity(nets.len());
                for (i, net) in nets.iter().enumerate() {
                    let (row, cache) = nn::forward(net, p_hat)?;
                    out.row_mut(i).copy_from_slice(row.values());
                    caches.push(cache);
                }
                Ok((out, BranchCache { caches }))
            }
        }
    }

    /// Gradient of `Σ d_bt ⊙ Bᵀ` with respect to the branch parameters.
    pub fn branch_backward(&self, cache: &BranchCache, d_bt: &DataMatrix) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.branch_param_count()];
        match &self.branch {
            Branch::Unstacked(net) => {
                nn::backward_into(net, &cache.caches[0], d_bt, &mut grad)?;
            }
            Branch::Stacked(nets) => {
                if d_bt.rows() != nets.len() {
                    return Err(Error::mismatch("stacked backward", nets.len(), d_bt.rows()));
                }
                let mut off = 0;
                for (i, net) in nets.iter().enumerate() {
                    let row = DataMatrix::new(1, d_bt.cols(), d_bt.row(i).to_vec())?;
                    nn::backward_into(net, &cache.caches[i], &row, &mut grad[off..off + net.len()])?;
                    off += net.len();
                }
            }
        }
        Ok(grad)
    }

    /// Branch matrix `B` (`m × N`).
    pub fn branch_matrix(&self, p_hat: &DataMatrix) -> Result<DataMatrix> {
        Ok(self.branch_forward(p_hat)?.0.transpose())
    }

    /// `Ã = T Bᵀ` (`n × m`).
    pub fn predict(&self, p_hat: &DataMatrix) -> Result<DataMatrix> {
        let (bt, _) = self.branch_forward(p_hat)?;
        self.trunk_values()?.matmul(&bt)
    }

    /// Per-mode gradients with respect to the branch parameters: row `i` is
    /// `scale · ∇‖bᵢ − targetᵢ‖²` where `targets` is `m × N`.
    pub fn per_mode_gradients(
        &self,
        p_hat: &DataMatrix,
        targets: &DataMatrix,
        scale: f64,
    ) -> Result<DataMatrix> {
        let n_modes = self.n_basis();
        let (bt, cache) = self.branch_forward(p_hat)?;
        if targets.shape() != (bt.cols(), n_modes) {
            return Err(Error::mismatch(
                "per_mode_gradients",
                format!("{}x{}", bt.cols(), n_modes),
                format!("{}x{}", targets.rows(), targets.cols()),
            ));
        }
        let m = bt.cols();
        let p = self.branch_param_count();
        let mut out = DataMatrix::zeros(n_modes, p);
        match &self.branch {
            Branch::Unstacked(net) => {
                let mut d = DataMatrix::zeros(n_modes, m);
                for i in 0..n_modes {
                    for j in 0..m {
                        d[(i, j)] = scale * 2.0 * (bt[(i, j)] - targets[(j, i)]);
                    }
                    nn::backward_into(net, &cache.caches[0], &d, out.row_mut(i))?;
                    d.row_mut(i).fill(0.0);
                }
            }
            Branch::Stacked(nets) => {
                let mut off = 0;
                for (i, net) in nets.iter().enumerate() {
                    let d = DataMatrix::from_fn(1, m, |_, j| {
                        scale * 2.0 * (bt[(i, j)] - targets[(j, i)])
                    });
                    let len = net.len();
                    nn::backward_into(net, &cache.caches[i], &d, &mut out.row_mut(i)[off..off + len])?;
                    off += len;
                }
            }
        }
        out.ensure_finite("per-mode gradient")?;
        Ok(out)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = ModelMeta {
            config: self.config.clone(),
            input_dim: self.input_dim,
            grid_len: self.grid_len(),
            param_count: self.param_count(),
            dataset_hash: self.dataset_hash.clone(),
        };
        let path = dir.join("model.json");
        std::fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;
        match &self.trunk {
            Trunk::Fixed(t) => t.write_csv(dir.join("trunk.csv"))?,
            Trunk::Learned { net, coords } => {
                net.save(dir, "trunk")?;
                coords.write_csv(dir.join("trunk_coords.csv"))?;
            }
        }
        match &self.branch {
            Branch::Unstacked(net) => net.save(dir, "branch")?,
            Branch::Stacked(nets) => {
                for (i, net) in nets.iter().enumerate() {
                    net.save(dir, &format!("branch_{i}"))?;
                }
            }
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("model.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: ModelMeta = serde_json::from_str(&text)?;
        let trunk = match meta.config.trunk {
            TrunkKind::Learned => Trunk::Learned {
                net: MlpParams::load(dir, "trunk")?,
                coords: DataMatrix::read_csv(dir.join("trunk_coords.csv"))?,
            },
            _ => Trunk::Fixed(DataMatrix::read_csv(dir.join("trunk.csv"))?),
        };
        let branch = match meta.config.branch {
            BranchKind::Unstacked => Branch::Unstacked(MlpParams::load(dir, "branch")?),
            BranchKind::Stacked => Branch::Stacked(
                (0..meta.config.n_basis)
                    .map(|i| MlpParams::load(dir, &format!("branch_{i}")))
                    .collect::<Result<_>>()?,
            ),
        };
        let model = Self {
            config: meta.config,
            input_dim: meta.input_dim,
            trunk,
            branch,
            dataset_hash: meta.dataset_hash,
        };
        if model.param_count() != meta.param_count || model.grid_len() != meta.grid_len {
            return Err(Error::Parse {
                path,
                message: "checkpoint files disagree with model.json".into(),
            });
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelMeta {
    config: ModelConfig,
    input_dim: usize,
    grid_len: usize,
    param_count: usize,
    dataset_hash: Option<String>,
}

/// SVD modes of the training data used by the modified DeepONet.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBasis {
    /// `Φ₁` (`n × N`).
    pub phi1: DataMatrix,
    pub sigma1: Vec<f64>,
    /// `V₁` (`m_tr × N`), the optimal training branch outputs.
    pub v1: DataMatrix,
    /// `W₁` (`m_te × N`), the optimal test branch outputs.
    pub w1: Option<DataMatrix>,
    pub near_degenerate: Vec<usize>,
}

impl ModeBasis {
    pub fn new(svd: &SvdFactors, n_basis: usize, a_test: Option<&DataMatrix>) -> Result<Self> {
        let split = linalg::truncate(svd, n_basis)?;
        let tol = svd.default_tolerance();
        let w1 = match a_test {
            Some(a) if a.cols() > 0 => Some(errdecomp::test_coefficients(
                &split.phi1,
                &split.sigma1,
                a,
                tol,
            )?),
            _ => None,
        };
        let near_degenerate = errdecomp::near_degenerate(&split.sigma1);
        Ok(Self {
            phi1: split.phi1,
            sigma1: split.sigma1,
            v1: split.v1,
            w1,
            near_degenerate,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.sigma1.len()
    }
}

/// Train and test matrices plus the SVD of the training data.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub p_train: DataMatrix,
    pub a_train: DataMatrix,
    pub p_test: Option<DataMatrix>,
    pub a_test: Option<DataMatrix>,
    pub svd: SvdFactors,
    /// Present when the set was prepared for a modified DeepONet.
    pub modes: Option<ModeBasis>,
    pub dataset_hash: Option<String>,
}

impl TrainingSet {
    pub fn new(
        p_train: DataMatrix,
        a_train: DataMatrix,
        test: Option<(DataMatrix, DataMatrix)>,
    ) -> Result<Self> {
        if p_train.cols() != a_train.cols() {
            return Err(Error::mismatch("training set", a_train.cols(), p_train.cols()));
        }
        if a_train.cols() == 0 {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        if let Some((p, a)) = &test {
            if p.cols() != a.cols() || a.rows() != a_train.rows() || p.rows() != p_train.rows() {
                return Err(Error::mismatch(
                    "test set",
                    format!("{}x_ / {}x_", p_train.rows(), a_train.rows()),
                    format!("{}x{} / {}x{}", p.rows(), p.cols(), a.rows(), a.cols()),
                ));
            }
        }
        let svd = linalg::svd(&a_train)?;
        let (p_test, a_test) = match test {
            Some((p, a)) => (Some(p), Some(a)),
            None => (None, None),
        };
        Ok(Self {
            p_train,
            a_train,
            p_test,
            a_test,
            svd,
            modes: None,
            dataset_hash: None,
        })
    }

    pub fn from_datasets(train: &Dataset, test: Option<&Dataset>) -> Result<Self> {
        let mut set = Self::new(
            train.p_hat.clone(),
            train.a.clone(),
            test.map(|t| (t.p_hat.clone(), t.a.clone())),
        )?;
        set.dataset_hash = Some(train.meta.hash.clone());
        Ok(set)
    }

    /// Prepares `Φ₁, Σ₁, V₁, W₁` for `n_basis` modes.
    pub fn with_modes(mut self, n_basis: usize) -> Result<Self> {
        self.modes = Some(ModeBasis::new(&self.svd, n_basis, self.a_test.as_ref())?);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a_train.rows()
    }

    pub fn m_train(&self) -> usize {
        self.a_train.cols()
    }

    pub fn m_test(&self) -> usize {
        self.a_test.as_ref().map_or(0, DataMatrix::cols)
    }

    pub fn grid_default(&self) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|j| j as f64 / n as f64).collect()
    }

    fn require_modes(&self) -> Result<&ModeBasis> {
        self.modes.as_ref().ok_or_else(|| {
            Error::InvalidArgument("modal objective needs a training set with modes".into())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// Mean squared error over all grid points and samples.
    Pointwise,
    /// `(1/(n m_tr)) Σ σᵢ^{2+2e} ‖bᵢ − vᵢ‖²`; `e = 0` is the branch error of
    /// the modified DeepONet.
    Modal { e: f64 },
}

impl DeepOnet {
    fn check_modal(&self, modes: &ModeBasis) -> Result<()> {
        if self.config.trunk != TrunkKind::SvdScaled {
            return Err(Error::InvalidArgument(
                "modal objective requires the SVD-scaled trunk".into(),
            ));
        }
        if modes.n_modes() != self.n_basis() {
            return Err(Error::mismatch("modal objective", self.n_basis(), modes.n_modes()));
        }
        Ok(())
    }

    /// Training objective and its gradient with respect to [`Self::params`].
    pub fn loss_and_gradient(&self, set: &TrainingSet, objective: Objective) -> Result<(f64, Vec<f64>)> {
        let n = set.n();
        let m = set.m_train();
        let c = 2.0 / (n as f64 * m as f64);
        let (bt, cache) = self.branch_forward(&set.p_train)?;
        match objective {
            Objective::Modal { e } => {
                let modes = set.require_modes()?;
                self.check_modal(modes)?;
                let weights = optim::mode_weights(&modes.sigma1, e);
                let mut d = DataMatrix::zeros(bt.rows(), m);
                let mut loss = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    let mut li = 0.0;
                    for j in 0..m {
                        let diff = bt[(i, j)] - modes.v1[(j, i)];
                        li += diff * diff;
                        d[(i, j)] = c * w * diff;
                    }
                    loss += w * li;
                }
                let grad = self.branch_backward(&cache, &d)?;
                Ok((loss / (n as f64 * m as f64), grad))
            }
            Objective::Pointwise => {
                let t = self.trunk_values()?;
                let r = t.matmul(&bt)?.sub(&set.a_train)?;
                let loss = r.frobenius_sq() / (n as f64 * m as f64);
                let d_bt = t.matmul_tn(&r)?.scaled(c);
                let mut grad = self.branch_backward(&cache, &d_bt)?;
                if let Trunk::Learned { net, coords } = &self.trunk {
                    let (_, tcache) = nn::forward(net, coords)?;
                    let d_trunk = bt.matmul_nt(&r)?.scaled(c);
                    grad.extend(nn::backward(net, &tcache, &d_trunk)?);
                }
                Ok((loss, grad))
            }
        }
    }

    /// Training objective without the gradient.
    pub fn train_loss(&self, set: &TrainingSet, objective: Objective) -> Result<f64> {
        let n = set.n() as f64;
        let m = set.m_train() as f64;
        match objective {
            Objective::Modal { e } => {
                let modes = set.require_modes()?;
                self.check_modal(modes)?;
                let b = self.branch_matrix(&set.p_train)?;
                let l = errdecomp::mode_losses_train(&b, &modes.v1)?;
                let w = optim::mode_weights(&modes.sigma1, e);
                Ok(w.iter().zip(&l).map(|(w, l)| w * l).sum::<f64>() / (n * m))
            }
            Objective::Pointwise => {
                Ok(self.predict(&set.p_train)?.sub(&set.a_train)?.frobenius_sq() / (n * m))
            }
        }
    }

    /// Objective evaluated on the test set (`None` without one). The modal
    /// form uses the `m_tr/m_te`-normalised test mode losses.
    pub fn test_loss(&self, set: &TrainingSet, objective: Objective) -> Result<Option<f64>> {
        let (Some(p), Some(a)) = (&set.p_test, &set.a_test) else {
            return Ok(None);
        };
        if a.cols() == 0 {
            return Ok(None);
        }
        let n = set.n() as f64;
        match objective {
            Objective::Modal { e } => {
                let modes = set.require_modes()?;
                self.check_modal(modes)?;
                let Some(w1) = &modes.w1 else { return Ok(None) };
                let b = self.branch_matrix(p)?;
                let (l, _) = errdecomp::mode_losses_test(&b, w1, set.m_train())?;
                let w = optim::mode_weights(&modes.sigma1, e);
                Ok(Some(
                    w.iter().zip(&l).map(|(w, l)| w * l).sum::<f64>() / (n * set.m_train() as f64),
                ))
            }
            Objective::Pointwise => Ok(Some(
                self.predict(p)?.sub(a)?.frobenius_sq() / (n * a.cols() as f64),
            )),
        }
    }

    /// Per-mode loss report of the current branch (modified model only).
    pub fn mode_report(&self, set: &TrainingSet) -> Result<ModeLossReport> {
        let modes = set.require_modes()?;
        self.check_modal(modes)?;
        let b = self.branch_matrix(&set.p_train)?;
        let test_b = match (&set.p_test, &modes.w1) {
            (Some(p), Some(_)) => Some(self.branch_matrix(p)?),
            _ => None,
        };
        let test = test_b.as_ref().zip(modes.w1.as_ref());
        errdecomp::mode_loss_report(&modes.sigma1, &modes.v1, &b, test, set.n())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub objective: Objective,
    /// Test loss is evaluated every `eval_every` epochs (and at the end).
    pub eval_every: usize,
    /// Per-mode losses are recorded every `mode_every` epochs; 0 disables.
    pub mode_every: usize,
}

impl TrainConfig {
    pub fn new(epochs: usize, optimizer: OptimizerConfig, objective: Objective) -> Self {
        Self {
            epochs,
            optimizer,
            objective,
            eval_every: 1,
            mode_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(with = "crate::serde_float")]
    pub train_loss: f64,
    #[serde(with = "crate::serde_float::option", default)]
    pub test_loss: Option<f64>,
    /// Effective learning rate of the update leaving this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub epoch: usize,
    pub l_train: Vec<f64>,
    pub l_test: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrainStatus {
    Completed,
    Diverged { epoch: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub mode_records: Vec<ModeRecord>,
    pub status: TrainStatus,
}

impl TrainHistory {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.train_loss)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,test_loss,lr\n");
        for r in &self.records {
            let test = r.test_loss.map(|x| format!("{x:e}")).unwrap_or_default();
            s.push_str(&format!("{},{:e},{},{:e}\n", r.epoch, r.train_loss, test, r.lr));
        }
        s
    }
}

/// State handed to a [`TrainObserver`] at each epoch, before the update.
pub struct EpochView<'a> {
    pub epoch: usize,
    pub model: &'a DeepOnet,
    pub set: &'a TrainingSet,
    pub train_loss: f64,
    pub gradient: &'a [f64],
    /// Learning rate of the upcoming update.
    pub lr: f64,
}

pub trait TrainObserver {
    fn observe(&mut self, view: &EpochView<'_>) -> Result<()>;
}

/// Full-batch training. Losses are recorded for epochs `0..=epochs`, where
/// epoch `t` is the state after `t` updates.
pub fn train(
    model: &mut DeepOnet,
    set: &TrainingSet,
    config: &TrainConfig,
    mut observer: Option<&mut dyn TrainObserver>,
) -> Result<TrainHistory> {
    let mut opt = Optimizer::new(config.optimizer, model.param_count())?;
    let lr_scale = match config.objective {
        Objective::Modal { e } => {
            let modes = set.require_modes()?;
            model.check_modal(modes)?;
            // Adam and AdaGrad normalise the step per parameter, so the σ₁
            // rescale would only change their effective rate; it is a GD fix.
            match config.optimizer.kind {
                OptimizerKind::Gd => optim::reweight_lr_scale(modes.sigma1[0], e),
                OptimizerKind::Adam | OptimizerKind::AdaGrad => 1.0,
            }
        }
        Objective::Pointwise => 1.0,
    };
    let eval_every = config.eval_every.max(1);
    let mut params = model.params();
    let mut history = TrainHistory {
        records: Vec::with_capacity(config.epochs + 1),
        mode_records: Vec::new(),
        status: TrainStatus::Completed,
    };
    for epoch in 0..=config.epochs {
        let (loss, grad) = model.loss_and_gradient(set, config.objective)?;
        let lr = opt.next_lr() * lr_scale;
        let diverged = !loss.is_finite()
            || loss > DIVERGENCE_LOSS
            || grad.iter().any(|g| !g.is_finite());
        let last = epoch == config.epochs || diverged;
        let test_loss = if epoch % eval_every == 0 || last {
            model.test_loss(set, config.objective)?
        } else {
            None
        };
        history.records.push(EpochRecord {
            epoch,
            train_loss: loss,
            test_loss,
            lr,
        });
        if diverged {
            history.status = TrainStatus::Diverged { epoch };
            break;
        }
        if set.modes.is_some()
            && model.config.trunk == TrunkKind::SvdScaled
            && ((config.mode_every > 0 && epoch % config.mode_every == 0) || last)
        {
            let r = model.mode_report(set)?;
            history.mode_records.push(ModeRecord {
                epoch,
                l_train: r.l_train(),
                l_test: r.modes.iter().map(|m| m.l_test).collect(),
            });
        }
        if let Some(obs) = observer.as_deref_mut() {
            obs.observe(&EpochView {
                epoch,
                model,
                set,
                train_loss: loss,
                gradient: &grad,
                lr,
            })?;
        }
        if last {
            break;
        }
        opt.step(&mut params, &grad, lr_scale)?;
        model.set_params(&params)?;
    }
    Ok(history)
}

/// Width of a single unstacked branch whose parameter count is closest to
/// `n_modes` stacked branch networks of width `w_stacked`; ties go to the
/// smaller width.
pub fn match_unstacked_width(w_stacked: usize, n_modes: usize, depth: usize, input_dim: usize) -> usize {
    let target = (n_modes * nn::param_count(input_dim, w_stacked, depth, 1)) as i128;
    let count = |w: usize| nn::param_count(input_dim, w, depth, n_modes) as i128;
    let mut best = 1;
    let mut best_gap = (count(1) - target).abs();
    let mut w = 1;
    loop {
        w += 1;
        let gap = (count(w) - target).abs();
        if gap < best_gap {
            best = w;
            best_gap = gap;
        }
        if count(w) > target {
            break;
        }
    }
    best
}

//! Update-based coupling between mode losses of the modified DeepONet.
//!
//! A gradient step of size `α` on the total loss changes it, to first
//! order, by `Σᵢⱼ Sᵢⱼ` with
//! `Sᵢⱼ = −α/(n² m²) σᵢ² σⱼ² ⟨∇Lᵢ(eval), ∇Lⱼ(train)⟩`. The diagonal `d`
//! collects each mode's own contribution and the off-diagonal sum `Ω` the
//! interaction between modes; `γ = Ω/(d+Ω)` is the relative coupling.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::deeponet::{DeepOnet, EpochView, Objective, TrainObserver, TrainingSet};
use crate::error::{Error, Result};
use crate::linalg::DataMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Test,
}

/// Row `i` is `∇_θ Lᵢ` on the chosen split: `‖bᵢ − vᵢ‖²` for training data,
/// `(m_tr/m_te)‖b_{i,te} − wᵢ‖²` for test data.
pub fn per_mode_gradients(model: &DeepOnet, set: &TrainingSet, role: Role) -> Result<DataMatrix> {
    let modes = set.modes.as_ref().ok_or_else(|| {
        Error::InvalidArgument("per-mode gradients need a training set with modes".into())
    })?;
    if modes.n_modes() != model.n_basis() {
        return Err(Error::mismatch("per_mode_gradients", model.n_basis(), modes.n_modes()));
    }
    match role {
        Role::Train => model.per_mode_gradients(&set.p_train, &modes.v1, 1.0),
        Role::Test => {
            let (Some(p), Some(w1)) = (&set.p_test, &modes.w1) else {
                return Err(Error::InvalidArgument(
                    "test-role gradients need a test set".into(),
                ));
            };
            let scale = set.m_train() as f64 / w1.rows() as f64;
            model.per_mode_gradients(p, w1, scale)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub s: DataMatrix,
    pub d: f64,
    pub omega: f64,
    /// `Ω/(d+Ω)`; `None` when `d + Ω = 0`.
    pub gamma: Option<f64>,
    pub alpha: f64,
}

impl CouplingReport {
    /// First-order prediction of the loss change, `Σᵢⱼ Sᵢⱼ = d + Ω`.
    pub fn taylor_pred(&self) -> f64 {
        self.d + self.omega
    }
}

pub fn coupling_matrix(
    grads_eval: &DataMatrix,
    grads_train: &DataMatrix,
    sigmas: &[f64],
    alpha: f64,
    n: usize,
    m_train: usize,
) -> Result<CouplingReport> {
    let k = sigmas.len();
    if grads_eval.rows() != k || grads_train.rows() != k {
        return Err(Error::mismatch(
            "coupling_matrix",
            k,
            format!("{} and {}", grads_eval.rows(), grads_train.rows()),
        ));
    }
    if grads_eval.cols() != grads_train.cols() {
        return Err(Error::mismatch("coupling_matrix", grads_train.cols(), grads_eval.cols()));
    }
    let gram = grads_eval.matmul_nt(grads_train)?;
    let nm = n as f64 * m_train as f64;
    let c = -alpha / (nm * nm);
    let s = DataMatrix::from_fn(k, k, |i, j| {
        c * sigmas[i] * sigmas[i] * sigmas[j] * sigmas[j] * gram[(i, j)]
    });
    let total: f64 = s.values().iter().sum();
    let d: f64 = (0..k).map(|i| s[(i, i)]).sum();
    let omega = total - d;
    let gamma = if d + omega == 0.0 {
        None
    } else {
        Some(omega / (d + omega))
    };
    Ok(CouplingReport {
        s,
        d,
        omega,
        gamma,
        alpha,
    })
}

/// Coupling report of `model` at its current parameters with learning rate
/// `alpha`.
pub fn coupling_at(model: &DeepOnet, set: &TrainingSet, alpha: f64, eval: Role) -> Result<CouplingReport> {
    let modes = set.modes.as_ref().ok_or_else(|| {
        Error::InvalidArgument("coupling needs a training set with modes".into())
    })?;
    let train = per_mode_gradients(model, set, Role::Train)?;
    let eval_grads = match eval {
        Role::Train => train.clone(),
        Role::Test => per_mode_gradients(model, set, Role::Test)?,
    };
    coupling_matrix(&eval_grads, &train, &modes.sigma1, alpha, set.n(), set.m_train())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorCheck {
    pub predicted: f64,
    pub measured: f64,
}

impl TaylorCheck {
    /// `|predicted − measured| / |measured|`, zero when both vanish.
    pub fn relative_gap(&self) -> f64 {
        let diff = (self.predicted - self.measured).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.measured.abs()
        }
    }
}

/// Takes `steps` plain gradient steps of size `alpha` on a copy of `model`
/// and compares each measured loss change with `Σ S` before the step.
pub fn taylor_sequence(model: &DeepOnet, set: &TrainingSet, alpha: f64, steps: usize) -> Result<Vec<TaylorCheck>> {
    let objective = Objective::Modal { e: 0.0 };
    let mut m = model.clone();
    let mut params = m.params();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let report = coupling_at(&m, set, alpha, Role::Train)?;
        let (before, grad) = m.loss_and_gradient(set, objective)?;
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= alpha * g;
        }
        m.set_params(&params)?;
        let after = m.train_loss(set, objective)?;
        if !after.is_finite() {
            return Err(Error::NonFinite {
                what: "loss after Taylor step",
                index: out.len(),
            });
        }
        out.push(TaylorCheck {
            predicted: report.taylor_pred(),
            measured: after - before,
        });
    }
    Ok(out)
}

/// Single-step version of [`taylor_sequence`].
pub fn taylor_check(model: &DeepOnet, set: &TrainingSet, alpha: f64) -> Result<TaylorCheck> {
    Ok(taylor_sequence(model, set, alpha, 1)?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRow {
    pub epoch: usize,
    pub d: f64,
    pub omega: f64,
    pub gamma: Option<f64>,
    pub taylor_pred: f64,
    /// Loss change actually observed over the following update.
    pub measured_dl: Option<f64>,
}

/// Training observer that samples the coupling terms every `every` epochs.
#[derive(Debug, Clone)]
pub struct CouplingTracker {
    pub every: usize,
    pub eval: Role,
    pub keep_matrices: bool,
    pub rows: Vec<CouplingRow>,
    pub matrices: Vec<(usize, DataMatrix)>,
    pending: Option<(usize, f64)>,
}

impl CouplingTracker {
    pub fn new(every: usize) -> Self {
        Self {
            every: every.max(1),
            eval: Role::Train,
            keep_matrices: false,
            rows: Vec::new(),
            matrices: Vec::new(),
            pending: None,
        }
    }

    /// Mean of `−γ` over the sampled epochs with a defined `γ`.
    pub fn mean_neg_gamma(&self) -> Option<f64> {
        let vals: Vec<f64> = self.rows.iter().filter_map(|r| r.gamma).map(|g| -g).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut s = String::from("epoch,d,omega,gamma,taylor_pred,measured_dl\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:e},{:e},{},{:e},{}\n",
                r.epoch,
                r.d,
                r.omega,
                opt(r.gamma),
                r.taylor_pred,
                opt(r.measured_dl)
            ));
        }
        s
    }

    /// Writes `S_epoch<k>.csv` for every kept matrix.
    pub fn write_matrices(&self, dir: impl AsRef<Path>) -> Result<()> {
        for (epoch, s) in &self.matrices {
            s.write_csv(dir.as_ref().join(format!("S_epoch{epoch}.csv")))?;
        }
        Ok(())
    }
}

impl TrainObserver for CouplingTracker {
    fn observe(&mut self, view: &EpochView<'_>) -> Result<()> {
        if let Some((row, loss)) = self.pending.take() {
            if self.rows[row].epoch + 1 == view.epoch {
                self.rows[row].measured_dl = Some(view.train_loss - loss);
            }
        }
        if !view.epoch.is_multiple_of(self.every) {
            return Ok(());
        }
        let report = coupling_at(view.model, view.set, view.lr, self.eval)?;
        self.rows.push(CouplingRow {
            epoch: view.epoch,
            d: report.d,
            omega: report.omega,
            gamma: report.gamma,
            taylor_pred: report.taylor_pred(),
            measured_dl: None,
        });
        self.pending = Some((self.rows.len() - 1, view.train_loss));
        if self.keep_matrices {
            self.matrices.push((view.epoch, report.s));
        }
        Ok(())
    }
}

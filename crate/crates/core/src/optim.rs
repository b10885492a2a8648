//! First-order optimizers with the step-decay learning-rate schedule, plus
//! the singular-value re-weighting of the modal loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Gd,
    Adam,
    #[serde(rename = "adagrad")]
    AdaGrad,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "gd" | "sgd" => Ok(Self::Gd),
            "adam" => Ok(Self::Adam),
            "adagrad" => Ok(Self::AdaGrad),
            other => Err(format!("unknown optimizer `{other}` (expected gd, adam or adagrad)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    /// Initial learning rate `α₁`.
    pub alpha1: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Added to `v̂` inside the square root.
    pub epsilon_bar: f64,
    /// Multiplicative learning-rate decay applied every `decay_every` steps.
    pub decay_rate: f64,
    pub decay_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            alpha1: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epsilon_bar: 0.0,
            decay_rate: 0.95,
            decay_every: 500,
        }
    }
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, alpha1: f64) -> Self {
        Self {
            kind,
            alpha1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Error::Config {
            field: format!("optimizer.{field}"),
            message,
        };
        if !(self.alpha1 > 0.0 && self.alpha1.is_finite()) {
            return Err(bad("alpha1", format!("must be positive, got {}", self.alpha1)));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(bad("beta1", format!("must lie in [0, 1), got {}", self.beta1)));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(bad("beta2", format!("must lie in [0, 1), got {}", self.beta2)));
        }
        if !(self.epsilon >= 0.0) || !(self.epsilon_bar >= 0.0) {
            return Err(bad("epsilon", "must be non-negative".into()));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(bad("decay_rate", format!("must lie in (0, 1], got {}", self.decay_rate)));
        }
        if self.decay_every == 0 {
            return Err(bad("decay_every", "must be positive".into()));
        }
        Ok(())
    }

    /// `α_t = decay_rate^⌊t/decay_every⌋ · α₁` for step `t ≥ 1`.
    pub fn lr_at(&self, t: usize) -> f64 {
        self.decay_rate.powi((t / self.decay_every) as i32) * self.alpha1
    }
}

/// Optimizer state for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    t: usize,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, n_params: usize) -> Result<Self> {
        config.validate()?;
        let moments = match config.kind {
            OptimizerKind::Gd => 0,
            _ => n_params,
        };
        Ok(Self {
            config,
            t: 0,
            m: vec![0.0; if config.kind == OptimizerKind::Adam { moments } else { 0 }],
            v: vec![0.0; moments],
        })
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> usize {
        self.t
    }

    /// Learning rate the next step will use, before `lr_scale`.
    pub fn next_lr(&self) -> f64 {
        self.config.lr_at(self.t + 1)
    }

    /// Applies one update in place and returns the effective learning rate
    /// `lr_at(t) · lr_scale`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr_scale: f64) -> Result<f64> {
        if params.len() != grads.len() {
            return Err(Error::mismatch("optimizer step", params.len(), grads.len()));
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient",
                index,
            });
        }
        if !(lr_scale > 0.0 && lr_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning-rate scale must be positive, got {lr_scale}"
            )));
        }
        self.t += 1;
        let lr = self.config.lr_at(self.t) * lr_scale;
        let c = &self.config;
        match c.kind {
            OptimizerKind::Gd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != params.len() {
                    return Err(Error::mismatch("adam state", self.m.len(), params.len()));
                }
                let bc1 = 1.0 - c.beta1.powi(self.t as i32);
                let bc2 = 1.0 - c.beta2.powi(self.t as i32);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
                    self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= lr * m_hat / ((v_hat + c.epsilon_bar).sqrt() + c.epsilon);
                }
            }
            OptimizerKind::AdaGrad => {
                if self.v.len() != params.len() {
                    return Err(Error::mismatch("adagrad state", self.v.len(), params.len()));
                }
                for i in 0..params.len() {
                    let g = grads[i];
                    self.v[i] += g * g;
                    params[i] -= lr * g / (self.v[i].sqrt() + c.epsilon);
                }
            }
        }
        Ok(lr)
    }
}

/// Per-mode weights `σᵢ² · σᵢ^{2e}` of the re-weighted modal loss. For
/// `e = 0` these are bitwise `σᵢ²`.
pub fn mode_weights(sigmas: &[f64], e: f64) -> Vec<f64> {
    sigmas.iter().map(|&s| s * s * s.powf(2.0 * e)).collect()
}

/// Learning-rate factor `σ₁^{-2e}` that keeps the leading mode's effective
/// step unchanged under re-weighting.
pub fn reweight_lr_scale(sigma1: f64, e: f64) -> f64 {
    sigma1.powf(-2.0 * e)
}

/// Combines per-mode gradients `∇L_i` (one row each) into the gradient of
/// `(1/(n m)) Σ σᵢ^{2+2e} L_i` and returns it with the matching
/// learning-rate factor.
pub fn reweight_gradient(
    mode_grads: &crate::linalg::DataMatrix,
    sigmas: &[f64],
    e: f64,
    n: usize,
    m_train: usize,
) -> Result<(Vec<f64>, f64)> {
    if mode_grads.rows() != sigmas.len() {
        return Err(Error::mismatch("reweight_gradient", sigmas.len(), mode_grads.rows()));
    }
    if sigmas.is_empty() {
        return Err(Error::InvalidArgument("no modes to re-weight".into()));
    }
    let scale = 1.0 / (n as f64 * m_train as f64);
    let weights = mode_weights(sigmas, e);
    let mut out = vec![0.0; mode_grads.cols()];
    for (i, w) in weights.iter().enumerate() {
        for (o, g) in out.iter_mut().zip(mode_grads.row(i)) {
            *o += scale * w * g;
        }
    }
    Ok((out, reweight_lr_scale(sigmas[0], e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DataMatrix;

    #[test]
    fn schedule() {
        let c = OptimizerConfig::new(OptimizerKind::Gd, 1.0);
        assert_eq!(c.lr_at(1), 1.0);
        assert_eq!(c.lr_at(499), 1.0);
        assert_eq!(c.lr_at(500), 0.95);
        assert!((c.lr_at(1000) - 0.9025).abs() < 1e-15);
    }

    #[test]
    fn gd_step_on_quadratic() {
        let c = OptimizerConfig::new(OptimizerKind::Gd, 0.1);
        let mut opt = Optimizer::new(c, 1).unwrap();
        let mut x = [1.0];
        let g = [2.0 * x[0]];
        opt.step(&mut x, &g, 1.0).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15);
        let mut y = [1.0];
        opt.step(&mut y, &[0.0], 1.0).unwrap();
        assert_eq!(y[0], 1.0);
    }

    #[test]
    fn adam_first_step_is_sign_times_lr() {
        let c = OptimizerConfig::new(OptimizerKind::Adam, 1e-3);
        let mut opt = Optimizer::new(c, 2).unwrap();
        let mut x = [0.0, 0.0];
        opt.step(&mut x, &[5.0, -0.01], 1.0).unwrap();
        assert!((x[0] + 1e-3).abs() < 1e-10);
        assert!((x[1] - 1e-3).abs() < 1e-8);
    }

    #[test]
    fn adagrad_accumulates() {
        let c = OptimizerConfig {
            epsilon: 0.0,
            ..OptimizerConfig::new(OptimizerKind::AdaGrad, 1.0)
        };
        let mut opt = Optimizer::new(c, 1).unwrap();
        let mut x = [0.0];
        opt.step(&mut x, &[3.0], 1.0).unwrap();
        assert!((x[0] + 1.0).abs() < 1e-15);
        opt.step(&mut x, &[4.0], 1.0).unwrap();
        assert!((x[0] + 1.8).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut opt = Optimizer::new(OptimizerConfig::default(), 2).unwrap();
        let mut x = [0.0, 0.0];
        let err = opt.step(&mut x, &[0.0, f64::NAN], 1.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn invalid_configs() {
        let c = OptimizerConfig { alpha1: 0.0, ..OptimizerConfig::default() };
        assert!(c.validate().is_err());
        let c = OptimizerConfig { beta2: 1.0, ..OptimizerConfig::default() };
        assert!(matches!(c.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn reweighting_identities() {
        let s = [2.0, 0.5, 0.1];
        assert_eq!(mode_weights(&s, 0.0), vec![4.0, 0.25, 0.1 * 0.1]);
        assert!(mode_weights(&s, -1.0).iter().all(|&w| (w - 1.0).abs() < 1e-15));
        // Leading mode: lr_scale · σ₁^{2+2e} = σ₁².
        for e in [-1.0, -0.5, 0.0, 0.5] {
            let w = mode_weights(&s, e)[0] * reweight_lr_scale(s[0], e);
            assert!((w - 4.0).abs() < 1e-12);
        }
        let g = DataMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let (grad, scale) = reweight_gradient(&g, &s, 0.0, 1, 1).unwrap();
        assert_eq!(scale, 1.0);
        assert!((grad[0] - 4.01).abs() < 1e-15 && (grad[1] - 0.26).abs() < 1e-15);
    }
}

//! Trunk/branch error decomposition and per-mode losses.
//!
//! For `Ã = T Bᵀ` approximating `A`, the squared Frobenius error splits
//! orthogonally into the part of `A` outside the trunk's column space
//! (`ε_T`) and the branch's deviation from the optimal coefficients inside
//! it (`ε_B`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DataMatrix};

/// Relative gap `(σᵢ − σᵢ₊₁)/σ₁` below which two modes are reported as
/// near-degenerate.
pub const SIGMA_GAP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub eps_total: f64,
    pub eps_trunk: f64,
    pub eps_branch: f64,
    pub eps_c: f64,
    pub eps_d: f64,
    /// Spectral norm of the trunk matrix.
    pub t_norm: f64,
    pub a_norm_sq: f64,
    pub delta_total: f64,
    pub delta_trunk: f64,
    pub delta_branch: f64,
}

fn relative(eps: f64, a_norm_sq: f64) -> f64 {
    if a_norm_sq == 0.0 {
        if eps == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (eps.max(0.0) / a_norm_sq).sqrt()
    }
}

/// Decomposes `‖T Bᵀ − A‖²` with `T: n×N`, `B: m×N`, `A: n×m`.
pub fn decompose(t: &DataMatrix, b: &DataMatrix, a: &DataMatrix) -> Result<ErrorReport> {
    decompose_with_tol(t, b, a, None)
}

pub fn decompose_with_tol(
    t: &DataMatrix,
    b: &DataMatrix,
    a: &DataMatrix,
    tol: Option<f64>,
) -> Result<ErrorReport> {
    if t.rows() != a.rows() || b.rows() != a.cols() || t.cols() != b.cols() {
        return Err(Error::mismatch(
            "decompose",
            format!("T n×N, B m×N, A n×m with A {}x{}", a.rows(), a.cols()),
            format!(
                "T {}x{}, B {}x{}",
                t.rows(),
                t.cols(),
                b.rows(),
                b.cols()
            ),
        ));
    }
    t.ensure_finite("trunk matrix")?;
    b.ensure_finite("branch matrix")?;
    a.ensure_finite("data matrix")?;
    let f = linalg::svd(t)?;
    let t_pinv = linalg::pinv_from_svd(&f, tol);
    let coeffs = t_pinv.matmul(a)?; // T⁺A, N×m
    let projected = t.matmul(&coeffs)?;
    let eps_trunk = a.sub(&projected)?.frobenius_sq();
    let c_resid = b.transpose().sub(&coeffs)?;
    let eps_c = c_resid.frobenius_sq();
    let eps_branch = t.matmul(&c_resid)?.frobenius_sq();
    let eps_total = t.matmul_nt(b)?.sub(a)?.frobenius_sq();
    let t_norm = f.s.first().copied().unwrap_or(0.0);
    let a_norm_sq = a.frobenius_sq();
    Ok(ErrorReport {
        eps_total,
        eps_trunk,
        eps_branch,
        eps_c,
        eps_d: t_norm * t_norm * eps_c,
        t_norm,
        a_norm_sq,
        delta_total: relative(eps_total, a_norm_sq),
        delta_trunk: relative(eps_trunk, a_norm_sq),
        delta_branch: relative(eps_branch, a_norm_sq),
    })
}

/// `B* = (T⁺A)ᵀ`, the branch matrix minimising `‖A − T Bᵀ‖_F`.
pub fn optimal_branch(t: &DataMatrix, a: &DataMatrix) -> Result<DataMatrix> {
    if t.rows() != a.rows() {
        return Err(Error::mismatch("optimal_branch", t.rows(), a.rows()));
    }
    Ok(linalg::pseudoinverse(t, None)?.matmul(a)?.transpose())
}

fn column_sq_dist(b: &DataMatrix, target: &DataMatrix, i: usize) -> f64 {
    (0..b.rows())
        .map(|r| {
            let d = b[(r, i)] - target[(r, i)];
            d * d
        })
        .sum()
}

/// `L_{i,tr} = ‖bᵢ − vᵢ‖²` for every mode (columns of `b_train` and `v1`).
pub fn mode_losses_train(b_train: &DataMatrix, v1: &DataMatrix) -> Result<Vec<f64>> {
    if b_train.shape() != v1.shape() {
        return Err(Error::mismatch(
            "mode_losses_train",
            format!("{}x{}", v1.rows(), v1.cols()),
            format!("{}x{}", b_train.rows(), b_train.cols()),
        ));
    }
    Ok((0..v1.cols()).map(|i| column_sq_dist(b_train, v1, i)).collect())
}

/// `W₁ = (Σ₁⁻¹ Φ₁ᵀ A_te)ᵀ`, the optimal test coefficients (`m_te × N`).
/// Singular values at or below `tol` (default: the SVD rank tolerance of a
/// matrix with the given extent) are rejected.
pub fn test_coefficients(
    phi1: &DataMatrix,
    sigma1: &[f64],
    a_test: &DataMatrix,
    tol: f64,
) -> Result<DataMatrix> {
    if phi1.cols() != sigma1.len() {
        return Err(Error::mismatch("test_coefficients", phi1.cols(), sigma1.len()));
    }
    if phi1.rows() != a_test.rows() {
        return Err(Error::mismatch("test_coefficients", phi1.rows(), a_test.rows()));
    }
    if let Some((index, &value)) = sigma1.iter().enumerate().find(|(_, &s)| !(s > tol)) {
        return Err(Error::SmallSingularValue { index, value, tol });
    }
    let inv: Vec<f64> = sigma1.iter().map(|s| 1.0 / s).collect();
    // (Φ₁ᵀA_te)ᵀ = A_teᵀΦ₁, then scale column i by 1/σᵢ.
    a_test.matmul_tn(phi1)?.scale_columns(&inv)
}

/// Test mode losses `(m_tr/m_te)‖b_{i,te} − wᵢ‖²` and base losses
/// `(m_tr/m_te)‖wᵢ‖²`.
pub fn mode_losses_test(
    b_test: &DataMatrix,
    w1: &DataMatrix,
    m_train: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if b_test.shape() != w1.shape() {
        return Err(Error::mismatch(
            "mode_losses_test",
            format!("{}x{}", w1.rows(), w1.cols()),
            format!("{}x{}", b_test.rows(), b_test.cols()),
        ));
    }
    let m_test = w1.rows();
    if m_test == 0 {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    let scale = m_train as f64 / m_test as f64;
    let zero = DataMatrix::zeros(w1.rows(), w1.cols());
    let losses = (0..w1.cols())
        .map(|i| scale * column_sq_dist(b_test, w1, i))
        .collect();
    let base = (0..w1.cols())
        .map(|i| scale * column_sq_dist(&zero, w1, i))
        .collect();
    Ok((losses, base))
}

/// `‖A_te − Φ₁Σ₁W₁ᵀ‖²`, the trunk error on the test set.
pub fn test_trunk_error(
    phi1: &DataMatrix,
    sigma1: &[f64],
    w1: &DataMatrix,
    a_test: &DataMatrix,
) -> Result<f64> {
    let t = phi1.scale_columns(sigma1)?;
    Ok(a_test.sub(&t.matmul_nt(w1)?)?.frobenius_sq())
}

/// Indices `i` (zero-based) with `σᵢ − σᵢ₊₁ < SIGMA_GAP_TOL · σ₁`.
pub fn near_degenerate(sigmas: &[f64]) -> Vec<usize> {
    let Some(&s1) = sigmas.first() else {
        return Vec::new();
    };
    sigmas
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] - w[1] < SIGMA_GAP_TOL * s1)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeLoss {
    /// One-based mode index.
    pub i: usize,
    pub sigma: f64,
    pub l_train: f64,
    pub l_test: Option<f64>,
    /// `σᵢ² L_{i,tr}`.
    pub weighted_train: f64,
    pub weighted_test: Option<f64>,
    pub base_train: f64,
    pub base_test: Option<f64>,
    pub improved_train: bool,
    pub improved_test: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeLossReport {
    pub n: usize,
    pub m_train: usize,
    pub m_test: usize,
    pub modes: Vec<ModeLoss>,
    /// `(1/(n m_tr)) Σ σᵢ² L_{i,tr}`.
    pub total_train: f64,
    pub total_test: Option<f64>,
    /// Zero-based indices of modes whose gap to the next is below
    /// [`SIGMA_GAP_TOL`].
    pub near_degenerate: Vec<usize>,
}

impl ModeLossReport {
    pub fn l_train(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.l_train).collect()
    }

    pub fn improved_train_count(&self) -> usize {
        self.modes.iter().filter(|m| m.improved_train).count()
    }

    /// Writes `modes.csv`; test columns are empty when no test set was used.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut s =
            String::from("i,sigma,L_train,L_test,weighted_train,weighted_test,base_train,base_test\n");
        for m in &self.modes {
            s.push_str(&format!(
                "{},{:e},{:e},{},{:e},{},{:e},{}\n",
                m.i,
                m.sigma,
                m.l_train,
                opt(m.l_test),
                m.weighted_train,
                opt(m.weighted_test),
                m.base_train,
                opt(m.base_test)
            ));
        }
        s
    }
}

/// Per-mode loss report for branch outputs on the training set (and
/// optionally the test set).
pub fn mode_loss_report(
    sigma1: &[f64],
    v1: &DataMatrix,
    b_train: &DataMatrix,
    test: Option<(&DataMatrix, &DataMatrix)>,
    n: usize,
) -> Result<ModeLossReport> {
    if sigma1.len() != v1.cols() {
        return Err(Error::mismatch("mode_loss_report", v1.cols(), sigma1.len()));
    }
    let m_train = v1.rows();
    let l_train = mode_losses_train(b_train, v1)?;
    let zero = DataMatrix::zeros(v1.rows(), v1.cols());
    let base_train = mode_losses_train(&zero, v1)?;
    let (l_test, base_test, m_test) = match test {
        Some((b_test, w1)) => {
            let (l, b) = mode_losses_test(b_test, w1, m_train)?;
            (Some(l), Some(b), w1.rows())
        }
        None => (None, None, 0),
    };
    let norm = 1.0 / (n as f64 * m_train as f64);
    let mut modes = Vec::with_capacity(sigma1.len());
    let mut total_train = 0.0;
    let mut total_test = 0.0;
    for (k, &s) in sigma1.iter().enumerate() {
        let s2 = s * s;
        let lt = l_test.as_ref().map(|l| l[k]);
        let bt = base_test.as_ref().map(|b| b[k]);
        total_train += s2 * l_train[k];
        if let Some(l) = lt {
            total_test += s2 * l;
        }
        modes.push(ModeLoss {
            i: k + 1,
            sigma: s,
            l_train: l_train[k],
            l_test: lt,
            weighted_train: s2 * l_train[k],
            weighted_test: lt.map(|l| s2 * l),
            base_train: base_train[k],
            base_test: bt,
            improved_train: l_train[k] < base_train[k],
            improved_test: lt.zip(bt).map(|(l, b)| l < b),
        });
    }
    Ok(ModeLossReport {
        n,
        m_train,
        m_test,
        modes,
        total_train: norm * total_train,
        total_test: l_test.map(|_| norm * total_test),
        near_degenerate: near_degenerate(sigma1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DataMatrix {
        DataMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn optimal_branch_has_zero_branch_error() {
        let t = m(&[&[1.0, 0.0], &[0.0, 2.0], &[1.0, 1.0]]);
        let a = m(&[&[1.0, 2.0, 0.0], &[0.0, 1.0, 1.0], &[3.0, 0.0, 1.0]]);
        let b = optimal_branch(&t, &a).unwrap();
        let r = decompose(&t, &b, &a).unwrap();
        assert!(r.eps_branch < 1e-20);
        assert!((r.eps_total - r.eps_trunk).abs() < 1e-12);
    }

    #[test]
    fn orthonormal_trunk_bound_is_tight() {
        let t = m(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        let b = m(&[&[0.5, 0.1], &[0.2, -0.3]]);
        let a = m(&[&[1.0, 0.0], &[0.0, 1.0], &[2.0, 2.0]]);
        let r = decompose(&t, &b, &a).unwrap();
        assert!((r.eps_branch - r.eps_c).abs() < 1e-14);
        assert!((r.eps_d - r.eps_c).abs() < 1e-12);
        assert!((r.eps_trunk - 8.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let t = DataMatrix::zeros(3, 2);
        assert!(decompose(&t, &DataMatrix::zeros(4, 3), &DataMatrix::zeros(3, 4)).is_err());
    }

    #[test]
    fn base_losses() {
        let v1 = m(&[&[0.6, 0.0], &[0.8, 1.0]]);
        let zero = DataMatrix::zeros(2, 2);
        assert_eq!(mode_losses_train(&zero, &v1).unwrap(), vec![1.0, 1.0]);
        assert_eq!(mode_losses_train(&v1, &v1).unwrap(), vec![0.0, 0.0]);
        let w1 = m(&[&[1.0, 2.0]]);
        let (l, b) = mode_losses_test(&DataMatrix::zeros(1, 2), &w1, 9).unwrap();
        assert_eq!(l, b);
        assert_eq!(b, vec![9.0, 36.0]);
        assert!(mode_losses_test(&DataMatrix::zeros(0, 2), &DataMatrix::zeros(0, 2), 9).is_err());
    }

    #[test]
    fn test_coefficients_recover_chosen_c() {
        let phi = m(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        let sigma = [3.0, 2.0];
        let c = m(&[&[0.5, -1.0], &[2.0, 0.25]]);
        let a_test = phi.scale_columns(&sigma).unwrap().matmul_nt(&c).unwrap();
        let w = test_coefficients(&phi, &sigma, &a_test, 1e-12).unwrap();
        assert!(w.max_abs_diff(&c) < 1e-15);
        let err = test_coefficients(&phi, &[3.0, 0.0], &a_test, 1e-12).unwrap_err();
        assert!(matches!(err, Error::SmallSingularValue { index: 1, .. }));
    }

    #[test]
    fn degenerate_gaps_are_flagged() {
        assert_eq!(near_degenerate(&[2.0, 1.0, 1.0, 0.5]), vec![1]);
        assert!(near_degenerate(&[]).is_empty());
    }

    #[test]
    fn report_csv_has_one_row_per_mode() {
        let v1 = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = mode_loss_report(&[2.0, 1.0], &v1, &DataMatrix::zeros(2, 2), None, 4).unwrap();
        assert_eq!(r.to_csv().lines().count(), 3);
        assert!((r.total_train - (4.0 + 1.0) / 8.0).abs() < 1e-15);
        assert_eq!(r.improved_train_count(), 0);
    }
}

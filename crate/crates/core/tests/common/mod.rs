//! Reference implementations that share no code with the library: plain
//! triple loops, a two-sided Jacobi eigensolver, Gaussian elimination.

#![allow(dead_code)]

use deeponet_core::linalg::DataMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DataMatrix {
    DataMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn naive_matmul(a: &DataMatrix, b: &DataMatrix) -> DataMatrix {
    assert_eq!(a.cols(), b.rows());
    DataMatrix::from_fn(a.rows(), b.cols(), |i, j| {
        let mut s = 0.0;
        for k in 0..a.cols() {
            s += a[(i, k)] * b[(k, j)];
        }
        s
    })
}

pub fn naive_transpose(a: &DataMatrix) -> DataMatrix {
    DataMatrix::from_fn(a.cols(), a.rows(), |i, j| a[(j, i)])
}

pub fn frob_sq(a: &DataMatrix) -> f64 {
    let mut s = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s
}

pub fn diff(a: &DataMatrix, b: &DataMatrix) -> DataMatrix {
    DataMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] - b[(i, j)])
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations,
/// sorted descending.
pub fn symmetric_eigenvalues(s: &DataMatrix) -> Vec<f64> {
    let n = s.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| s[(i, j)]).collect()).collect();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[i][j] * a[i][j];
                }
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - sn * akq;
                    a[k][q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - sn * aqk;
                    a[q][k] = sn * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Singular values via the eigenvalues of `AᵀA` (or `AAᵀ`, whichever is
/// smaller), clamped at zero.
pub fn singular_values_oracle(a: &DataMatrix) -> Vec<f64> {
    let g = if a.cols() <= a.rows() {
        naive_matmul(&naive_transpose(a), a)
    } else {
        naive_matmul(a, &naive_transpose(a))
    };
    symmetric_eigenvalues(&g).into_iter().map(|l| l.max(0.0).sqrt()).collect()
}

/// Solves `M X = B` by Gaussian elimination with partial pivoting.
pub fn solve(m: &DataMatrix, b: &DataMatrix) -> DataMatrix {
    let n = m.rows();
    let k = b.cols();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)]).chain((0..k).map(|j| b[(i, j)])).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n + k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    DataMatrix::from_fn(n, k, |i, j| a[i][n + j] / a[i][i])
}

/// `T⁺ = (TᵀT)⁻¹Tᵀ` for full column rank `T`.
pub fn pinv_normal_equations(t: &DataMatrix) -> DataMatrix {
    let tt = naive_transpose(t);
    solve(&naive_matmul(&tt, t), &tt)
}

/// Random `n × k` matrix with orthonormal columns (classical Gram-Schmidt,
/// applied twice).
pub fn random_orthonormal(n: usize, k: usize, rng: &mut impl Rng) -> DataMatrix {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for q in &cols {
                let d: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= d * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    DataMatrix::from_fn(n, k, |i, j| cols[j][i])
}

/// Spearman rank correlation for distinct values via `1 − 6Σd²/(n(n²−1))`.
pub fn spearman_distinct(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

pub fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

use deeponet_core::deeponet::{DeepOnet, Objective, TrainingSet};

/// Largest per-parameter relative gap between the analytic gradient and
/// the fourth-order central difference
/// `(8(L(θ+h)−L(θ−h)) − (L(θ+2h)−L(θ−2h)))/(12h)`, with the number of
/// parameters checked. Parameters whose gradient and quotient are both below
/// `floor` are skipped.
pub fn fd_gradient_gap(model: &DeepOnet, set: &TrainingSet, objective: Objective, h: f64, floor: f64) -> (f64, usize) {
    let (_, grad) = model.loss_and_gradient(set, objective).unwrap();
    let base = model.params();
    let mut probe = model.clone();
    let mut eval = |k: usize, d: f64| {
        let mut p = base.clone();
        p[k] = base[k] + d;
        probe.set_params(&p).unwrap();
        probe.train_loss(set, objective).unwrap()
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for k in 0..base.len() {
        let fd = (8.0 * (eval(k, h) - eval(k, -h)) - (eval(k, 2.0 * h) - eval(k, -2.0 * h))) / (12.0 * h);
        if grad[k].abs().max(fd.abs()) < floor {
            continue;
        }
        checked += 1;
        worst = worst.max(rel(grad[k], fd));
    }
    (worst, checked)
}

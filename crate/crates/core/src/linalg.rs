//! Dense row-major matrices and the decompositions everything else rests on:
//! one-sided Jacobi SVD, Moore-Penrose pseudoinverse, projection error and
//! truncation of singular triples.
//!
//! Matrices follow the data-matrix convention used throughout the crate:
//! a row is a spatial grid point (or input coordinate), a column is one
//! sample (input function) or one basis vector.

use std::fmt::Write as _;
use std::ops::{Index, IndexMut};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows * cols != values.len() {
            return Err(Error::mismatch(
                "DataMatrix::new",
                format!("{} values", rows * cols),
                format!("{} values", values.len()),
            ));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self { rows, cols, values }
    }

    /// Builds a matrix from row slices. All rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::mismatch(
                    "DataMatrix::from_rows",
                    format!("{cols} entries in row {i}"),
                    r.len(),
                ));
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values,
        })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns<C: AsRef<[f64]>>(rows: usize, columns: &[C]) -> Result<Self> {
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            m.set_column(j, c.as_ref())?;
        }
        Ok(m)
    }

    pub fn column_vector(values: Vec<f64>) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            values,
        }
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, c: &[f64]) -> Result<()> {
        if c.len() != self.rows || j >= self.cols {
            return Err(Error::mismatch(
                "set_column",
                format!("column {j} of length {}", self.rows),
                format!("column {j} of length {}", c.len()),
            ));
        }
        for (i, &x) in c.iter().enumerate() {
            self[(i, j)] = x;
        }
        Ok(())
    }

    /// Columns `start..end` as a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> DataMatrix {
        assert!(start <= end && end <= self.cols, "column range out of bounds");
        DataMatrix::from_fn(self.rows, end - start, |i, j| self[(i, start + j)])
    }

    /// Rows `start..end` as a new matrix.
    pub fn row_range(&self, start: usize, end: usize) -> DataMatrix {
        assert!(start <= end && end <= self.rows, "row range out of bounds");
        DataMatrix {
            rows: end - start,
            cols: self.cols,
            values: self.values[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Horizontal concatenation `[self other]`.
    pub fn hstack(&self, other: &DataMatrix) -> Result<DataMatrix> {
        if self.rows != other.rows {
            return Err(Error::mismatch("hstack", self.rows, other.rows));
        }
        let cols = self.cols + other.cols;
        Ok(DataMatrix::from_fn(self.rows, cols, |i, j| {
            if j < self.cols {
                self[(i, j)]
            } else {
                other[(i, j - self.cols)]
            }
        }))
    }

    pub fn transpose(&self) -> DataMatrix {
        let mut out = DataMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.values[j * self.rows + i] = self.values[i * self.cols + j];
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &DataMatrix) -> Result<DataMatrix> {
        if self.cols != other.rows {
            return Err(Error::mismatch(
                "matmul",
                format!("{} rows on the right", self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let mut out = DataMatrix::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            1.0,
            MatRef::row_major(&self.values, self.cols),
            MatRef::row_major(&other.values, other.cols),
            0.0,
            &mut out.values,
            other.cols,
        );
        Ok(out)
    }

    /// `selfᵀ · other` without forming the transpose.
    pub fn matmul_tn(&self, other: &DataMatrix) -> Result<DataMatrix> {
        if self.rows != other.rows {
            return Err(Error::mismatch("matmul_tn", self.rows, other.rows));
        }
        let mut out = DataMatrix::zeros(self.cols, other.cols);
        gemm(
            self.cols,
            self.rows,
            other.cols,
            1.0,
            MatRef::transposed(&self.values, self.cols),
            MatRef::row_major(&other.values, other.cols),
            0.0,
            &mut out.values,
            other.cols,
        );
        Ok(out)
    }

    /// `self · otherᵀ` without forming the transpose.
    pub fn matmul_nt(&self, other: &DataMatrix) -> Result<DataMatrix> {
        if self.cols != other.cols {
            return Err(Error::mismatch("matmul_nt", self.cols, other.cols));
        }
        let mut out = DataMatrix::zeros(self.rows, other.rows);
        gemm(
            self.rows,
            self.cols,
            other.rows,
            1.0,
            MatRef::row_major(&self.values, self.cols),
            MatRef::transposed(&other.values, other.cols),
            0.0,
            &mut out.values,
            other.rows,
        );
        Ok(out)
    }

    pub fn sub(&self, other: &DataMatrix) -> Result<DataMatrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn add(&self, other: &DataMatrix) -> Result<DataMatrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    fn zip_with(
        &self,
        other: &DataMatrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<DataMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::mismatch(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(DataMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scaled(&self, s: f64) -> DataMatrix {
        DataMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|x| x * s).collect(),
        }
    }

    /// Multiplies column `j` by `d[j]` (i.e. `self · diag(d)`).
    pub fn scale_columns(&self, d: &[f64]) -> Result<DataMatrix> {
        if d.len() != self.cols {
            return Err(Error::mismatch("scale_columns", self.cols, d.len()));
        }
        Ok(DataMatrix::from_fn(self.rows, self.cols, |i, j| {
            self[(i, j)] * d[j]
        }))
    }

    /// Multiplies row `i` by `d[i]` (i.e. `diag(d) · self`).
    pub fn scale_rows(&self, d: &[f64]) -> Result<DataMatrix> {
        if d.len() != self.rows {
            return Err(Error::mismatch("scale_rows", self.rows, d.len()));
        }
        Ok(DataMatrix::from_fn(self.rows, self.cols, |i, j| {
            self[(i, j)] * d[i]
        }))
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &DataMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        match self.values.iter().position(|x| !x.is_finite()) {
            Some(index) => Err(Error::NonFinite { what, index }),
            None => Ok(()),
        }
    }

    /// Serialises in the matrix CSV format: a `rows,cols` header followed by
    /// one line per row. Values use the shortest representation that parses
    /// back to the identical `f64`.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 20 + 16);
        let _ = writeln!(s, "{},{}", self.rows, self.cols);
        for i in 0..self.rows {
            for (j, &x) in self.row(i).iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                push_f64(&mut s, x);
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv_str(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("missing header line")?;
        let (r, c) = header
            .split_once(',')
            .ok_or_else(|| format!("malformed header `{header}`"))?;
        let rows: usize = r.trim().parse().map_err(|e| format!("rows: {e}"))?;
        let cols: usize = c.trim().parse().map_err(|e| format!("cols: {e}"))?;
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let line = lines.next().ok_or_else(|| format!("missing row {i}"))?;
            if cols == 0 {
                continue;
            }
            let before = values.len();
            for field in line.split(',') {
                values.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| format!("row {i}: `{field}`: {e}"))?,
                );
            }
            if values.len() - before != cols {
                return Err(format!(
                    "row {i} has {} fields, expected {cols}",
                    values.len() - before
                ));
            }
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err("trailing data after last row".into());
        }
        Ok(Self { rows, cols, values })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })
    }
}

fn push_f64(s: &mut String, x: f64) {
    let a = x.abs();
    if x != 0.0 && x.is_finite() && !(1e-5..1e16).contains(&a) {
        let _ = write!(s, "{x:e}");
    } else {
        let _ = write!(s, "{x}");
    }
}

impl Index<(usize, usize)> for DataMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.values[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DataMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.values[i * self.cols + j]
    }
}

/// Borrowed matrix operand with explicit strides, for [`gemm`].
#[derive(Clone, Copy)]
pub(crate) struct MatRef<'a> {
    data: &'a [f64],
    row_stride: isize,
    col_stride: isize,
}

impl<'a> MatRef<'a> {
    /// Row-major storage with `cols` entries per row.
    pub(crate) fn row_major(data: &'a [f64], cols: usize) -> Self {
        Self {
            data,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    /// Transpose of a row-major matrix with `cols` entries per row.
    pub(crate) fn transposed(data: &'a [f64], cols: usize) -> Self {
        Self {
            data,
            row_stride: 1,
            col_stride: cols as isize,
        }
    }
}

/// `C ← alpha·A·B + beta·C` with `A: m×k`, `B: k×n`, `C: m×n` row-major
/// (row stride `ldc`).
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: MatRef<'_>,
    b: MatRef<'_>,
    beta: f64,
    c: &mut [f64],
    ldc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= (m - 1) * ldc + n, "gemm: output too small");
    if k == 0 {
        for i in 0..m {
            for x in &mut c[i * ldc..i * ldc + n] {
                *x *= beta;
            }
        }
        return;
    }
    let span = |r: MatRef<'_>, rows: usize, cols: usize| {
        (rows - 1) as isize * r.row_stride + (cols - 1) as isize * r.col_stride
    };
    assert!(span(a, m, k) < a.data.len() as isize, "gemm: lhs out of bounds");
    assert!(span(b, k, n) < b.data.len() as isize, "gemm: rhs out of bounds");
    // SAFETY: the extents of all three operands were bounds-checked above and
    // `c` is uniquely borrowed, so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.row_stride,
            a.col_stride,
            b.data.as_ptr(),
            b.row_stride,
            b.col_stride,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Thin SVD `a = u · diag(s) · vᵀ`, `r = min(rows, cols)`.
///
/// Columns of `u` carry a deterministic sign: the entry of largest magnitude
/// is non-negative (first such row on exact ties), with the matching column
/// of `v` flipped alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdFactors {
    pub u: DataMatrix,
    pub s: Vec<f64>,
    pub v: DataMatrix,
}

impl SvdFactors {
    pub fn rank_dim(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> DataMatrix {
        self.u
            .scale_columns(&self.s)
            .and_then(|us| us.matmul_nt(&self.v))
            .expect("factor shapes are consistent by construction")
    }

    /// Default rank tolerance `eps · max(rows, cols) · s₁`.
    pub fn default_tolerance(&self) -> f64 {
        let dim = self.u.rows().max(self.v.rows()) as f64;
        f64::EPSILON * dim * self.s.first().copied().unwrap_or(0.0)
    }

    pub fn numerical_rank(&self, tol: Option<f64>) -> usize {
        let tol = tol.unwrap_or_else(|| self.default_tolerance());
        self.s.iter().filter(|&&x| x > tol).count()
    }
}

/// Leading/trailing split of singular triples: `a = φ₁Σ₁V₁ᵀ + φ₂Σ₂V₂ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdSplit {
    pub phi1: DataMatrix,
    pub sigma1: Vec<f64>,
    pub v1: DataMatrix,
    pub phi2: DataMatrix,
    pub sigma2: Vec<f64>,
    pub v2: DataMatrix,
}

impl SvdSplit {
    pub fn n_keep(&self) -> usize {
        self.sigma1.len()
    }

    /// `Σ_{i>N} σᵢ²`, the optimal rank-N projection error.
    pub fn tail_energy(&self) -> f64 {
        self.sigma2.iter().map(|s| s * s).sum()
    }

    /// `Φ₁Σ₁`, the scaled SVD trunk.
    pub fn scaled_phi1(&self) -> DataMatrix {
        self.phi1
            .scale_columns(&self.sigma1)
            .expect("sigma1 matches phi1 columns")
    }
}

const MAX_SWEEPS: usize = 80;

/// Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
pub fn svd(a: &DataMatrix) -> Result<SvdFactors> {
    a.ensure_finite("svd input")?;
    let (n, m) = a.shape();
    let transposed = n < m;
    // Work on the tall orientation: `p` rows, `q ≤ p` columns.
    let (p, q) = if transposed { (m, n) } else { (n, m) };

    let mut cols: Vec<Vec<f64>> = (0..q)
        .map(|j| {
            if transposed {
                a.row(j).to_vec()
            } else {
                a.column(j)
            }
        })
        .collect();
    let mut rot: Vec<Vec<f64>> = (0..q)
        .map(|j| {
            let mut e = vec![0.0; q];
            e[j] = 1.0;
            e
        })
        .collect();

    jacobi_sweeps(&mut cols, &mut rot);

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let s: Vec<f64> = order.iter().map(|&k| norms[k]).collect();
    let floor = f64::MIN_POSITIVE * 1e8;
    let mut left: Vec<Option<Vec<f64>>> = order
        .iter()
        .map(|&k| {
            (norms[k] > floor).then(|| cols[k].iter().map(|x| x / norms[k]).collect())
        })
        .collect();
    complete_orthonormal(&mut left, p);
    let left: Vec<Vec<f64>> = left.into_iter().map(|c| c.expect("completed")).collect();
    let right: Vec<Vec<f64>> = order.iter().map(|&k| rot[k].clone()).collect();

    let (mut u_cols, mut v_cols) = if transposed {
        (right, left)
    } else {
        (left, right)
    };
    for (uc, vc) in u_cols.iter_mut().zip(v_cols.iter_mut()) {
        let mut best = 0;
        for (i, x) in uc.iter().enumerate() {
            if x.abs() > uc[best].abs() {
                best = i;
            }
        }
        if uc.get(best).is_some_and(|&x| x < 0.0) {
            uc.iter_mut().for_each(|x| *x = -*x);
            vc.iter_mut().for_each(|x| *x = -*x);
        }
    }

    Ok(SvdFactors {
        u: DataMatrix::from_columns(n, &u_cols)?,
        s,
        v: DataMatrix::from_columns(m, &v_cols)?,
    })
}

fn jacobi_sweeps(cols: &mut [Vec<f64>], rot: &mut [Vec<f64>]) {
    let q = cols.len();
    let tol = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..q {
            for j in i + 1..q {
                let (alpha, beta, gamma) = {
                    let (ci, cj) = (&cols[i], &cols[j]);
                    let mut a = 0.0;
                    let mut b = 0.0;
                    let mut g = 0.0;
                    for (x, y) in ci.iter().zip(cj) {
                        a += x * x;
                        b += y * y;
                        g += x * y;
                    }
                    (a, b, g)
                };
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                rotate_pair(cols, i, j, c, s);
                rotate_pair(rot, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
}

fn rotate_pair(vs: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = vs.split_at_mut(j);
    for (x, y) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Fills `None` slots with unit vectors orthogonal to every other slot,
/// drawn from the standard basis by modified Gram-Schmidt (two passes).
fn complete_orthonormal(slots: &mut [Option<Vec<f64>>], dim: usize) {
    let mut next_axis = 0;
    for k in 0..slots.len() {
        if slots[k].is_some() {
            continue;
        }
        loop {
            assert!(next_axis < dim, "cannot complete an orthonormal set");
            let mut w = vec![0.0; dim];
            w[next_axis] = 1.0;
            next_axis += 1;
            for _ in 0..2 {
                for other in slots.iter().flatten() {
                    let d = dot(&w, other);
                    w.iter_mut().zip(other).for_each(|(x, o)| *x -= d * o);
                }
            }
            let norm = dot(&w, &w).sqrt();
            if norm > 0.5 {
                w.iter_mut().for_each(|x| *x /= norm);
                slots[k] = Some(w);
                break;
            }
        }
    }
}

/// Moore-Penrose pseudoinverse. Singular values at or below `tol` (default
/// `eps · max(rows, cols) · s₁`) are treated as zero.
pub fn pseudoinverse(t: &DataMatrix, tol: Option<f64>) -> Result<DataMatrix> {
    if let Some(tol) = tol {
        if !(tol >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pseudoinverse tolerance must be non-negative, got {tol}"
            )));
        }
    }
    let f = svd(t)?;
    Ok(pinv_from_svd(&f, tol))
}

pub(crate) fn pinv_from_svd(f: &SvdFactors, tol: Option<f64>) -> DataMatrix {
    let tol = tol.unwrap_or_else(|| f.default_tolerance());
    let inv: Vec<f64> = f
        .s
        .iter()
        .map(|&x| if x > tol { 1.0 / x } else { 0.0 })
        .collect();
    f.v.scale_columns(&inv)
        .and_then(|vs| vs.matmul_nt(&f.u))
        .expect("factor shapes are consistent by construction")
}

/// `‖(I − t t⁺) a‖_F²`: the part of `a` outside the column span of `t`.
pub fn projection_error(t: &DataMatrix, a: &DataMatrix) -> Result<f64> {
    Ok(projection_residual(t, a)?.frobenius_sq())
}

/// `(I − t t⁺) a`.
pub fn projection_residual(t: &DataMatrix, a: &DataMatrix) -> Result<DataMatrix> {
    if t.rows() != a.rows() {
        return Err(Error::mismatch("projection_error", t.rows(), a.rows()));
    }
    a.ensure_finite("projection_error input")?;
    let tp = pseudoinverse(t, None)?;
    let coeffs = tp.matmul(a)?;
    a.sub(&t.matmul(&coeffs)?)
}

/// Splits singular triples into the leading `n_keep` and the remainder.
pub fn truncate(f: &SvdFactors, n_keep: usize) -> Result<SvdSplit> {
    let r = f.s.len();
    if n_keep > r {
        return Err(Error::InvalidArgument(format!(
            "cannot keep {n_keep} singular triples out of {r}"
        )));
    }
    Ok(SvdSplit {
        phi1: f.u.columns(0, n_keep),
        sigma1: f.s[..n_keep].to_vec(),
        v1: f.v.columns(0, n_keep),
        phi2: f.u.columns(n_keep, r),
        sigma2: f.s[n_keep..].to_vec(),
        v2: f.v.columns(n_keep, r),
    })
}

/// Number of singular values above `tol` (default as for the pseudoinverse).
pub fn numerical_rank(a: &DataMatrix, tol: Option<f64>) -> Result<usize> {
    Ok(svd(a)?.numerical_rank(tol))
}

/// Spectral norm `‖t‖₂` by power iteration on `tᵀt`.
pub fn spectral_norm(t: &DataMatrix) -> f64 {
    const TOL: f64 = 1e-10;
    const MAX_ITER: usize = 10_000;
    let q = t.cols();
    if t.is_empty() {
        return 0.0;
    }
    let gram = t.matmul_tn(t).expect("tᵀt is always conformal");
    // Deterministic, non-symmetric start vector.
    let mut x: Vec<f64> = (0..q).map(|k| 1.0 + 0.1 * (k as f64 + 1.0).sqrt()).collect();
    let norm = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
    let mut lambda = 0.0;
    for _ in 0..MAX_ITER {
        let y: Vec<f64> = (0..q).map(|i| dot(gram.row(i), &x)).collect();
        let ny = dot(&y, &y).sqrt();
        if ny == 0.0 {
            return 0.0;
        }
        let next = dot(&x, &y);
        x = y.into_iter().map(|v| v / ny).collect();
        if (next - lambda).abs() <= TOL * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.max(0.0).sqrt()
}

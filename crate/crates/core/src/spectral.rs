//! Frequency estimators for functions sampled on scattered points, and
//! synthetic right singular functions with prescribed frequencies.
//!
//! Points are the columns of an `M × m` matrix. Estimators:
//! * total variation over a kNN graph (mean difference quotient),
//! * Laplacian energy (Rayleigh quotient of a symmetrised kNN Laplacian),
//! * projected Fourier (mean frequency of the spectrum of 1D projections).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DataMatrix};

/// Sorted nearest neighbours of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    pub k: usize,
    /// `indices[i]` lists the `k` nearest other points of point `i`.
    pub indices: Vec<Vec<usize>>,
    /// Euclidean distances matching `indices`.
    pub distances: Vec<Vec<f64>>,
    /// Neighbour pairs `(i, j)` at distance zero.
    pub duplicates: Vec<(usize, usize)>,
}

fn point_rows(points: &DataMatrix) -> Vec<Vec<f64>> {
    (0..points.cols()).map(|j| points.column(j)).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Brute-force kNN on the columns of `points`. The point itself is excluded
/// and equal distances are broken by the lower index.
pub fn knn(points: &DataMatrix, k: usize) -> Result<Neighbors> {
    let m = points.cols();
    if k == 0 || k >= m {
        return Err(Error::InvalidArgument(format!(
            "k must lie in 1..{m} for {m} points, got {k}"
        )));
    }
    points.ensure_finite("points")?;
    let rows = point_rows(points);
    let lists: Vec<(Vec<usize>, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..m)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(&rows[i], &rows[j]), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(k);
            cand.into_iter().map(|(d, j)| (j, d.sqrt())).unzip()
        })
        .collect();
    let mut duplicates = Vec::new();
    let mut indices = Vec::with_capacity(m);
    let mut distances = Vec::with_capacity(m);
    for (i, (idx, dist)) in lists.into_iter().enumerate() {
        for (&j, &d) in idx.iter().zip(&dist) {
            if d == 0.0 {
                duplicates.push((i, j));
            }
        }
        indices.push(idx);
        distances.push(dist);
    }
    Ok(Neighbors {
        k,
        indices,
        distances,
        duplicates,
    })
}

fn check_values(points: &DataMatrix, y: &[f64]) -> Result<()> {
    if y.len() != points.cols() {
        return Err(Error::mismatch("frequency estimator", points.cols(), y.len()));
    }
    if let Some(index) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "function values",
            index,
        });
    }
    Ok(())
}

/// `(1/(m k)) Σᵢ Σ_{j ∈ N_k(i)} |yᵢ − yⱼ| / ‖xᵢ − xⱼ‖`.
pub fn tv_frequency(points: &DataMatrix, y: &[f64], k: usize) -> Result<f64> {
    check_values(points, y)?;
    tv_from_neighbors(&knn(points, k)?, y)
}

pub fn tv_from_neighbors(nb: &Neighbors, y: &[f64]) -> Result<f64> {
    if let Some(&(i, j)) = nb.duplicates.first() {
        return Err(Error::ZeroDistance(i, j));
    }
    let m = nb.indices.len();
    let mut total = 0.0;
    for i in 0..m {
        for (&j, &d) in nb.indices[i].iter().zip(&nb.distances[i]) {
            total += (y[i] - y[j]).abs() / d;
        }
    }
    Ok(total / (m * nb.k) as f64)
}

/// Rayleigh quotient `yᵀLy / yᵀy` of the symmetrised directed kNN
/// Laplacian with weights
/// `w(i,j) = exp(−(k/2) ‖xᵢ−xⱼ‖² / Σ_{l∈N(i)} ‖xᵢ−x_l‖²)`.
pub fn laplacian_energy(points: &DataMatrix, y: &[f64], k: usize) -> Result<f64> {
    check_values(points, y)?;
    laplacian_from_neighbors(&knn(points, k)?, y)
}

pub fn laplacian_from_neighbors(nb: &Neighbors, y: &[f64]) -> Result<f64> {
    let norm: f64 = y.iter().map(|v| v * v).sum();
    if norm == 0.0 {
        return Err(Error::InvalidArgument(
            "Laplacian energy of the zero signal is undefined".into(),
        ));
    }
    // yᵀ L y = yᵀ L₀ y with L₀ = D − W, D the out-degree.
    let mut energy = 0.0;
    for (i, (idx, dist)) in nb.indices.iter().zip(&nb.distances).enumerate() {
        let scale: f64 = dist.iter().map(|d| d * d).sum();
        if scale == 0.0 {
            return Err(Error::ZeroDistance(i, idx[0]));
        }
        for (&j, &d) in idx.iter().zip(dist) {
            let w = (-(nb.k as f64) / 2.0 * d * d / scale).exp();
            energy += w * (y[i] * y[i] - y[i] * y[j]);
        }
    }
    Ok(energy / norm)
}

/// Mean frequency `Σ |q(f)|² f / Σ |q(f)|²` of the spectrum `q` averaged
/// over 1D projections `sᵢ = uᵀxᵢ`, each computed by a direct non-uniform
/// DFT `Σᵢ yᵢ e^{−2πi f sᵢ}`.
pub fn projected_fourier(
    points: &DataMatrix,
    y: &[f64],
    projections: &[Vec<f64>],
    freq_grid: &[f64],
) -> Result<f64> {
    check_values(points, y)?;
    if projections.is_empty() {
        return Err(Error::InvalidArgument("no projection directions".into()));
    }
    if freq_grid.is_empty() {
        return Err(Error::InvalidArgument("empty frequency grid".into()));
    }
    // q(f) = mean over projections of the complex transform.
    let mut spectrum = vec![(0.0, 0.0); freq_grid.len()];
    let z = projections.len() as f64;
    for u in projections {
        let s = project(points, u)?;
        for (q, &f) in spectrum.iter_mut().zip(freq_grid) {
            for (si, yi) in s.iter().zip(y) {
                let (sin, cos) = (2.0 * std::f64::consts::PI * f * si).sin_cos();
                q.0 += yi * cos / z;
                q.1 -= yi * sin / z;
            }
        }
    }
    let spectrum: Vec<f64> = spectrum.iter().map(|(re, im)| re.hypot(*im)).collect();
    let power: f64 = spectrum.iter().map(|q| q * q).sum();
    if power == 0.0 {
        return Err(Error::InvalidArgument(
            "spectrum vanishes on the frequency grid".into(),
        ));
    }
    Ok(spectrum
        .iter()
        .zip(freq_grid)
        .map(|(q, f)| q * q * f)
        .sum::<f64>()
        / power)
}

fn project(points: &DataMatrix, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != points.rows() {
        return Err(Error::mismatch("projection", points.rows(), u.len()));
    }
    let ut = DataMatrix::new(1, u.len(), u.to_vec())?;
    Ok(ut.matmul(points)?.into_values())
}

/// The first `count` left singular vectors of the point matrix.
pub fn default_projections(points: &DataMatrix, count: usize) -> Result<Vec<Vec<f64>>> {
    let f = linalg::svd(points)?;
    Ok((0..count.min(f.u.cols())).map(|j| f.u.column(j)).collect())
}

/// 64 uniform frequencies from 0 to `m / (2 · range)`, where `range` is the
/// widest extent of the projected samples.
pub fn default_freq_grid(points: &DataMatrix, projections: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut range: f64 = 0.0;
    for u in projections {
        let s = project(points, u)?;
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        range = range.max(hi - lo);
    }
    if !(range > 0.0) {
        return Err(Error::InvalidArgument("projected samples have zero extent".into()));
    }
    let fmax = points.cols() as f64 / (2.0 * range);
    Ok((0..64).map(|i| fmax * i as f64 / 63.0).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Tv,
    LaplacianEnergy,
    ProjectedFourier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub method: EstimatorKind,
    pub k_neighbors: usize,
    pub values: Vec<f64>,
    /// `values / max(values)`.
    pub relative: Vec<f64>,
}

impl FrequencyEstimate {
    fn new(method: EstimatorKind, k_neighbors: usize, values: Vec<f64>) -> Self {
        let max = values.iter().copied().fold(0.0, f64::max);
        let relative = values
            .iter()
            .map(|v| if max > 0.0 { v / max } else { 0.0 })
            .collect();
        Self {
            method,
            k_neighbors,
            values,
            relative,
        }
    }
}

/// Runs one estimator on every column of `functions` (`m × N`).
pub fn estimate_all(
    points: &DataMatrix,
    functions: &DataMatrix,
    method: EstimatorKind,
    k: usize,
) -> Result<FrequencyEstimate> {
    if functions.rows() != points.cols() {
        return Err(Error::mismatch("estimate_all", points.cols(), functions.rows()));
    }
    let cols: Vec<Vec<f64>> = (0..functions.cols()).map(|j| functions.column(j)).collect();
    let values: Vec<f64> = match method {
        EstimatorKind::Tv => {
            let nb = knn(points, k)?;
            cols.par_iter().map(|y| tv_from_neighbors(&nb, y)).collect::<Result<_>>()?
        }
        EstimatorKind::LaplacianEnergy => {
            let nb = knn(points, k)?;
            cols.par_iter()
                .map(|y| laplacian_from_neighbors(&nb, y))
                .collect::<Result<_>>()?
        }
        EstimatorKind::ProjectedFourier => {
            let proj = default_projections(points, k.max(1))?;
            let grid = default_freq_grid(points, &proj)?;
            cols.par_iter()
                .map(|y| projected_fourier(points, y, &proj, &grid))
                .collect::<Result<_>>()?
        }
    };
    Ok(FrequencyEstimate::new(method, k, values))
}

/// Spearman rank correlation (average ranks on ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman: length mismatch");
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    if da == 0.0 || db == 0.0 {
        0.0
    } else {
        num / (da * db).sqrt()
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_modes: usize,
    /// Minimum frequency `F₀`.
    pub f0: f64,
    /// Frequency growth rate.
    pub alpha: f64,
    /// Singular values are `σⱼ = e^{βj}`.
    pub beta: f64,
    pub m: usize,
    pub m_test: usize,
    pub input_dim: usize,
    pub trials: usize,
    pub threshold: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_modes: 5,
            f0: 1.0,
            alpha: 0.2,
            beta: -0.01,
            m: 300,
            m_test: 0,
            input_dim: 5,
            trials: 200,
            threshold: 0.05,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| Error::Config {
            field: format!("synth.{field}"),
            message: message.into(),
        };
        if self.beta == 0.0 || !self.beta.is_finite() {
            return Err(bad("beta", "must be finite and non-zero"));
        }
        if !(self.f0 > 0.0 && self.f0.is_finite()) {
            return Err(bad("f0", "must be positive"));
        }
        if !self.alpha.is_finite() {
            return Err(bad("alpha", "must be finite"));
        }
        if self.n_modes == 0 || self.input_dim == 0 {
            return Err(bad("n_modes", "n_modes and input_dim must be positive"));
        }
        if self.m < self.n_modes {
            return Err(bad("m", "need at least as many samples as modes"));
        }
        if self.trials == 0 {
            return Err(bad("trials", "must be positive"));
        }
        if !(self.threshold > 0.0) {
            return Err(bad("threshold", "must be positive"));
        }
        Ok(())
    }

    /// `fⱼ = F₀ e^{α(j−1)}` for `α > 0`, else `F₀ e^{α(j−1−N)}`.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n_modes as f64;
        (1..=self.n_modes)
            .map(|j| {
                let j = j as f64;
                if self.alpha > 0.0 {
                    self.f0 * (self.alpha * (j - 1.0)).exp()
                } else {
                    self.f0 * (self.alpha * (j - 1.0 - n)).exp()
                }
            })
            .collect()
    }

    /// `σⱼ = e^{βj}`.
    pub fn sigmas(&self) -> Vec<f64> {
        (1..=self.n_modes).map(|j| (self.beta * j as f64).exp()).collect()
    }
}

/// Draws `m` points `a(1 + 0.1 b)` with `a ~ U[0,1]`, `b ~ U[−1,1]^M`.
pub fn sample_points<R: Rng + ?Sized>(input_dim: usize, m: usize, rng: &mut R) -> DataMatrix {
    let mut x = DataMatrix::zeros(input_dim, m);
    for j in 0..m {
        let a: f64 = rng.random_range(0.0..=1.0);
        for i in 0..input_dim {
            let b: f64 = rng.random_range(-1.0..=1.0);
            x[(i, j)] = a * (1.0 + 0.1 * b);
        }
    }
    x
}

/// Synthetic right singular functions `ρⱼ`: accepted sine ridge functions
/// orthonormalised on the training points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RightSingularFunctions {
    pub frequencies: Vec<f64>,
    /// Accepted direction `dⱼ` per frequency.
    pub directions: Vec<Vec<f64>>,
    /// Training-point norm of each accepted candidate.
    pub norms: Vec<f64>,
    /// Upper-triangular `R` with `W = V R` from Gram–Schmidt.
    pub r: DataMatrix,
    /// Draws needed per frequency.
    pub trials_used: Vec<usize>,
}

impl RightSingularFunctions {
    fn candidates(&self, points: &DataMatrix) -> Result<DataMatrix> {
        let m = points.cols();
        let n = self.frequencies.len();
        let mut w = DataMatrix::zeros(m, n);
        for j in 0..n {
            let phase = project(points, &self.directions[j])?;
            for i in 0..m {
                w[(i, j)] = (2.0 * std::f64::consts::PI * self.frequencies[j] * phase[i]).sin()
                    / self.norms[j];
            }
        }
        Ok(w)
    }

    /// Evaluates the orthonormalised functions at new points (`m' × N`).
    pub fn evaluate(&self, points: &DataMatrix) -> Result<DataMatrix> {
        let w = self.candidates(points)?;
        // V = W R⁻¹, solved row by row (R upper triangular).
        let n = self.frequencies.len();
        let mut v = DataMatrix::zeros(w.rows(), n);
        for i in 0..w.rows() {
            for j in 0..n {
                let mut acc = w[(i, j)];
                for k in 0..j {
                    acc -= v[(i, k)] * self.r[(k, j)];
                }
                v[(i, j)] = acc / self.r[(j, j)];
            }
        }
        Ok(v)
    }
}

/// Generates training points and `m × N` orthonormal right singular
/// functions whose frequencies follow [`SyntheticSpec::frequencies`].
pub fn synth_rsf<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    rng: &mut R,
) -> Result<(DataMatrix, DataMatrix, RightSingularFunctions)> {
    spec.validate()?;
    let m = spec.m;
    let dim = spec.input_dim;
    let points = sample_points(dim, m, rng);
    let freqs = spec.frequencies();
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(spec.n_modes);
    let mut directions = Vec::with_capacity(spec.n_modes);
    let mut norms = Vec::with_capacity(spec.n_modes);
    let mut trials_used = Vec::with_capacity(spec.n_modes);
    for (j, &f) in freqs.iter().enumerate() {
        let mut found = false;
        for trial in 1..=spec.trials {
            let d: Vec<f64> = (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    1.0 + z
                })
                .collect();
            let phase = project(&points, &d)?;
            let mut w: Vec<f64> = phase
                .iter()
                .map(|s| (2.0 * std::f64::consts::PI * f * s).sin())
                .collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            w.iter_mut().for_each(|x| *x /= norm);
            let max_ip = accepted
                .iter()
                .map(|a| linalg::dot(a, &w).abs())
                .fold(0.0, f64::max);
            if max_ip < spec.threshold {
                accepted.push(w);
                directions.push(d);
                norms.push(norm);
                trials_used.push(trial);
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::SynthesisFailed {
                index: j + 1,
                trials: spec.trials,
            });
        }
    }
    let (v, r) = gram_schmidt(&accepted)?;
    let rsf = RightSingularFunctions {
        frequencies: freqs,
        directions,
        norms,
        r,
        trials_used,
    };
    Ok((points, v, rsf))
}

/// Modified Gram–Schmidt with one re-orthogonalisation pass. Returns the
/// `m × N` orthonormal factor and `R` (`N × N`) with `W = V R`.
fn gram_schmidt(cols: &[Vec<f64>]) -> Result<(DataMatrix, DataMatrix)> {
    let n = cols.len();
    let m = cols.first().map_or(0, Vec::len);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut r = DataMatrix::zeros(n, n);
    for (j, c) in cols.iter().enumerate() {
        let mut w = c.clone();
        for _ in 0..2 {
            for (k, qk) in q.iter().enumerate() {
                let p = linalg::dot(qk, &w);
                for (wi, qi) in w.iter_mut().zip(qk) {
                    *wi -= p * qi;
                }
                r[(k, j)] += p;
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::SynthesisFailed { index: j + 1, trials: 0 });
        }
        w.iter_mut().for_each(|x| *x /= norm);
        r[(j, j)] = norm;
        q.push(w);
    }
    Ok((DataMatrix::from_columns(m, &q)?, r))
}

/// Synthetic operator-learning data `A = Φ diag(σ) Vᵀ` with `Φ = I_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    pub points: DataMatrix,
    /// `N × m`.
    pub a: DataMatrix,
    pub v: DataMatrix,
    pub points_test: DataMatrix,
    pub a_test: DataMatrix,
    pub functions: RightSingularFunctions,
    pub sigmas: Vec<f64>,
    /// `order[i]` is the function index `j` of the `i`-th largest `σ`.
    pub order: Vec<usize>,
}

impl SyntheticData {
    /// Dictated frequency of each mode in descending-`σ` order.
    pub fn mode_frequencies(&self) -> Vec<f64> {
        self.order.iter().map(|&j| self.functions.frequencies[j]).collect()
    }
}

pub fn synth_dataset<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<SyntheticData> {
    let (points, v, functions) = synth_rsf(spec, rng)?;
    let sigmas = spec.sigmas();
    let points_test = sample_points(spec.input_dim, spec.m_test, rng);
    let v_test = functions.evaluate(&points_test)?;
    let a = v.scale_columns(&sigmas)?.transpose();
    let a_test = v_test.scale_columns(&sigmas)?.transpose();
    let mut order: Vec<usize> = (0..spec.n_modes).collect();
    order.sort_by(|&i, &j| sigmas[j].total_cmp(&sigmas[i]));
    Ok(SyntheticData {
        spec: spec.clone(),
        points,
        a,
        v,
        points_test,
        a_test,
        functions,
        sigmas,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64]) -> DataMatrix {
        DataMatrix::new(1, xs.len(), xs.to_vec()).unwrap()
    }

    #[test]
    fn knn_tie_rule() {
        let nb = knn(&line(&[0.0, 1.0, 2.0]), 1).unwrap();
        assert_eq!(nb.indices, vec![vec![1], vec![0], vec![1]]);
        let all = knn(&line(&[0.0, 1.0, 2.0]), 2).unwrap();
        assert_eq!(all.indices[1], vec![0, 2]);
        assert!(knn(&line(&[0.0, 1.0]), 2).is_err());
    }

    #[test]
    fn tv_examples() {
        let p = line(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(tv_frequency(&p, &[2.0; 4], 1).unwrap(), 0.0);
        assert!((tv_frequency(&p, &[0.0, 1.0, 2.0, 3.0], 1).unwrap() - 1.0).abs() < 1e-15);
        let dup = line(&[0.0, 0.0, 1.0]);
        assert!(matches!(tv_frequency(&dup, &[1.0, 2.0, 3.0], 1), Err(Error::ZeroDistance(0, 1))));
    }

    #[test]
    fn laplacian_two_nodes() {
        let p = line(&[0.0, 1.0]);
        let w = (-0.5_f64).exp();
        let e = laplacian_energy(&p, &[1.0, -1.0], 1).unwrap();
        assert!((e - 2.0 * w).abs() < 1e-15);
        assert_eq!(laplacian_energy(&p, &[3.0, 3.0], 1).unwrap(), 0.0);
        assert!(laplacian_energy(&p, &[0.0, 0.0], 1).is_err());
    }

    #[test]
    fn projected_fourier_single_tone() {
        let m = 400;
        let s: Vec<f64> = (0..m).map(|i| i as f64 / m as f64).collect();
        let f0 = 20.0;
        let y: Vec<f64> = s.iter().map(|x| (2.0 * std::f64::consts::PI * f0 * x).sin()).collect();
        let grid: Vec<f64> = (0..200).map(|i| i as f64 * 0.2).collect();
        let est = projected_fourier(&line(&s), &y, &[vec![1.0]], &grid).unwrap();
        assert!((est - f0).abs() < 0.1 * f0, "estimate {est}");
        assert!(projected_fourier(&line(&s), &vec![0.0; m], &[vec![1.0]], &grid).is_err());
        assert!(projected_fourier(&line(&s), &y, &[vec![1.0]], &[]).is_err());
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn synthetic_frequencies_and_sigmas() {
        let mut spec = SyntheticSpec {
            beta: -0.01,
            ..SyntheticSpec::default()
        };
        let s = spec.sigmas();
        assert!(((s[0] / s[4]).powi(2) - 1.083).abs() < 0.001);
        spec.beta = -0.5;
        let s = spec.sigmas();
        assert!(((s[0] / s[4]).powi(2) - 54.6).abs() < 0.1);
        spec.alpha = -0.2;
        let f = spec.frequencies();
        assert!(f.windows(2).all(|w| w[0] > w[1]));
        spec.beta = 0.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn rsf_is_orthonormal_and_reproducible_off_sample() {
        let spec = SyntheticSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (points, v, rsf) = synth_rsf(&spec, &mut rng).unwrap();
        let gram = v.matmul_tn(&v).unwrap();
        assert!(gram.max_abs_diff(&DataMatrix::identity(spec.n_modes)) < 1e-10);
        assert!(rsf.evaluate(&points).unwrap().max_abs_diff(&v) < 1e-12);
    }

    #[test]
    fn single_mode_accepts_first_candidate() {
        let spec = SyntheticSpec {
            n_modes: 1,
            ..SyntheticSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, v, rsf) = synth_rsf(&spec, &mut rng).unwrap();
        assert_eq!(rsf.trials_used, vec![1]);
        assert!((v.frobenius() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn impossible_threshold_fails_with_index() {
        let spec = SyntheticSpec {
            threshold: 1e-9,
            trials: 3,
            ..SyntheticSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = synth_rsf(&spec, &mut rng).unwrap_err();
        assert!(matches!(err, Error::SynthesisFailed { index: 2, trials: 3 }));
    }
}

//! Datasets for the three model problems (linear advection-diffusion,
//! KdV and viscous Burgers) together with the sine-subspace encoding of
//! input functions.
//!
//! Inputs are `p(x) = Σᵢ aᵢ sin(ωᵢ x)` with `aᵢ ~ U(-1, 1)`. Sampling `p`
//! at `M ≥ L` interior points loses no information, so the branch input
//! `p̂` determines the coefficients exactly.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{self, DataMatrix};

/// Advection speed of the AD problem, `4 / 2π`.
pub const AD_SPEED: f64 = 4.0 / (2.0 * PI);
/// Diffusivity of the AD problem, `0.01 / 4π²`.
pub const AD_DIFFUSIVITY: f64 = 0.01 / (4.0 * PI * PI);
/// Coefficient of `u ∂ₓu` in KdV, `1 / 2π`.
pub const KDV_ADVECTION: f64 = 1.0 / (2.0 * PI);
/// Coefficient of `∂ₓ³u` in KdV, `0.01 / 8π³`.
pub const KDV_DISPERSION: f64 = 0.01 / (8.0 * PI * PI * PI);
pub const BURGERS_VISCOSITY: f64 = 0.01;

/// Fraction of the RK4 stability bound actually used.
const SAFETY: f64 = 0.5;
/// Extent of the RK4 stability region along the real and imaginary axes
/// (rounded down).
const RK4_RADIUS: f64 = 2.78;
/// Amplitude beyond which a trajectory is declared unstable.
const BLOWUP: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub n_modes: usize,
    pub frequencies: Vec<f64>,
    pub coeff_low: f64,
    pub coeff_high: f64,
}

impl InputSpec {
    /// `ωᵢ = base · i` for `i = 1..=n_modes`, coefficients on `[-1, 1]`.
    pub fn harmonic(n_modes: usize, base: f64) -> Self {
        Self {
            n_modes,
            frequencies: (1..=n_modes).map(|i| base * i as f64).collect(),
            coeff_low: -1.0,
            coeff_high: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies.len() != self.n_modes {
            return Err(Error::InvalidArgument(format!(
                "{} frequencies given for {} modes",
                self.frequencies.len(),
                self.n_modes
            )));
        }
        if self.frequencies.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(
                "input frequencies must be positive".into(),
            ));
        }
        let mut sorted = self.frequencies.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "input frequencies must be distinct".into(),
            ));
        }
        if !(self.coeff_low < self.coeff_high) {
            return Err(Error::InvalidArgument(format!(
                "empty coefficient range [{}, {}]",
                self.coeff_low, self.coeff_high
            )));
        }
        Ok(())
    }

    /// `p(x) = Σᵢ aᵢ sin(ωᵢ x)`.
    pub fn evaluate(&self, coeffs: &[f64], x: f64) -> f64 {
        coeffs
            .iter()
            .zip(&self.frequencies)
            .map(|(a, w)| a * (w * x).sin())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    AdvectionDiffusion,
    Kdv,
    Burgers,
}

impl std::str::FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ad" | "advection_diffusion" => Ok(ProblemKind::AdvectionDiffusion),
            "kdv" => Ok(ProblemKind::Kdv),
            "burgers" => Ok(ProblemKind::Burgers),
            other => Err(format!("unknown problem `{other}` (expected ad, kdv or burgers)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub tau: f64,
    pub grid_points: usize,
    pub input_dim: usize,
    /// Number of sine modes of the Burgers Galerkin discretisation.
    pub spectral_basis: usize,
    /// Upper bound on the time step. `None` picks the stability-derived step
    /// (AD, KdV) or `1e-5` (Burgers).
    pub dt: Option<f64>,
    pub input: InputSpec,
}

impl ProblemSpec {
    /// AD with `L = 20`, `ωᵢ = 2πi`, `n = M = 200`.
    pub fn advection_diffusion(tau: f64) -> Self {
        Self {
            kind: ProblemKind::AdvectionDiffusion,
            tau,
            grid_points: 200,
            input_dim: 200,
            spectral_basis: 0,
            dt: None,
            input: InputSpec::harmonic(20, 2.0 * PI),
        }
    }

    /// KdV with `L = 5`, `ωᵢ = 2πi`, `n = M = 400`.
    pub fn kdv(tau: f64) -> Self {
        Self {
            kind: ProblemKind::Kdv,
            tau,
            grid_points: 400,
            input_dim: 400,
            spectral_basis: 0,
            dt: None,
            input: InputSpec::harmonic(5, 2.0 * PI),
        }
    }

    /// Burgers with `L = 5`, `ωᵢ = iπ`, `n = 200`, `M = 50`, 100 sine modes.
    pub fn burgers(tau: f64) -> Self {
        Self {
            kind: ProblemKind::Burgers,
            tau,
            grid_points: 200,
            input_dim: 50,
            spectral_basis: 100,
            dt: Some(1e-5),
            input: InputSpec::harmonic(5, PI),
        }
    }

    pub fn with_grid(mut self, grid_points: usize, input_dim: usize) -> Self {
        self.grid_points = grid_points;
        self.input_dim = input_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.input.validate()?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.grid_points < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 grid points, got {}",
                self.grid_points
            )));
        }
        let l = self.input.n_modes;
        if self.input_dim < l {
            return Err(Error::InvalidArgument(format!(
                "input dimension {} is below the number of input modes {l}",
                self.input_dim
            )));
        }
        if self.kind == ProblemKind::AdvectionDiffusion && self.input_dim < 2 * l {
            return Err(Error::InvalidArgument(format!(
                "advection-diffusion inputs need M >= 2L = {}, got {}",
                2 * l,
                self.input_dim
            )));
        }
        if self.kind == ProblemKind::Burgers && self.spectral_basis == 0 {
            return Err(Error::InvalidArgument(
                "Burgers needs a positive spectral_basis".into(),
            ));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
            }
        }
        Ok(())
    }

    /// Solution grid: `j/n` for the periodic problems, the interior points
    /// `j/(n+1)` for Dirichlet Burgers.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_points;
        match self.kind {
            ProblemKind::Burgers => (1..=n).map(|j| j as f64 / (n + 1) as f64).collect(),
            _ => (0..n).map(|j| j as f64 / n as f64).collect(),
        }
    }

    /// Interior sampling mesh `x̄ⱼ = j/(M+1)` of the branch input.
    pub fn sample_points(&self) -> Vec<f64> {
        interior_mesh(self.input_dim)
    }
}

pub fn interior_mesh(m: usize) -> Vec<f64> {
    (1..=m).map(|j| j as f64 / (m + 1) as f64).collect()
}

/// Draws an `L × m` coefficient matrix, column by column.
pub fn sample_inputs<R: Rng + ?Sized>(spec: &InputSpec, m: usize, rng: &mut R) -> DataMatrix {
    let l = spec.n_modes;
    let mut out = DataMatrix::zeros(l, m);
    for j in 0..m {
        for i in 0..l {
            out[(i, j)] = rng.random_range(spec.coeff_low..=spec.coeff_high);
        }
    }
    out
}

/// `Ψ` with `Ψⱼᵢ = sin(ωᵢ x̄ⱼ)`.
pub fn encoding_matrix(spec: &InputSpec, sample_points: &[f64]) -> DataMatrix {
    DataMatrix::from_fn(sample_points.len(), spec.n_modes, |j, i| {
        (spec.frequencies[i] * sample_points[j]).sin()
    })
}

fn check_encoding(spec: &InputSpec, sample_points: &[f64]) -> Result<()> {
    if sample_points.len() < spec.n_modes {
        return Err(Error::InvalidArgument(format!(
            "{} sample points cannot resolve {} input modes",
            sample_points.len(),
            spec.n_modes
        )));
    }
    Ok(())
}

/// `p̂ = Ψ a` for every column of `coeffs`.
pub fn encode_inputs(
    coeffs: &DataMatrix,
    spec: &InputSpec,
    sample_points: &[f64],
) -> Result<DataMatrix> {
    check_encoding(spec, sample_points)?;
    if coeffs.rows() != spec.n_modes {
        return Err(Error::mismatch("encode_inputs", spec.n_modes, coeffs.rows()));
    }
    encoding_matrix(spec, sample_points).matmul(coeffs)
}

/// `a = Ψ⁺ p̂`.
pub fn decode_inputs(
    p_hat: &DataMatrix,
    spec: &InputSpec,
    sample_points: &[f64],
) -> Result<DataMatrix> {
    check_encoding(spec, sample_points)?;
    if p_hat.rows() != sample_points.len() {
        return Err(Error::mismatch("decode_inputs", sample_points.len(), p_hat.rows()));
    }
    let psi = encoding_matrix(spec, sample_points);
    linalg::pseudoinverse(&psi, None)?.matmul(p_hat)
}

/// Time discretisation actually used for one solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub steps: usize,
    pub dt: f64,
}

impl TimeGrid {
    fn covering(tau: f64, dt_max: f64) -> Self {
        let steps = ((tau / dt_max).ceil() as usize).max(1);
        Self {
            steps,
            dt: tau / steps as f64,
        }
    }
}

/// Time step used for the given initial condition.
pub fn time_grid(problem: &ProblemSpec, u0_max: f64) -> TimeGrid {
    let n = problem.grid_points as f64;
    match problem.kind {
        ProblemKind::AdvectionDiffusion => {
            let h = 1.0 / n;
            let rho = AD_SPEED / h + 4.0 * AD_DIFFUSIVITY / (h * h);
            let dt = problem.dt.unwrap_or(f64::INFINITY).min(SAFETY * RK4_RADIUS / rho);
            TimeGrid::covering(problem.tau, dt)
        }
        ProblemKind::Kdv => {
            let h = 1.0 / n;
            // The nonlinear amplitude may grow during steepening; budget 2×.
            let rho = KDV_ADVECTION * 2.0 * u0_max.max(1e-12) / h
                + 2.6 * KDV_DISPERSION / (h * h * h);
            let dt = problem.dt.unwrap_or(f64::INFINITY).min(SAFETY * RK4_RADIUS / rho);
            TimeGrid::covering(problem.tau, dt)
        }
        ProblemKind::Burgers => {
            let dt = problem.dt.unwrap_or(1e-5);
            let steps = ((problem.tau / dt).round() as usize).max(1);
            TimeGrid {
                steps,
                dt: problem.tau / steps as f64,
            }
        }
    }
}

/// Solves one PDE instance from its input coefficients and returns the
/// solution at time `tau` on [`ProblemSpec::grid`].
pub fn solve(problem: &ProblemSpec, input_coeffs: &[f64]) -> Result<Vec<f64>> {
    Ok(solve_with_grid(problem, input_coeffs)?.0)
}

fn solve_with_grid(problem: &ProblemSpec, input_coeffs: &[f64]) -> Result<(Vec<f64>, TimeGrid)> {
    problem.validate()?;
    if input_coeffs.len() != problem.input.n_modes {
        return Err(Error::mismatch("solve", problem.input.n_modes, input_coeffs.len()));
    }
    if let Some(index) = input_coeffs.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "input coefficients",
            index,
        });
    }
    match problem.kind {
        ProblemKind::AdvectionDiffusion | ProblemKind::Kdv => {
            let grid = problem.grid();
            let mut u: Vec<f64> = grid
                .iter()
                .map(|&x| problem.input.evaluate(input_coeffs, x))
                .collect();
            let umax = u.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let tg = time_grid(problem, umax);
            let h = 1.0 / problem.grid_points as f64;
            match problem.kind {
                ProblemKind::AdvectionDiffusion => {
                    rk4(&mut u, tg, |v, out| advection_diffusion_rhs(v, h, out))?
                }
                _ => rk4(&mut u, tg, |v, out| kdv_rhs(v, h, out))?,
            }
            Ok((u, tg))
        }
        ProblemKind::Burgers => {
            let solver = BurgersGalerkin::new(problem.spectral_basis);
            let tg = time_grid(problem, 0.0);
            let mut c = solver.project(|x| problem.input.evaluate(input_coeffs, x));
            solver.integrate(&mut c, tg)?;
            Ok((solver.evaluate(&c, &problem.grid()), tg))
        }
    }
}

/// Exact advection-diffusion solution for inputs with `ωᵢ = 2πi`: mode `i`
/// decays by `exp(-0.01 i² τ)` and travels with speed `2/π`.
pub fn analytic_ad(input_coeffs: &[f64], tau: f64, grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&x| {
            input_coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| {
                    let w = 2.0 * PI * (k + 1) as f64;
                    a * (-AD_DIFFUSIVITY * w * w * tau).exp() * (w * (x - AD_SPEED * tau)).sin()
                })
                .sum()
        })
        .collect()
}

fn rk4(u: &mut [f64], tg: TimeGrid, rhs: impl Fn(&[f64], &mut [f64])) -> Result<()> {
    let n = u.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let dt = tg.dt;
    for step in 1..=tg.steps {
        rhs(u, &mut k1);
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = u[i] + dt * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        check_stable(u, step, dt)?;
    }
    Ok(())
}

fn check_stable(u: &[f64], step: usize, dt: f64) -> Result<()> {
    if u.iter().any(|x| !(x.abs() < BLOWUP)) {
        return Err(Error::Instability {
            step,
            time: step as f64 * dt,
        });
    }
    Ok(())
}

/// `-c ∂ₓu + ν ∂ₓ²u` with periodic second-order central differences.
fn advection_diffusion_rhs(u: &[f64], h: f64, out: &mut [f64]) {
    let n = u.len();
    let a = AD_SPEED / (2.0 * h);
    let d = AD_DIFFUSIVITY / (h * h);
    for j in 0..n {
        let up = u[(j + 1) % n];
        let um = u[(j + n - 1) % n];
        out[j] = -a * (up - um) + d * (up - 2.0 * u[j] + um);
    }
}

/// KdV right-hand side. The nonlinear term uses the skew-symmetric split
/// `u ∂ₓu = ⅓(u ∂ₓu + ∂ₓ(u²))`, which keeps both `Σu` and `Σu²` invariant
/// under the semi-discretisation.
fn kdv_rhs(u: &[f64], h: f64, out: &mut [f64]) {
    let n = u.len();
    let inv2h = 1.0 / (2.0 * h);
    let disp = KDV_DISPERSION / (2.0 * h * h * h);
    for j in 0..n {
        let um2 = u[(j + n - 2) % n];
        let um1 = u[(j + n - 1) % n];
        let up1 = u[(j + 1) % n];
        let up2 = u[(j + 2) % n];
        let adv = (u[j] * (up1 - um1) + (up1 * up1 - um1 * um1)) * inv2h / 3.0;
        let third = -um2 + 2.0 * um1 - 2.0 * up1 + up2;
        out[j] = -KDV_ADVECTION * adv - disp * third;
    }
}

/// Sine-Galerkin discretisation of viscous Burgers on `(0, 1)` with
/// homogeneous Dirichlet conditions. The nonlinear term is evaluated
/// pseudospectrally on the `K` interior quadrature points `q/(K+1)`.
struct BurgersGalerkin {
    modes: usize,
    /// `sin(kπ x_q)`, `Q × K`.
    synth: DataMatrix,
    /// `kπ cos(kπ x_q)`, `Q × K`.
    synth_dx: DataMatrix,
    /// Discrete sine transform `2/(Q+1) sin(kπ x_q)`, `K × Q`.
    analysis: DataMatrix,
}

impl BurgersGalerkin {
    fn new(modes: usize) -> Self {
        let q = modes;
        let xq = interior_mesh(q);
        let synth = DataMatrix::from_fn(q, modes, |i, k| ((k + 1) as f64 * PI * xq[i]).sin());
        let synth_dx = DataMatrix::from_fn(q, modes, |i, k| {
            let w = (k + 1) as f64 * PI;
            w * (w * xq[i]).cos()
        });
        let scale = 2.0 / (q + 1) as f64;
        let analysis = DataMatrix::from_fn(modes, q, |k, i| scale * synth[(i, k)]);
        Self {
            modes,
            synth,
            synth_dx,
            analysis,
        }
    }

    fn project(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let xq = interior_mesh(self.modes);
        let samples: Vec<f64> = xq.iter().map(|&x| f(x)).collect();
        (0..self.modes)
            .map(|k| linalg::dot(self.analysis.row(k), &samples))
            .collect()
    }

    fn integrate(&self, c: &mut [f64], tg: TimeGrid) -> Result<()> {
        let k = self.modes;
        let decay: Vec<f64> = (1..=k)
            .map(|i| {
                let w = i as f64 * PI;
                BURGERS_VISCOSITY * w * w
            })
            .collect();
        let mut prod = vec![0.0; k];
        for step in 1..=tg.steps {
            for (q, p) in prod.iter_mut().enumerate() {
                let u = linalg::dot(self.synth.row(q), c);
                let ux = linalg::dot(self.synth_dx.row(q), c);
                *p = u * ux;
            }
            for i in 0..k {
                let nonlinear = linalg::dot(self.analysis.row(i), &prod);
                c[i] += tg.dt * (-nonlinear - decay[i] * c[i]);
            }
            check_stable(c, step, tg.dt)?;
        }
        Ok(())
    }

    fn evaluate(&self, c: &[f64], grid: &[f64]) -> Vec<f64> {
        grid.iter()
            .map(|&x| {
                c.iter()
                    .enumerate()
                    .map(|(k, ck)| ck * ((k + 1) as f64 * PI * x).sin())
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub problem: ProblemSpec,
    pub seed: u64,
    pub role: Role,
    pub m: usize,
    /// Largest step count used over all columns (the AD/KdV step depends on
    /// the amplitude of the input).
    pub max_steps: usize,
    pub min_dt: f64,
    /// SHA-256 over the CSV payload files, hex encoded.
    pub hash: String,
}

/// One split of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Solutions, `n × m`.
    pub a: DataMatrix,
    /// Sampled inputs, `M × m`.
    pub p_hat: DataMatrix,
    /// Input coefficients, `L × m`.
    pub coeffs: DataMatrix,
    pub grid: Vec<f64>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn m(&self) -> usize {
        self.a.cols()
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn numerical_rank(&self) -> Result<usize> {
        linalg::numerical_rank(&self.a, None)
    }

    fn payload(&self) -> [(&'static str, String); 4] {
        [
            ("A.csv", self.a.to_csv_string()),
            ("P.csv", self.p_hat.to_csv_string()),
            ("coeffs.csv", self.coeffs.to_csv_string()),
            (
                "grid.csv",
                DataMatrix::column_vector(self.grid.clone()).to_csv_string(),
            ),
        ]
    }

    fn payload_hash(files: &[(&'static str, String)]) -> String {
        let mut h = Sha256::new();
        for (name, text) in files {
            h.update(name.as_bytes());
            h.update(text.as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = self.payload();
        for (name, text) in &files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        let mut meta = self.meta.clone();
        meta.hash = Self::payload_hash(&files);
        let path = dir.join("meta.json");
        let json = serde_json::to_string_pretty(&meta)?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_path = dir.join("meta.json");
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text)?;
        let grid = DataMatrix::read_csv(dir.join("grid.csv"))?;
        let ds = Dataset {
            a: DataMatrix::read_csv(dir.join("A.csv"))?,
            p_hat: DataMatrix::read_csv(dir.join("P.csv"))?,
            coeffs: DataMatrix::read_csv(dir.join("coeffs.csv"))?,
            grid: grid.into_values(),
            meta,
        };
        let hash = Self::payload_hash(&ds.payload());
        if hash != ds.meta.hash {
            return Err(Error::Parse {
                path: meta_path,
                message: "payload hash does not match meta.json".into(),
            });
        }
        if ds.a.cols() != ds.meta.m || ds.p_hat.cols() != ds.meta.m || ds.coeffs.cols() != ds.meta.m
        {
            return Err(Error::Parse {
                path: dir.to_path_buf(),
                message: "column counts disagree with meta.json".into(),
            });
        }
        Ok(ds)
    }
}

fn generate(problem: &ProblemSpec, coeffs: DataMatrix, seed: u64, role: Role) -> Result<Dataset> {
    let m = coeffs.cols();
    let columns: Vec<(Vec<f64>, TimeGrid)> = (0..m)
        .into_par_iter()
        .map(|j| solve_with_grid(problem, &coeffs.column(j)))
        .collect::<Result<_>>()?;
    let n = problem.grid_points;
    let mut a = DataMatrix::zeros(n, m);
    let mut max_steps = 0;
    let mut min_dt = f64::INFINITY;
    for (j, (u, tg)) in columns.iter().enumerate() {
        a.set_column(j, u)?;
        max_steps = max_steps.max(tg.steps);
        min_dt = min_dt.min(tg.dt);
    }
    let p_hat = encode_inputs(&coeffs, &problem.input, &problem.sample_points())?;
    let mut ds = Dataset {
        a,
        p_hat,
        coeffs,
        grid: problem.grid(),
        meta: DatasetMeta {
            problem: problem.clone(),
            seed,
            role,
            m,
            max_steps,
            min_dt: if m == 0 { 0.0 } else { min_dt },
            hash: String::new(),
        },
    };
    ds.meta.hash = Dataset::payload_hash(&ds.payload());
    Ok(ds)
}

/// Generates training and test splits. Both draw from the same input
/// distribution through disjoint ChaCha streams of the same seed.
pub fn build_dataset(
    problem: &ProblemSpec,
    m_train: usize,
    m_test: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    problem.validate()?;
    let mut train_rng = ChaCha8Rng::seed_from_u64(seed);
    train_rng.set_stream(0);
    let mut test_rng = ChaCha8Rng::seed_from_u64(seed);
    test_rng.set_stream(1);
    let train_coeffs = sample_inputs(&problem.input, m_train, &mut train_rng);
    let test_coeffs = sample_inputs(&problem.input, m_test, &mut test_rng);
    Ok((
        generate(problem, train_coeffs, seed, Role::Train)?,
        generate(problem, test_coeffs, seed, Role::Test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic_and_shaped() {
        let spec = InputSpec::harmonic(5, 2.0 * PI);
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let a = sample_inputs(&spec, 3, &mut r1);
        assert_eq!(a, sample_inputs(&spec, 3, &mut r2));
        assert_eq!(a.shape(), (5, 3));
        assert_eq!(sample_inputs(&spec, 0, &mut r1).shape(), (5, 0));
    }

    #[test]
    fn uniform_moments() {
        let spec = InputSpec::harmonic(5, 2.0 * PI);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = sample_inputs(&spec, 10_000, &mut rng);
        let n = a.values().len() as f64;
        let mean = a.values().iter().sum::<f64>() / n;
        let var = a.values().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn encoding_needs_enough_samples() {
        let spec = InputSpec::harmonic(5, PI);
        let coeffs = DataMatrix::zeros(5, 2);
        assert!(encode_inputs(&coeffs, &spec, &interior_mesh(4)).is_err());
        assert!(decode_inputs(&DataMatrix::zeros(4, 2), &spec, &interior_mesh(4)).is_err());
        let zero = encode_inputs(&coeffs, &spec, &interior_mesh(7)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn encoding_round_trip_small() {
        let spec = InputSpec::harmonic(2, PI);
        let pts = interior_mesh(3);
        let a = DataMatrix::from_rows(&[[0.5], [-0.25]]).unwrap();
        let back = decode_inputs(&encode_inputs(&a, &spec, &pts).unwrap(), &spec, &pts).unwrap();
        assert!(back.max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn zero_input_stays_zero() {
        for p in [
            ProblemSpec::advection_diffusion(0.5).with_grid(50, 50),
            ProblemSpec::kdv(0.2).with_grid(40, 40),
        ] {
            let u = solve(&p, &vec![0.0; p.input.n_modes]).unwrap();
            assert!(u.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut p = ProblemSpec::advection_diffusion(0.5).with_grid(50, 30);
        assert!(p.validate().is_err(), "AD needs M >= 2L");
        p.input_dim = 40;
        assert!(p.validate().is_ok());
        p.tau = 0.0;
        assert!(p.validate().is_err());
        let mut k = ProblemSpec::kdv(0.2);
        k.input.frequencies[1] = k.input.frequencies[0];
        assert!(k.validate().is_err());
        assert!(solve(&ProblemSpec::kdv(0.2), &[1.0]).is_err());
    }

    #[test]
    fn ad_single_mode_matches_analytic() {
        let p = ProblemSpec::advection_diffusion(0.5);
        let mut a = vec![0.0; 20];
        a[0] = 1.0;
        let u = solve(&p, &a).unwrap();
        let exact = analytic_ad(&a, 0.5, &p.grid());
        let err = u.iter().zip(&exact).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err < 1e-3, "max error {err}");
        // Amplitude factor exp(-0.01·τ) for mode 1.
        let peak = exact.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        assert!((peak - (-0.005_f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn analytic_ad_at_time_zero_is_the_input() {
        let spec = InputSpec::harmonic(3, 2.0 * PI);
        let a = [0.3, -0.7, 0.2];
        let grid: Vec<f64> = (0..17).map(|j| j as f64 / 17.0).collect();
        let u = analytic_ad(&a, 0.0, &grid);
        for (x, v) in grid.iter().zip(&u) {
            assert!((spec.evaluate(&a, *x) - v).abs() < 1e-14);
        }
        assert!(analytic_ad(&[0.0; 3], 0.4, &grid).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn burgers_small_amplitude_follows_heat_equation() {
        let mut p = ProblemSpec::burgers(0.1);
        p.spectral_basis = 32;
        p.grid_points = 64;
        p.input_dim = 16;
        let a = [1e-6, 0.0, 0.0, 0.0, 0.0];
        let u = solve(&p, &a).unwrap();
        let decay = (-BURGERS_VISCOSITY * PI * PI * 0.1).exp();
        for (x, v) in p.grid().iter().zip(&u) {
            let want = decay * 1e-6 * (PI * x).sin();
            assert!((v - want).abs() <= 0.01 * 1e-6 * decay);
        }
    }

    #[test]
    fn instability_is_reported() {
        let p = ProblemSpec::kdv(0.2).with_grid(40, 40);
        // A forward Euler step far beyond the diffusive limit blows up.
        let mut b = ProblemSpec::burgers(1.0);
        b.spectral_basis = 64;
        b.grid_points = 32;
        b.input_dim = 16;
        b.dt = Some(0.05);
        let err = solve(&b, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Instability { .. }), "{err}");
        assert!(solve(&p, &[0.1, 0.0, 0.0, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn dataset_directory_round_trip() {
        let p = ProblemSpec::kdv(0.05).with_grid(24, 24);
        let (train, test) = build_dataset(&p, 4, 2, 5).unwrap();
        assert_ne!(train.coeffs.column(0), test.coeffs.column(0));
        let dir = tempfile::tempdir().unwrap();
        train.write_dir(dir.path()).unwrap();
        let back = Dataset::read_dir(dir.path()).unwrap();
        assert_eq!(back, train);
        std::fs::write(dir.path().join("A.csv"), "1,1\n0\n").unwrap();
        assert!(Dataset::read_dir(dir.path()).is_err());
    }

    #[test]
    fn empty_training_split() {
        let p = ProblemSpec::kdv(0.05).with_grid(16, 16);
        let (train, test) = build_dataset(&p, 0, 1, 0).unwrap();
        assert_eq!(train.a.shape(), (16, 0));
        assert_eq!(test.m(), 1);
    }
}

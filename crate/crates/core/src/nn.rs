//! Fully connected GELU networks with a flat parameter vector and manual
//! reverse-mode differentiation.
//!
//! Layout of the flat vector: for each hidden layer `W` (width × fan-in,
//! row-major) followed by `b`, then the bias-free output matrix
//! (output × width, row-major).

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gemm, DataMatrix, MatRef};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `x Φ(x)` with the exact normal CDF.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// `Φ(x) + x φ(x)`.
pub fn gelu_prime(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    cdf + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpShape {
    pub input_dim: usize,
    pub width: usize,
    /// Number of hidden layers.
    pub depth: usize,
    pub output_dim: usize,
}

impl MlpShape {
    pub fn new(input_dim: usize, width: usize, depth: usize, output_dim: usize) -> Result<Self> {
        let shape = Self {
            input_dim,
            width,
            depth,
            output_dim,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.width == 0 || self.depth == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "network dimensions must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        param_count(self.input_dim, self.width, self.depth, self.output_dim)
    }

    fn fan_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.width
        }
    }

    /// Offsets of `(W, b)` for hidden layer `layer`.
    fn hidden_offsets(&self, layer: usize) -> (usize, usize) {
        let w = self.width;
        let mut off = 0;
        for l in 0..layer {
            off += w * self.fan_in(l) + w;
        }
        (off, off + w * self.fan_in(layer))
    }

    fn output_offset(&self) -> usize {
        self.param_count() - self.width * self.output_dim
    }
}

/// `M·w + w + (D−1)(w² + w) + w·out`.
pub fn param_count(input_dim: usize, width: usize, depth: usize, output_dim: usize) -> usize {
    input_dim * width + width + depth.saturating_sub(1) * (width * width + width) + width * output_dim
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub shape: MlpShape,
    pub values: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(shape: MlpShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.param_count()],
        }
    }

    pub fn from_values(shape: MlpShape, values: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if values.len() != shape.param_count() {
            return Err(Error::mismatch("MlpParams", shape.param_count(), values.len()));
        }
        Ok(Self { shape, values })
    }

    /// Glorot-uniform weights `U(±√(6/(fan_in+fan_out)))`, zero biases.
    pub fn glorot<R: Rng + ?Sized>(shape: MlpShape, rng: &mut R) -> Result<Self> {
        shape.validate()?;
        let mut p = Self::zeros(shape);
        let w = shape.width;
        for layer in 0..shape.depth {
            let fan_in = shape.fan_in(layer);
            let (wo, _) = shape.hidden_offsets(layer);
            fill_uniform(&mut p.values[wo..wo + w * fan_in], fan_in, w, rng);
        }
        let oo = shape.output_offset();
        fill_uniform(&mut p.values[oo..], w, shape.output_dim, rng);
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// FNV-1a over the bit patterns of the parameters.
    pub fn fingerprint(&self) -> u64 {
        fingerprint(&self.values)
    }

    /// Writes `<stem>.json` (shape and count) and `<stem>.csv` (one value
    /// per line, shortest round-trip formatting).
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header = CheckpointHeader {
            shape: self.shape,
            param_count: self.values.len(),
        };
        let json_path = dir.join(format!("{stem}.json"));
        std::fs::write(&json_path, serde_json::to_string_pretty(&header)?)
            .map_err(|e| Error::io(&json_path, e))?;
        let mut text = String::with_capacity(self.values.len() * 24);
        for v in &self.values {
            text.push_str(&format!("{v:?}\n"));
        }
        let csv_path = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv_path, text).map_err(|e| Error::io(&csv_path, e))
    }

    pub fn load(dir: impl AsRef<Path>, stem: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let json_path = dir.join(format!("{stem}.json"));
        let text = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let header: CheckpointHeader = serde_json::from_str(&text)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let body = std::fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let values = body
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                l.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: csv_path.clone(),
                    message: format!("line {}: {e}", i + 1),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != header.param_count || header.param_count != header.shape.param_count() {
            return Err(Error::Parse {
                path: csv_path,
                message: format!(
                    "expected {} parameters, found {}",
                    header.shape.param_count(),
                    values.len()
                ),
            });
        }
        Self::from_values(header.shape, values)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    shape: MlpShape,
    param_count: usize,
}

pub(crate) fn fingerprint(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn fill_uniform<R: Rng + ?Sized>(out: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut R) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in out {
        *v = rng.random_range(-limit..=limit);
    }
}

/// Activations retained by [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: u64,
    batch: usize,
    input: Vec<f64>,
    /// Pre-activations per hidden layer, each width × batch.
    pre: Vec<Vec<f64>>,
    /// Post-activations per hidden layer.
    post: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Evaluates the network on the columns of `x` (input_dim × batch) and
/// returns the output_dim × batch result.
pub fn forward(params: &MlpParams, x: &DataMatrix) -> Result<(DataMatrix, ForwardCache)> {
    let s = params.shape;
    if x.rows() != s.input_dim {
        return Err(Error::mismatch("mlp forward", s.input_dim, x.rows()));
    }
    let batch = x.cols();
    let w = s.width;
    let mut pre = Vec::with_capacity(s.depth);
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(s.depth);
    for layer in 0..s.depth {
        let fan_in = s.fan_in(layer);
        let (wo, bo) = s.hidden_offsets(layer);
        let bias = &params.values[bo..bo + w];
        let mut z = vec![0.0; w * batch];
        for (r, row) in z.chunks_mut(batch.max(1)).enumerate().take(w) {
            row.fill(bias[r]);
        }
        let input: &[f64] = if layer == 0 { x.values() } else { &post[layer - 1] };
        gemm(
            w,
            fan_in,
            batch,
            1.0,
            MatRef::row_major(&params.values[wo..wo + w * fan_in], fan_in),
            MatRef::row_major(input, batch),
            1.0,
            &mut z,
            batch,
        );
        let h: Vec<f64> = z.iter().map(|&v| gelu(v)).collect();
        pre.push(z);
        post.push(h);
    }
    let oo = s.output_offset();
    let mut out = vec![0.0; s.output_dim * batch];
    gemm(
        s.output_dim,
        w,
        batch,
        1.0,
        MatRef::row_major(&params.values[oo..], w),
        MatRef::row_major(&post[s.depth - 1], batch),
        0.0,
        &mut out,
        batch,
    );
    let cache = ForwardCache {
        fingerprint: params.fingerprint(),
        batch,
        input: x.values().to_vec(),
        pre,
        post,
    };
    Ok((DataMatrix::new(s.output_dim, batch, out)?, cache))
}

/// Gradient of `Σ d_out ⊙ f(x)` with respect to the flat parameters.
pub fn backward(params: &MlpParams, cache: &ForwardCache, d_out: &DataMatrix) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; params.len()];
    backward_into(params, cache, d_out, &mut grad)?;
    Ok(grad)
}

/// As [`backward`], writing into a caller-provided buffer (overwritten).
pub fn backward_into(
    params: &MlpParams,
    cache: &ForwardCache,
    d_out: &DataMatrix,
    grad: &mut [f64],
) -> Result<()> {
    if cache.fingerprint != params.fingerprint() {
        return Err(Error::StaleCache);
    }
    let s = params.shape;
    let batch = cache.batch;
    if d_out.shape() != (s.output_dim, batch) {
        return Err(Error::mismatch(
            "mlp backward",
            format!("{}x{}", s.output_dim, batch),
            format!("{}x{}", d_out.rows(), d_out.cols()),
        ));
    }
    if grad.len() != params.len() {
        return Err(Error::mismatch("mlp backward", params.len(), grad.len()));
    }
    let w = s.width;
    let oo = s.output_offset();
    // dW_out = d_out · h_Dᵀ
    gemm(
        s.output_dim,
        batch,
        w,
        1.0,
        MatRef::row_major(d_out.values(), batch),
        MatRef::transposed(&cache.post[s.depth - 1], batch),
        0.0,
        &mut grad[oo..],
        w,
    );
    // g = W_outᵀ · d_out
    let mut g = vec![0.0; w * batch];
    gemm(
        w,
        s.output_dim,
        batch,
        1.0,
        MatRef::transposed(&params.values[oo..], w),
        MatRef::row_major(d_out.values(), batch),
        0.0,
        &mut g,
        batch,
    );
    for layer in (0..s.depth).rev() {
        for (gv, &z) in g.iter_mut().zip(&cache.pre[layer]) {
            *gv *= gelu_prime(z);
        }
        let fan_in = s.fan_in(layer);
        let (wo, bo) = s.hidden_offsets(layer);
        let input: &[f64] = if layer == 0 {
            &cache.input
        } else {
            &cache.post[layer - 1]
        };
        gemm(
            w,
            batch,
            fan_in,
            1.0,
            MatRef::row_major(&g, batch),
            MatRef::transposed(input, batch),
            0.0,
            &mut grad[wo..wo + w * fan_in],
            fan_in,
        );
        for r in 0..w {
            grad[bo + r] = g[r * batch..(r + 1) * batch].iter().sum();
        }
        if layer > 0 {
            let mut next = vec![0.0; w * batch];
            gemm(
                w,
                w,
                batch,
                1.0,
                MatRef::transposed(&params.values[wo..wo + w * w], w),
                MatRef::row_major(&g, batch),
                0.0,
                &mut next,
                batch,
            );
            g = next;
        }
    }
    Ok(())
}

//! Embedding networks and their neural kernels.
//!
//! [`OneHiddenNet`] is the one-hidden-layer map `f(B, x) = A^T sigma(B x)`
//! where the head `A` is the fixed block-averaging operator (never stored
//! densely, never trained). Its kernel has an exact closed form with diagonal
//! d x d blocks; [`kernel_infinite`] is the Gaussian-width limit with the
//! arccos factor. [`GenericMlp`] covers deeper architectures via reverse-mode
//! per-parameter gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};
use crate::exec::{map_indexed, Execution};
use crate::vecmath::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
    /// Softplus, a smooth relu surrogate.
    SmoothRelu,
    Identity,
}

impl Activation {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Activation::Relu => t.max(0.0),
            Activation::Tanh => t.tanh(),
            Activation::SmoothRelu => {
                // ln(1 + e^t), overflow-safe.
                if t > 30.0 {
                    t
                } else {
                    t.exp().ln_1p()
                }
            }
            Activation::Identity => t,
        }
    }

    /// Derivative; the relu subgradient at 0 is fixed to 0 for determinism.
    pub fn deriv(self, t: f64) -> f64 {
        match self {
            Activation::Relu => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let s = t.tanh();
                1.0 - s * s
            }
            Activation::SmoothRelu => 1.0 / (1.0 + (-t).exp()),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub input_dim: usize,
    pub latent_dim: usize,
    /// Width per output component (M).
    pub width: usize,
    pub activation: Activation,
    /// Standard deviation of the Gaussian weights; defaults to 1/sqrt(D).
    pub weight_std: Option<f64>,
    /// Uniform bound C on every weight entry; draws beyond it are resampled.
    pub weight_bound: f64,
}

/// One-hidden-layer network with the fixed averaging head.
#[derive(Debug, Clone)]
pub struct OneHiddenNet {
    /// Weight matrix, (M*d) x D, row-major.
    pub b: Vec<f64>,
    pub width: usize,
    pub latent_dim: usize,
    pub input_dim: usize,
    pub activation: Activation,
    pub weight_bound: f64,
}

impl OneHiddenNet {
    pub fn rows(&self) -> usize {
        self.width * self.latent_dim
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.b[p * self.input_dim..(p + 1) * self.input_dim]
    }

    /// `f^k(x) = (1/sqrt(M)) sum_{p in block k} sigma(b_p . x)`
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(LabError::DimMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let scale = 1.0 / (self.width as f64).sqrt();
        Ok((0..self.latent_dim)
            .map(|k| {
                let mut acc = 0.0;
                for p in k * self.width..(k + 1) * self.width {
                    acc += self.activation.eval(dot(self.row(p), x));
                }
                scale * acc
            })
            .collect())
    }

    /// Exact gradient of `f^k` with respect to every weight entry, as a full
    /// (M*d) x D matrix. Rows outside the k-th block are zero.
    pub fn weight_gradient(&self, x: &[f64], k: usize) -> Vec<Vec<f64>> {
        let scale = 1.0 / (self.width as f64).sqrt();
        let mut grad = vec![vec![0.0; self.input_dim]; self.rows()];
        for (p, row) in grad
            .iter_mut()
            .enumerate()
            .take((k + 1) * self.width)
            .skip(k * self.width)
        {
            let s = scale * self.activation.deriv(dot(self.row(p), x));
            for (c, v) in row.iter_mut().enumerate() {
                *v = s * x[c];
            }
        }
        grad
    }

    /// Analytic kernel matrix on a point set:
    /// `K^{kl}_{ij} = 1_{k=l} (x_i . x_j) / M * sum_{p in block k} sigma'(b_p x_i) sigma'(b_p x_j)`.
    pub fn kernel(&self, points: &[Vec<f64>]) -> KernelMatrix {
        self.kernel_with(points, Execution::default())
    }

    pub fn kernel_with(&self, points: &[Vec<f64>], exec: Execution) -> KernelMatrix {
        let n = points.len();
        let d = self.latent_dim;
        // sigma'(b_p . x_i) for all rows and points.
        let slopes: Vec<Vec<f64>> = map_indexed(exec, n, |i| {
            (0..self.rows())
                .map(|p| self.activation.deriv(dot(self.row(p), &points[i])))
                .collect()
        });
        let blocks = map_indexed(exec, n * n, |idx| {
            let (i, j) = (idx / n, idx % n);
            let xij = dot(&points[i], &points[j]);
            let mut block = vec![0.0; d * d];
            for k in 0..d {
                let mut acc = 0.0;
                for (si, sj) in slopes[i]
                    .iter()
                    .zip(&slopes[j])
                    .take((k + 1) * self.width)
                    .skip(k * self.width)
                {
                    acc += si * sj;
                }
                block[k * d + k] = xij * acc / self.width as f64;
            }
            block
        });
        KernelMatrix {
            n,
            d,
            blocks,
            structure: BlockStructure::DiagonalBlocks,
        }
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.b.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Gaussian initialization with per-entry resampling beyond the bound C.
pub fn init_gaussian(spec: &NetSpec, seed: u64) -> OneHiddenNet {
    let std = spec
        .weight_std
        .unwrap_or(1.0 / (spec.input_dim as f64).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = spec.width * spec.latent_dim;
    let mut b = Vec::with_capacity(rows * spec.input_dim);
    for _ in 0..rows * spec.input_dim {
        loop {
            let v: f64 = standard_normal(&mut rng) * std;
            if v.abs() < spec.weight_bound {
                b.push(v);
                break;
            }
        }
    }
    OneHiddenNet {
        b,
        width: spec.width,
        latent_dim: spec.latent_dim,
        input_dim: spec.input_dim,
        activation: spec.activation,
        weight_bound: spec.weight_bound,
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockStructure {
    DiagonalBlocks,
    Dense,
}

/// n x n grid of d x d kernel blocks.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub n: usize,
    pub d: usize,
    /// blocks[i * n + j] is the d x d block (i, j), row-major.
    pub blocks: Vec<Vec<f64>>,
    pub structure: BlockStructure,
}

impl KernelMatrix {
    pub fn entry(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.blocks[i * self.n + j][k * self.d + l]
    }

    /// `K = s * I` in every diagonal block (off-diagonal blocks zero).
    pub fn scaled_identity(n: usize, d: usize, s: f64) -> Self {
        let blocks = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                let mut block = vec![0.0; d * d];
                if i == j {
                    for k in 0..d {
                        block[k * d + k] = s;
                    }
                }
                block
            })
            .collect();
        Self {
            n,
            d,
            blocks,
            structure: BlockStructure::DiagonalBlocks,
        }
    }

    /// `sum_j K_ij v_j` for a slice of n vectors in R^d.
    pub fn apply_row(&self, i: usize, vectors: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for (j, v) in vectors.iter().enumerate() {
            let block = &self.blocks[i * self.n + j];
            for k in 0..self.d {
                for l in 0..self.d {
                    out[k] += block[k * self.d + l] * v[l];
                }
            }
        }
        out
    }

    pub fn max_symmetry_defect(&self) -> f64 {
        let mut max = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                for k in 0..self.d {
                    for l in 0..self.d {
                        max = max.max((self.entry(i, j, k, l) - self.entry(j, i, l, k)).abs());
                    }
                }
            }
        }
        max
    }

    pub fn max_offdiagonal_block_entry(&self) -> f64 {
        let mut max = 0.0f64;
        for block in &self.blocks {
            for k in 0..self.d {
                for l in 0..self.d {
                    if k != l {
                        max = max.max(block[k * self.d + l].abs());
                    }
                }
            }
        }
        max
    }

    /// Row-major (n*d) x (n*d) flattening.
    pub fn to_dense(&self) -> Vec<f64> {
        let nd = self.n * self.d;
        let mut dense = vec![0.0; nd * nd];
        for i in 0..self.n {
            for j in 0..self.n {
                for k in 0..self.d {
                    for l in 0..self.d {
                        dense[(i * self.d + k) * nd + (j * self.d + l)] = self.entry(i, j, k, l);
                    }
                }
            }
        }
        dense
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let nd = self.n * self.d;
        let dense = self.to_dense();
        let mut out = String::new();
        for r in 0..nd {
            for c in 0..nd {
                if c > 0 {
                    out.push(',');
                }
                write!(out, "{:.17e}", dense[r * nd + c]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Infinite-width relu kernel:
/// `K_ij = (x_i . x_j) [1/2 - arccos(cos_ij) / (2 pi)] I`, cosine clamped.
pub fn kernel_infinite(points: &[Vec<f64>]) -> Result<KernelMatrix> {
    let n = points.len();
    let d_out = points.first().map_or(0, |p| p.len());
    for (i, p) in points.iter().enumerate() {
        if norm(p) == 0.0 {
            return Err(LabError::ZeroNormEmbedding { index: i });
        }
    }
    kernel_infinite_dim(points, d_out, n)
}

/// Same as [`kernel_infinite`] with an explicit latent dimension for the
/// identity blocks.
pub fn kernel_infinite_with_dim(points: &[Vec<f64>], latent_dim: usize) -> Result<KernelMatrix> {
    for (i, p) in points.iter().enumerate() {
        if norm(p) == 0.0 {
            return Err(LabError::ZeroNormEmbedding { index: i });
        }
    }
    kernel_infinite_dim(points, latent_dim, points.len())
}

fn kernel_infinite_dim(points: &[Vec<f64>], d: usize, n: usize) -> Result<KernelMatrix> {
    let blocks = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let xij = dot(&points[i], &points[j]);
            let cos = (xij / (norm(&points[i]) * norm(&points[j]))).clamp(-1.0, 1.0);
            let factor = xij * (0.5 - cos.acos() / (2.0 * std::f64::consts::PI));
            let mut block = vec![0.0; d * d];
            for k in 0..d {
                block[k * d + k] = factor;
            }
            block
        })
        .collect();
    Ok(KernelMatrix {
        n,
        d,
        blocks,
        structure: BlockStructure::DiagonalBlocks,
    })
}

/// Fully connected network with an optional fixed (untrained) linear head.
///
/// With a fixed head the activation is applied after every trainable layer
/// and the head maps the last hidden vector to the output; this reproduces
/// [`OneHiddenNet`] when there is a single trainable layer and the head is
/// the block-averaging matrix. Without a head the last layer is linear.
#[derive(Debug, Clone)]
pub struct GenericMlp {
    /// Layer sizes including input and output of the trainable stack.
    pub widths: Vec<usize>,
    /// Row-major weight matrices, one per consecutive width pair.
    pub weights: Vec<Vec<f64>>,
    pub activation: Activation,
    /// Fixed head: (out_dim, in_dim, row-major entries).
    pub fixed_head: Option<(usize, usize, Vec<f64>)>,
}

impl GenericMlp {
    pub fn random(widths: &[usize], activation: Activation, std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = widths
            .windows(2)
            .map(|w| {
                (0..w[0] * w[1])
                    .map(|_| standard_normal(&mut rng) * std)
                    .collect()
            })
            .collect();
        Self {
            widths: widths.to_vec(),
            weights,
            activation,
            fixed_head: None,
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.fixed_head {
            Some((out, _, _)) => *out,
            None => *self.widths.last().unwrap(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    fn layer_out_dim(&self, l: usize) -> usize {
        self.widths[l + 1]
    }

    /// Forward pass returning all pre-activations (needed for backprop).
    fn forward_trace(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
        let n_layers = self.weights.len();
        let mut pres = Vec::with_capacity(n_layers);
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        for l in 0..n_layers {
            let input = acts.last().unwrap();
            let out_dim = self.layer_out_dim(l);
            let in_dim = self.widths[l];
            let w = &self.weights[l];
            let pre: Vec<f64> = (0..out_dim)
                .map(|r| dot(&w[r * in_dim..(r + 1) * in_dim], input))
                .collect();
            let is_last = l == n_layers - 1;
            let activated = if !is_last || self.fixed_head.is_some() {
                pre.iter().map(|&t| self.activation.eval(t)).collect()
            } else {
                pre.clone()
            };
            pres.push(pre);
            acts.push(activated);
        }
        let out = match &self.fixed_head {
            Some((out_dim, in_dim, head)) => {
                let last = acts.last().unwrap();
                (0..*out_dim)
                    .map(|r| dot(&head[r * in_dim..(r + 1) * in_dim], last))
                    .collect()
            }
            None => acts.last().unwrap().clone(),
        };
        (pres, acts, out)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(LabError::DimMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.forward_trace(x).2)
    }

    /// Accumulates `sum_k upstream[k] * grad_w f^k(x)` into the flat gradient
    /// buffer (layer-major, row-major within a layer) via reverse mode.
    pub fn accumulate_gradient(&self, x: &[f64], upstream: &[f64], grad: &mut [f64]) {
        let (pres, acts, _) = self.forward_trace(x);
        let n_layers = self.weights.len();

        // Seed the backward pass at the output of the trainable stack.
        let mut delta: Vec<f64> = match &self.fixed_head {
            Some((out_dim, in_dim, head)) => {
                let mut d = vec![0.0; *in_dim];
                for r in 0..*out_dim {
                    for c in 0..*in_dim {
                        d[c] += upstream[r] * head[r * in_dim + c];
                    }
                }
                // Through the activation after the last trainable layer.
                for (c, v) in d.iter_mut().enumerate() {
                    *v *= self.activation.deriv(pres[n_layers - 1][c]);
                }
                d
            }
            None => upstream.to_vec(),
        };

        let mut offset = self.param_count();
        for l in (0..n_layers).rev() {
            let in_dim = self.widths[l];
            let out_dim = self.layer_out_dim(l);
            offset -= in_dim * out_dim;
            let input = &acts[l];
            for r in 0..out_dim {
                for c in 0..in_dim {
                    grad[offset + r * in_dim + c] += delta[r] * input[c];
                }
            }
            if l > 0 {
                let w = &self.weights[l];
                let mut prev = vec![0.0; in_dim];
                for r in 0..out_dim {
                    for c in 0..in_dim {
                        prev[c] += delta[r] * w[r * in_dim + c];
                    }
                }
                for (c, v) in prev.iter_mut().enumerate() {
                    *v *= self.activation.deriv(pres[l - 1][c]);
                }
                delta = prev;
            }
        }
    }

    /// Flat gradient of output component `k` with respect to every parameter.
    pub fn param_gradient(&self, x: &[f64], k: usize) -> Vec<f64> {
        let mut upstream = vec![0.0; self.output_dim()];
        upstream[k] = 1.0;
        let mut grad = vec![0.0; self.param_count()];
        self.accumulate_gradient(x, &upstream, &mut grad);
        grad
    }

    /// Dense kernel from full per-parameter gradients.
    pub fn kernel(&self, points: &[Vec<f64>]) -> KernelMatrix {
        self.kernel_with(points, Execution::default())
    }

    pub fn kernel_with(&self, points: &[Vec<f64>], exec: Execution) -> KernelMatrix {
        let n = points.len();
        let d = self.output_dim();
        let grads: Vec<Vec<Vec<f64>>> = map_indexed(exec, n, |i| {
            (0..d).map(|k| self.param_gradient(&points[i], k)).collect()
        });
        let blocks = map_indexed(exec, n * n, |idx| {
            let (i, j) = (idx / n, idx % n);
            let mut block = vec![0.0; d * d];
            for k in 0..d {
                for l in 0..d {
                    block[k * d + l] = dot(&grads[i][k], &grads[j][l]);
                }
            }
            block
        });
        KernelMatrix {
            n,
            d,
            blocks,
            structure: BlockStructure::Dense,
        }
    }

    /// Wraps a [`OneHiddenNet`] as a depth-1 generic MLP with the averaging
    /// head materialized densely (test oracle for the analytic paths).
    pub fn from_one_hidden(net: &OneHiddenNet) -> Self {
        let rows = net.rows();
        let d = net.latent_dim;
        let scale = 1.0 / (net.width as f64).sqrt();
        let mut head = vec![0.0; d * rows];
        for k in 0..d {
            for p in k * net.width..(k + 1) * net.width {
                head[k * rows + p] = scale;
            }
        }
        Self {
            widths: vec![net.input_dim, rows],
            weights: vec![net.b.clone()],
            activation: net.activation,
            fixed_head: Some((d, rows, head)),
        }
    }
}

/// Builds a network whose first-layer columns for coordinates `latent_dim..D`
/// are zero, so `f(w0, .)` is exactly invariant to orthogonal-subspace
/// perturbations at initialization.
pub fn init_invariant(
    widths: &[usize],
    latent_dim: usize,
    activation: Activation,
    std: f64,
    seed: u64,
) -> Result<GenericMlp> {
    if widths.len() < 2 {
        return Err(LabError::Config("need at least one layer".into()));
    }
    if widths[0] < latent_dim {
        return Err(LabError::Config(
            "first layer narrower than the manifold dimension".into(),
        ));
    }
    let mut net = GenericMlp::random(widths, activation, std, seed);
    let in_dim = widths[0];
    let out_dim = widths[1];
    for r in 0..out_dim {
        for c in latent_dim..in_dim {
            net.weights[0][r * in_dim + c] = 0.0;
        }
    }
    Ok(net)
}

/// The constructive layout realizing `R = identity` on the first `latent_dim`
/// coordinates: a single identity-activation layer selecting them.
pub fn init_invariant_identity(input_dim: usize, latent_dim: usize) -> GenericMlp {
    let mut w = vec![0.0; latent_dim * input_dim];
    for k in 0..latent_dim {
        w[k * input_dim + k] = 1.0;
    }
    GenericMlp {
        widths: vec![input_dim, latent_dim],
        weights: vec![w],
        activation: Activation::Identity,
        fixed_head: None,
    }
}

/// Serialized network layout (JSON).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub arch: String,
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub seed: Option<u64>,
    pub weights: Vec<f64>,
    pub layout_version: u32,
}

impl NetworkFile {
    pub fn from_one_hidden(net: &OneHiddenNet, seed: Option<u64>) -> Self {
        Self {
            arch: "one-hidden".into(),
            widths: vec![net.input_dim, net.width, net.latent_dim],
            activation: net.activation,
            seed,
            weights: net.b.clone(),
            layout_version: 1,
        }
    }

    pub fn to_one_hidden(&self, weight_bound: f64) -> Result<OneHiddenNet> {
        if self.arch != "one-hidden" || self.widths.len() != 3 {
            return Err(LabError::Config(format!(
                "not a one-hidden file: {}",
                self.arch
            )));
        }
        let (input_dim, width, latent_dim) = (self.widths[0], self.widths[1], self.widths[2]);
        if self.weights.len() != width * latent_dim * input_dim {
            return Err(LabError::Config("weight count mismatch".into()));
        }
        Ok(OneHiddenNet {
            b: self.weights.clone(),
            width,
            latent_dim,
            input_dim,
            activation: self.activation,
            weight_bound,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_spec(activation: Activation) -> NetSpec {
        NetSpec {
            input_dim: 3,
            latent_dim: 2,
            width: 4,
            activation,
            weight_std: None,
            weight_bound: 10.0,
        }
    }

    #[test]
    fn zero_weights_give_zero_relu_output() {
        let net = OneHiddenNet {
            b: vec![0.0; 8 * 3],
            width: 4,
            latent_dim: 2,
            input_dim: 3,
            activation: Activation::Relu,
            weight_bound: 1.0,
        };
        assert_eq!(net.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_relu_example() {
        let net = OneHiddenNet {
            b: vec![2.0],
            width: 1,
            latent_dim: 1,
            input_dim: 1,
            activation: Activation::Relu,
            weight_bound: 10.0,
        };
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn forward_matches_dense_head_oracle() {
        let net = init_gaussian(&small_spec(Activation::Tanh), 11);
        let dense = GenericMlp::from_one_hidden(&net);
        let x = vec![0.3, -0.7, 1.1];
        let a = net.forward(&x).unwrap();
        let b = dense.forward(&x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert_relative_eq!(u, v, epsilon = 1e-14);
        }
    }

    #[test]
    fn weight_gradient_zero_input() {
        let net = init_gaussian(&small_spec(Activation::Tanh), 1);
        let g = net.weight_gradient(&[0.0, 0.0, 0.0], 0);
        assert!(g.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn weight_gradient_row_support() {
        let net = init_gaussian(&small_spec(Activation::Relu), 2);
        let g = net.weight_gradient(&[0.5, -0.2, 0.9], 1);
        for (p, row) in g.iter().enumerate().take(4) {
            assert!(row.iter().all(|&v| v == 0.0), "row {p} outside block 1");
        }
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let net = init_gaussian(&small_spec(Activation::SmoothRelu), 3);
        let x = vec![0.4, -0.9, 0.6];
        for k in 0..2 {
            let g = net.weight_gradient(&x, k);
            let h = 1e-6;
            for (p, row) in g.iter().enumerate() {
                for (c, &gv) in row.iter().enumerate() {
                    let mut plus = net.clone();
                    plus.b[p * 3 + c] += h;
                    let mut minus = net.clone();
                    minus.b[p * 3 + c] -= h;
                    let fd =
                        (plus.forward(&x).unwrap()[k] - minus.forward(&x).unwrap()[k]) / (2.0 * h);
                    let scale = gv.abs().max(1e-4);
                    assert!((fd - gv).abs() / scale < 1e-6, "p={p} c={c}: {fd} vs {gv}");
                }
            }
        }
    }

    #[test]
    fn kernel_zero_for_orthogonal_inputs() {
        let net = init_gaussian(&small_spec(Activation::Relu), 4);
        let pts = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let k = net.kernel(&pts);
        for kk in 0..2 {
            assert_eq!(k.entry(0, 1, kk, kk), 0.0);
        }
    }

    #[test]
    fn identity_activation_collapses_to_inner_product() {
        let net = init_gaussian(&small_spec(Activation::Identity), 5);
        let pts = vec![vec![0.3, 0.4, -0.2], vec![1.0, -0.5, 0.8]];
        let k = net.kernel(&pts);
        let xij = dot(&pts[0], &pts[1]);
        for kk in 0..2 {
            assert_relative_eq!(k.entry(0, 1, kk, kk), xij, epsilon = 1e-14);
        }
    }

    #[test]
    fn kernel_equals_gram_of_weight_gradients() {
        let net = init_gaussian(
            &NetSpec {
                input_dim: 3,
                latent_dim: 2,
                width: 6,
                activation: Activation::Relu,
                weight_std: None,
                weight_bound: 10.0,
            },
            6,
        );
        let pts: Vec<Vec<f64>> = vec![
            vec![0.3, 0.4, -0.2],
            vec![1.0, -0.5, 0.8],
            vec![-0.6, 0.1, 0.9],
            vec![0.2, 0.2, 0.2],
        ];
        let k = net.kernel(&pts);
        for i in 0..4 {
            for j in 0..4 {
                for a in 0..2 {
                    for b in 0..2 {
                        let gi = net.weight_gradient(&pts[i], a);
                        let gj = net.weight_gradient(&pts[j], b);
                        let gram: f64 = gi
                            .iter()
                            .flatten()
                            .zip(gj.iter().flatten())
                            .map(|(u, v)| u * v)
                            .sum();
                        assert!(
                            (k.entry(i, j, a, b) - gram).abs() <= 1e-12,
                            "block ({i},{j}) entry ({a},{b})"
                        );
                    }
                }
            }
        }
        assert_eq!(k.max_offdiagonal_block_entry(), 0.0);
        assert!(k.max_symmetry_defect() <= 1e-15);
    }

    #[test]
    fn infinite_kernel_trivial_angles() {
        let e1 = vec![1.0, 0.0];
        // Coincident unit vectors: 1 * (1/2 - 0) = 1/2.
        let k = kernel_infinite(&[e1.clone(), e1.clone()]).unwrap();
        assert_relative_eq!(k.entry(0, 1, 0, 0), 0.5, epsilon = 1e-15);
        // Orthogonal: inner product factor kills it.
        let k = kernel_infinite(&[e1.clone(), vec![0.0, 1.0]]).unwrap();
        assert_eq!(k.entry(0, 1, 0, 0), 0.0);
        // Antipodal: (-1) * (1/2 - 1/2) = 0.
        let k = kernel_infinite(&[e1.clone(), vec![-1.0, 0.0]]).unwrap();
        assert_relative_eq!(k.entry(0, 1, 0, 0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn infinite_kernel_rejects_zero_vectors() {
        assert!(kernel_infinite(&[vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn generic_depth_one_reproduces_one_hidden_kernel() {
        let net = init_gaussian(&small_spec(Activation::Tanh), 7);
        let generic = GenericMlp::from_one_hidden(&net);
        let pts = vec![
            vec![0.3, 0.4, -0.2],
            vec![1.0, -0.5, 0.8],
            vec![0.1, 0.9, 0.2],
        ];
        let ka = net.kernel(&pts);
        let kb = generic.kernel(&pts);
        for i in 0..3 {
            for j in 0..3 {
                for a in 0..2 {
                    for b in 0..2 {
                        assert!(
                            (ka.entry(i, j, a, b) - kb.entry(i, j, a, b)).abs() <= 1e-12,
                            "({i},{j},{a},{b})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn generic_gradient_matches_finite_differences_four_layers() {
        let net = GenericMlp::random(&[3, 5, 4, 4, 2], Activation::Tanh, 0.6, 9);
        let pts = vec![
            vec![0.2, -0.4, 0.9],
            vec![-0.8, 0.3, 0.1],
            vec![0.5, 0.5, -0.5],
        ];
        for x in &pts {
            for k in 0..2 {
                let g = net.param_gradient(x, k);
                let h = 1e-5;
                // Spot-check a spread of parameters in every layer.
                let mut offset = 0;
                for (l, w) in net.weights.iter().enumerate() {
                    for idx in [0, w.len() / 2, w.len() - 1] {
                        let mut plus = net.clone();
                        plus.weights[l][idx] += h;
                        let mut minus = net.clone();
                        minus.weights[l][idx] -= h;
                        let fd = (plus.forward(x).unwrap()[k] - minus.forward(x).unwrap()[k])
                            / (2.0 * h);
                        let analytic = g[offset + idx];
                        let scale = analytic.abs().max(1e-3);
                        assert!(
                            (fd - analytic).abs() / scale < 1e-5,
                            "layer {l} idx {idx}: {fd} vs {analytic}"
                        );
                    }
                    offset += w.len();
                }
            }
        }
    }

    #[test]
    fn init_gaussian_is_deterministic_and_bounded() {
        let spec = NetSpec {
            weight_bound: 0.5,
            ..small_spec(Activation::Relu)
        };
        let a = init_gaussian(&spec, 42);
        let b = init_gaussian(&spec, 42);
        assert_eq!(a.b, b.b);
        assert!(a.max_abs_weight() < 0.5);
    }

    #[test]
    fn init_gaussian_mean_is_near_zero() {
        let spec = NetSpec {
            input_dim: 10,
            latent_dim: 4,
            width: 300,
            activation: Activation::Relu,
            weight_std: Some(1.0),
            weight_bound: 20.0,
        };
        let net = init_gaussian(&spec, 1);
        let count = net.b.len() as f64;
        let mean = net.b.iter().sum::<f64>() / count;
        assert!(mean.abs() < 5.0 / count.sqrt(), "mean {mean}");
    }

    #[test]
    fn invariant_init_ignores_orthogonal_coordinates() {
        let net = init_invariant(&[4, 6, 2], 2, Activation::Tanh, 0.8, 13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut y = x.clone();
            y[2] = rng.gen_range(-5.0..5.0);
            y[3] = rng.gen_range(-5.0..5.0);
            assert_eq!(net.forward(&x).unwrap(), net.forward(&y).unwrap());
        }
    }

    #[test]
    fn invariant_identity_layout_projects() {
        let net = init_invariant_identity(5, 2);
        assert_eq!(
            net.forward(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn network_file_round_trip() {
        let net = init_gaussian(&small_spec(Activation::Relu), 8);
        let json = serde_json::to_string(&NetworkFile::from_one_hidden(&net, Some(8))).unwrap();
        let file: NetworkFile = serde_json::from_str(&json).unwrap();
        let back = file.to_one_hidden(net.weight_bound).unwrap();
        assert_eq!(back.b, net.b);
    }
}

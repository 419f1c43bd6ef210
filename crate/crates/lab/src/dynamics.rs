//! Training dynamics on the latent configuration: vanilla descent, kernel-
//! mediated descent, true weight-space descent, and the clustered
//! approximation, with trajectory recording and invariance monitoring.
//!
//! The discrete iterations are explicit Euler steps of
//!
//! ```text
//! vanilla:   z_i <- z_i - step * g(z_i)
//! kernel:    z_i <- z_i - (step / n) * sum_j K_ij g(z_j)
//! ```
//!
//! where `g` is the functional gradient from [`crate::variations`]. With
//! `K = n I` the two coincide.

use std::fmt::Write as _;

use crate::dataset::{ClusteredDataset, PerturbationSet};
use crate::error::{LabError, Result};
use crate::losses::{generalized_loss, LatentConfiguration, SimilarityConfig};
use crate::network::{GenericMlp, KernelMatrix, OneHiddenNet};
use crate::variations::invariant_gradient;
use crate::vecmath::{dist_sq, dot, norm, normalize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowMode {
    Vanilla,
    KernelExact,
    WeightSpace,
    ClusteredApprox,
    InfiniteWidth,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub mode: FlowMode,
    /// Euler step size (the paper's step symbol, renamed to avoid clashing
    /// with the activation).
    pub step_size: f64,
    pub max_steps: usize,
    pub record_stride: usize,
    pub sphere_projection: bool,
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_size <= 0.0 || self.step_size.is_nan() {
            return Err(LabError::Config("step size must be positive".into()));
        }
        if self.record_stride == 0 {
            return Err(LabError::Config("record stride must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct StepDiagnostics {
    pub loss: f64,
    pub max_grad: f64,
    pub invariance_dev: f64,
    pub coherence: f64,
    pub uniformity: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<usize>,
    /// Latent configuration snapshots, one per recorded time.
    pub states: Vec<Vec<Vec<f64>>>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn record(&mut self, time: usize, state: Vec<Vec<f64>>, diag: StepDiagnostics) {
        debug_assert!(self.times.last().is_none_or(|&t| time > t));
        self.times.push(time);
        self.states.push(state);
        self.diagnostics.push(diag);
    }

    pub fn final_state(&self) -> &Vec<Vec<f64>> {
        self.states.last().expect("trajectory has no states")
    }

    /// CSV `step,loss,max_grad,invariance_dev,coherence,uniformity`.
    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("step,loss,max_grad,invariance_dev,coherence,uniformity\n");
        for (t, d) in self.times.iter().zip(&self.diagnostics) {
            writeln!(
                out,
                "{t},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                d.loss, d.max_grad, d.invariance_dev, d.coherence, d.uniformity
            )
            .unwrap();
        }
        out
    }

    /// CSV `step,point,z_0,...,z_{d-1}` of every recorded state.
    pub fn states_csv(&self) -> String {
        let d = self
            .states
            .first()
            .and_then(|s| s.first())
            .map_or(0, |p| p.len());
        let mut out = String::from("step,point");
        for k in 0..d {
            write!(out, ",z_{k}").unwrap();
        }
        out.push('\n');
        for (t, state) in self.times.iter().zip(&self.states) {
            for (i, p) in state.iter().enumerate() {
                write!(out, "{t},{i}").unwrap();
                for v in p {
                    write!(out, ",{v:.17e}").unwrap();
                }
                out.push('\n');
            }
        }
        out
    }
}

impl Default for Trajectory {
    fn default() -> Self {
        Self::new()
    }
}

fn maybe_project(points: &mut [Vec<f64>], project: bool) {
    if project {
        for p in points.iter_mut() {
            *p = normalize(p);
        }
    }
}

/// One vanilla latent descent step: `z_i <- z_i - step * g(z_i)`.
pub fn step_vanilla(
    z: &LatentConfiguration,
    cfg: &SimilarityConfig,
    step_size: f64,
    sphere_projection: bool,
) -> LatentConfiguration {
    let report = invariant_gradient(z, cfg);
    let mut points = z.points.clone();
    for (p, g) in points.iter_mut().zip(&report.euclidean) {
        for (a, b) in p.iter_mut().zip(g) {
            *a -= step_size * b;
        }
    }
    maybe_project(&mut points, sphere_projection);
    LatentConfiguration {
        points,
        weights: z.weights.clone(),
    }
}

/// One kernel-mediated step: `z_i <- z_i - (step/n) sum_j K_ij g(z_j)`.
pub fn step_kernel(
    z: &LatentConfiguration,
    kernel: &KernelMatrix,
    cfg: &SimilarityConfig,
    step_size: f64,
    sphere_projection: bool,
) -> Result<LatentConfiguration> {
    let n = z.len();
    if kernel.n != n || kernel.d != z.dim() {
        return Err(LabError::DimMismatch {
            expected: n * z.dim(),
            got: kernel.n * kernel.d,
        });
    }
    let report = invariant_gradient(z, cfg);
    let mut points = z.points.clone();
    for (i, p) in points.iter_mut().enumerate() {
        let mixed = kernel.apply_row(i, &report.euclidean);
        for (a, b) in p.iter_mut().zip(&mixed) {
            *a -= step_size / n as f64 * b;
        }
    }
    maybe_project(&mut points, sphere_projection);
    Ok(LatentConfiguration {
        points,
        weights: z.weights.clone(),
    })
}

/// The per-step kernel increments `-(step/n) sum_j K_ij g(z_j)` without
/// applying them (used by the cluster-coherence diagnostics).
pub fn kernel_increments(
    z: &LatentConfiguration,
    kernel: &KernelMatrix,
    cfg: &SimilarityConfig,
    step_size: f64,
) -> Vec<Vec<f64>> {
    let n = z.len();
    let report = invariant_gradient(z, cfg);
    (0..n)
        .map(|i| {
            let mixed = kernel.apply_row(i, &report.euclidean);
            mixed.iter().map(|v| -step_size / n as f64 * v).collect()
        })
        .collect()
}

/// Parameters of the clustered-approximation flow: per-cluster diagonal
/// activation statistics, masses, and center norms.
#[derive(Debug, Clone)]
pub struct ClusterFlowParams {
    /// Diagonal of each beta matrix, one Vec<f64> of length d per cluster.
    pub beta_diag: Vec<Vec<f64>>,
    /// (n_q - n_{q-1}) / n per cluster.
    pub masses: Vec<f64>,
    /// |xi_q|^2 per cluster.
    pub center_norms_sq: Vec<f64>,
}

impl ClusterFlowParams {
    /// Beta from a concrete one-hidden net evaluated at the cluster centers:
    /// `beta^k_q = (1/M) sum_{p in block k} sigma'(b_p . xi_q)^2`.
    pub fn from_net(net: &OneHiddenNet, data: &ClusteredDataset) -> Self {
        let d = net.latent_dim;
        let n = data.len() as f64;
        let mut counts = vec![0usize; data.centers.len()];
        for &q in &data.assignment {
            counts[q] += 1;
        }
        let beta_diag = data
            .centers
            .iter()
            .map(|xi| {
                (0..d)
                    .map(|k| {
                        let mut acc = 0.0;
                        for p in k * net.width..(k + 1) * net.width {
                            let s = net.activation.deriv(dot(net.row(p), xi));
                            acc += s * s;
                        }
                        acc / net.width as f64
                    })
                    .collect()
            })
            .collect();
        Self {
            beta_diag,
            masses: counts.iter().map(|&c| c as f64 / n).collect(),
            center_norms_sq: data.centers.iter().map(|c| dot(c, c)).collect(),
        }
    }

    /// Infinite-width limit: beta = I/2 in every cluster.
    pub fn infinite_width(data: &ClusteredDataset, latent_dim: usize) -> Self {
        let n = data.len() as f64;
        let mut counts = vec![0usize; data.centers.len()];
        for &q in &data.assignment {
            counts[q] += 1;
        }
        Self {
            beta_diag: vec![vec![0.5; latent_dim]; data.centers.len()],
            masses: counts.iter().map(|&c| c as f64 / n).collect(),
            center_norms_sq: data.centers.iter().map(|c| dot(c, c)).collect(),
        }
    }
}

/// One clustered-approximation step: every point moves by the gradient at its
/// cluster representative (the current latent of the cluster's first point),
/// scaled by cluster mass, center norm, and beta.
pub fn step_clustered(
    z: &LatentConfiguration,
    assignment: &[usize],
    params: &ClusterFlowParams,
    cfg: &SimilarityConfig,
    step_size: f64,
    sphere_projection: bool,
) -> Result<LatentConfiguration> {
    let n_clusters = params.masses.len();
    let mut representative = vec![None; n_clusters];
    for (i, &q) in assignment.iter().enumerate() {
        if q >= n_clusters {
            return Err(LabError::Config(format!("unknown cluster index {q}")));
        }
        if representative[q].is_none() {
            representative[q] = Some(i);
        }
    }
    let report = invariant_gradient(z, cfg);
    let mut points = z.points.clone();
    for (i, p) in points.iter_mut().enumerate() {
        let q = assignment[i];
        let rep = representative[q].unwrap();
        let g = &report.euclidean[rep];
        let scale = step_size * params.masses[q] * params.center_norms_sq[q];
        for (k, a) in p.iter_mut().enumerate() {
            *a -= scale * params.beta_diag[q][k] * g[k];
        }
    }
    maybe_project(&mut points, sphere_projection);
    Ok(LatentConfiguration {
        points,
        weights: z.weights.clone(),
    })
}

/// Anything that can be trained by weight-space descent.
pub trait EmbeddingModel {
    fn output_dim(&self) -> usize;
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn param_count(&self) -> usize;
    /// Accumulates `scale * sum_k upstream[k] grad_w f^k(x)` into `grad`.
    fn accumulate_gradient(&self, x: &[f64], upstream: &[f64], scale: f64, grad: &mut [f64]);
    /// `w <- w + delta`.
    fn apply_update(&mut self, delta: &[f64]);
    fn max_abs_param(&self) -> f64;
}

impl EmbeddingModel for OneHiddenNet {
    fn output_dim(&self) -> usize {
        self.latent_dim
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        OneHiddenNet::forward(self, x)
    }

    fn param_count(&self) -> usize {
        self.b.len()
    }

    fn accumulate_gradient(&self, x: &[f64], upstream: &[f64], scale: f64, grad: &mut [f64]) {
        let inv_sqrt_m = 1.0 / (self.width as f64).sqrt();
        for (k, &u) in upstream.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            for p in k * self.width..(k + 1) * self.width {
                let s = scale * u * inv_sqrt_m * self.activation.deriv(dot(self.row(p), x));
                for (c, &xv) in x.iter().enumerate() {
                    grad[p * self.input_dim + c] += s * xv;
                }
            }
        }
    }

    fn apply_update(&mut self, delta: &[f64]) {
        for (w, d) in self.b.iter_mut().zip(delta) {
            *w += d;
        }
    }

    fn max_abs_param(&self) -> f64 {
        self.max_abs_weight()
    }
}

impl EmbeddingModel for GenericMlp {
    fn output_dim(&self) -> usize {
        GenericMlp::output_dim(self)
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        GenericMlp::forward(self, x)
    }

    fn param_count(&self) -> usize {
        GenericMlp::param_count(self)
    }

    fn accumulate_gradient(&self, x: &[f64], upstream: &[f64], scale: f64, grad: &mut [f64]) {
        if scale == 1.0 {
            GenericMlp::accumulate_gradient(self, x, upstream, grad);
        } else {
            let scaled: Vec<f64> = upstream.iter().map(|u| u * scale).collect();
            GenericMlp::accumulate_gradient(self, x, &scaled, grad);
        }
    }

    fn apply_update(&mut self, delta: &[f64]) {
        let mut offset = 0;
        for w in &mut self.weights {
            for v in w.iter_mut() {
                *v += delta[offset];
                offset += 1;
            }
        }
    }

    fn max_abs_param(&self) -> f64 {
        self.weights
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Max deviation `|f(T(x)) - f(x)|` over sampled points and perturbations.
pub fn monitor_invariance<M: EmbeddingModel>(
    model: &M,
    data: &ClusteredDataset,
    perturb: &PerturbationSet,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut max = 0.0f64;
    for s in 0..samples {
        let i = s % data.len();
        let x = &data.points[i];
        let y = perturb.apply(x, seed.wrapping_add(s as u64));
        let fx = model.forward(x)?;
        let fy = model.forward(&y)?;
        max = max.max(dist_sq(&fx, &fy).sqrt());
    }
    Ok(max)
}

/// Explicit-Euler descent on the weights of `model` for the generalized
/// latent loss of the embedded configuration. Per-step loss increase triggers
/// step halving (up to 20 times); sustained increase or non-finite loss
/// aborts with the step index.
pub fn run_weight_space<M: EmbeddingModel>(
    model: &mut M,
    data: &ClusteredDataset,
    perturb: &PerturbationSet,
    cfg: &SimilarityConfig,
    flow: &FlowConfig,
    invariance_samples: usize,
    seed: u64,
) -> Result<Trajectory> {
    flow.validate()?;
    let n = data.len();
    let mut trajectory = Trajectory::new();

    let latent = |model: &M| -> Result<LatentConfiguration> {
        let pts = data
            .points
            .iter()
            .map(|x| model.forward(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(LatentConfiguration::uniform(pts))
    };

    let mut z = latent(model)?;
    let mut loss = generalized_loss(&z, cfg);
    let record = |model: &M,
                  z: &LatentConfiguration,
                  loss: f64,
                  traj: &mut Trajectory,
                  t: usize|
     -> Result<()> {
        let report = invariant_gradient(z, cfg);
        let diag = StepDiagnostics {
            loss,
            max_grad: report.max_euclidean_norm,
            invariance_dev: monitor_invariance(model, data, perturb, invariance_samples, seed)?,
            coherence: cluster_coherence(&z.points, &data.assignment),
            uniformity: uniformity_score(&z.points).unwrap_or(f64::NAN),
        };
        traj.record(t, z.points.clone(), diag);
        Ok(())
    };
    record(model, &z, loss, &mut trajectory, 0)?;

    let mut step_size = flow.step_size;
    for b in 1..=flow.max_steps {
        let report = invariant_gradient(&z, cfg);
        let mut grad = vec![0.0; model.param_count()];
        for (x, g) in data.points.iter().zip(&report.euclidean) {
            model.accumulate_gradient(x, g, 1.0 / n as f64, &mut grad);
        }

        let mut halvings = 0;
        loop {
            let delta: Vec<f64> = grad.iter().map(|g| -step_size * g).collect();
            model.apply_update(&delta);
            let z_new = latent(model)?;
            let loss_new = generalized_loss(&z_new, cfg);
            if loss_new.is_finite() && loss_new <= loss + 1e-15 {
                z = z_new;
                loss = loss_new;
                break;
            }
            // Undo and retry with a halved step.
            let undo: Vec<f64> = delta.iter().map(|d| -d).collect();
            model.apply_update(&undo);
            halvings += 1;
            if halvings > 20 {
                return Err(LabError::Divergence {
                    step: b,
                    detail: format!("loss would rise to {loss_new} after 20 halvings"),
                });
            }
            step_size /= 2.0;
        }
        if !loss.is_finite() || loss.abs() > 1e6 {
            return Err(LabError::Divergence {
                step: b,
                detail: format!("loss {loss}"),
            });
        }
        if b % flow.record_stride == 0 || b == flow.max_steps {
            record(model, &z, loss, &mut trajectory, b)?;
        }
    }
    Ok(trajectory)
}

/// Runs vanilla latent descent from an explicit initial configuration,
/// recording the same diagnostics (invariance deviation is structurally 0:
/// duplicated latent points receive identical updates).
pub fn run_vanilla(
    z0: &LatentConfiguration,
    assignment: &[usize],
    cfg: &SimilarityConfig,
    flow: &FlowConfig,
) -> Result<Trajectory> {
    flow.validate()?;
    let mut trajectory = Trajectory::new();
    let mut z = z0.clone();
    let record = |z: &LatentConfiguration, traj: &mut Trajectory, t: usize| {
        let report = invariant_gradient(z, cfg);
        let diag = StepDiagnostics {
            loss: generalized_loss(z, cfg),
            max_grad: report.max_euclidean_norm,
            invariance_dev: 0.0,
            coherence: cluster_coherence(&z.points, assignment),
            uniformity: uniformity_score(&z.points).unwrap_or(f64::NAN),
        };
        traj.record(t, z.points.clone(), diag);
    };
    record(&z, &mut trajectory, 0);
    for b in 1..=flow.max_steps {
        z = step_vanilla(&z, cfg, flow.step_size, flow.sphere_projection);
        if b % flow.record_stride == 0 || b == flow.max_steps {
            record(&z, &mut trajectory, b);
        }
    }
    Ok(trajectory)
}

/// Silhouette-style score in [-1, 1]: mean over points of
/// `(nearest-other-cluster mean distance - own-cluster mean distance)`
/// normalized by the larger of the two. Degenerate cases return 0.
pub fn cluster_coherence(points: &[Vec<f64>], assignment: &[usize]) -> f64 {
    let n = points.len();
    let n_clusters = assignment.iter().copied().max().map_or(0, |m| m + 1);
    if n < 2 || n_clusters < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for i in 0..n {
        let mut sums = vec![0.0; n_clusters];
        let mut counts = vec![0usize; n_clusters];
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = dist_sq(&points[i], &points[j]).sqrt();
            sums[assignment[j]] += d;
            counts[assignment[j]] += 1;
        }
        let own = assignment[i];
        let between = (0..n_clusters)
            .filter(|&q| q != own && counts[q] > 0)
            .map(|q| sums[q] / counts[q] as f64)
            .fold(f64::INFINITY, f64::min);
        if !between.is_finite() {
            continue;
        }
        let score = if counts[own] == 0 {
            // Singleton cluster: between-distance only.
            if between > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            let within = sums[own] / counts[own] as f64;
            let denom = within.max(between);
            if denom == 0.0 {
                0.0
            } else {
                (between - within) / denom
            }
        };
        total += score;
        counted += 1;
    }
    if counted == 0 {
        0.0
    } else {
        total / counted as f64
    }
}

/// Kolmogorov-Smirnov discrepancy between the empirical pairwise-angle
/// distribution and the uniform law on the sphere (d=2: angles uniform on
/// [0, pi]; d=3: density sin(theta)/2). Small = near-uniform.
pub fn uniformity_score(points: &[Vec<f64>]) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(LabError::Config(
            "uniformity needs at least 2 points".into(),
        ));
    }
    let d = points[0].len();
    if d != 2 && d != 3 {
        return Err(LabError::Config(
            "uniformity score defined on the 1- and 2-sphere only".into(),
        ));
    }
    let mut angles = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let cos = (dot(&points[i], &points[j]) / (norm(&points[i]) * norm(&points[j])))
                .clamp(-1.0, 1.0);
            angles.push(cos.acos());
        }
    }
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cdf = |theta: f64| -> f64 {
        if d == 2 {
            theta / std::f64::consts::PI
        } else {
            (1.0 - theta.cos()) / 2.0
        }
    };
    let m = angles.len() as f64;
    let mut stat = 0.0f64;
    for (idx, &a) in angles.iter().enumerate() {
        let model = cdf(a);
        let above = (idx + 1) as f64 / m - model;
        let below = model - idx as f64 / m;
        stat = stat.max(above.max(below));
    }
    Ok(stat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ClusterSpec;
    use crate::losses::Constraint;
    use crate::network::{init_gaussian, Activation, NetSpec};
    use crate::variations::roots_of_unity;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(tau: f64) -> SimilarityConfig {
        SimilarityConfig {
            constraint: Constraint::Unconstrained,
            ..SimilarityConfig::nt_xent(tau)
        }
    }

    #[test]
    fn coincident_points_are_a_fixed_point() {
        let z = LatentConfiguration::uniform(vec![vec![0.4, 0.6]; 5]);
        let next = step_vanilla(&z, &cfg(0.5), 0.1, false);
        assert_eq!(next.points, z.points);
    }

    #[test]
    fn duplicated_points_stay_identical_under_vanilla() {
        // Perturbed pairs sharing a latent point must stay fused: the update
        // is the same function of the same state.
        let mut pts = vec![
            vec![0.9, 0.1],
            vec![0.9, 0.1],
            vec![-0.4, 0.5],
            vec![-0.4, 0.5],
            vec![0.2, -0.8],
        ];
        let c = cfg(0.4);
        let mut z = LatentConfiguration::uniform(std::mem::take(&mut pts));
        for _ in 0..1000 {
            z = step_vanilla(&z, &c, 0.05, false);
        }
        assert_eq!(z.points[0], z.points[1]);
        assert_eq!(z.points[2], z.points[3]);
    }

    #[test]
    fn single_step_matches_gradient_oracle() {
        let z =
            LatentConfiguration::uniform(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-0.5, -0.5]]);
        let c = cfg(0.7);
        let report = invariant_gradient(&z, &c);
        let next = step_vanilla(&z, &c, 0.2, false);
        for i in 0..3 {
            for k in 0..2 {
                assert_relative_eq!(
                    next.points[i][k],
                    z.points[i][k] - 0.2 * report.euclidean[i][k],
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn scaled_identity_kernel_reduces_to_vanilla() {
        let z = roots_of_unity(6);
        let c = cfg(0.3);
        let k = KernelMatrix::scaled_identity(6, 2, 6.0);
        let a = step_kernel(&z, &k, &c, 0.1, false).unwrap();
        let b = step_vanilla(&z, &c, 0.1, false);
        for (pa, pb) in a.points.iter().zip(&b.points) {
            for (x, y) in pa.iter().zip(pb) {
                assert_relative_eq!(x, y, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn zero_kernel_freezes_the_configuration() {
        let z = roots_of_unity(4);
        let k = KernelMatrix::scaled_identity(4, 2, 0.0);
        let next = step_kernel(&z, &k, &cfg(0.3), 0.5, false).unwrap();
        assert_eq!(next.points, z.points);
    }

    #[test]
    fn clustered_step_gives_identical_increments_within_a_cluster() {
        let spec = ClusterSpec {
            ambient_dim: 3,
            latent_dim: 2,
            cluster_sizes: vec![3, 3],
            center_norms: vec![1.0, 1.0],
            noise_bound: 0.0,
            seed: 1,
        };
        let data = ClusteredDataset::generate(&spec).unwrap();
        let params = ClusterFlowParams::infinite_width(&data, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = LatentConfiguration::uniform(
            (0..6)
                .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect(),
        );
        let next = step_clustered(&z, &data.assignment, &params, &cfg(0.5), 0.1, false).unwrap();
        for i in [1usize, 2] {
            for k in 0..2 {
                let inc0 = next.points[0][k] - z.points[0][k];
                let inc = next.points[i][k] - z.points[i][k];
                assert_relative_eq!(inc, inc0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn clustered_increment_magnitude_tracks_mass_ratio() {
        // Mass 0.01 vs 0.99 with identical gradients at the representative:
        // increments scale 1:99.
        let params = ClusterFlowParams {
            beta_diag: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            masses: vec![0.01, 0.99],
            center_norms_sq: vec![1.0, 1.0],
        };
        // Both clusters at mirrored positions so gradient norms match.
        let z = LatentConfiguration::uniform(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let assignment = vec![0, 1];
        let next = step_clustered(&z, &assignment, &params, &cfg(0.5), 0.1, false).unwrap();
        let inc0 = (dist_sq(&next.points[0], &z.points[0])).sqrt();
        let inc1 = (dist_sq(&next.points[1], &z.points[1])).sqrt();
        assert_relative_eq!(inc1 / inc0, 99.0, epsilon = 1e-9);
    }

    #[test]
    fn infinite_width_equal_clusters_formula() {
        // Equal sizes, unit norms, beta = I/2: increment = -step/(2N) * g(rep).
        let spec = ClusterSpec {
            ambient_dim: 2,
            latent_dim: 2,
            cluster_sizes: vec![2, 2],
            center_norms: vec![1.0, 1.0],
            noise_bound: 0.0,
            seed: 0,
        };
        let data = ClusteredDataset::generate(&spec).unwrap();
        let params = ClusterFlowParams::infinite_width(&data, 2);
        let c = cfg(0.5);
        let z = LatentConfiguration::uniform(vec![
            vec![0.8, 0.1],
            vec![0.8, 0.1],
            vec![-0.3, 0.6],
            vec![-0.3, 0.6],
        ]);
        let report = invariant_gradient(&z, &c);
        let next = step_clustered(&z, &data.assignment, &params, &c, 0.4, false).unwrap();
        let n_clusters = 2.0;
        for k in 0..2 {
            assert_relative_eq!(
                next.points[0][k] - z.points[0][k],
                -0.4 / (2.0 * n_clusters) * report.euclidean[0][k],
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn weight_space_zero_steps_records_initialization() {
        let spec = ClusterSpec {
            ambient_dim: 3,
            latent_dim: 2,
            cluster_sizes: vec![2, 2],
            center_norms: vec![1.0, 1.0],
            noise_bound: 0.05,
            seed: 3,
        };
        let data = ClusteredDataset::generate(&spec).unwrap();
        let mut net = init_gaussian(
            &NetSpec {
                input_dim: 3,
                latent_dim: 2,
                width: 8,
                activation: Activation::Tanh,
                weight_std: None,
                weight_bound: 10.0,
            },
            4,
        );
        let flow = FlowConfig {
            mode: FlowMode::WeightSpace,
            step_size: 0.1,
            max_steps: 0,
            record_stride: 1,
            sphere_projection: false,
        };
        let traj = run_weight_space(
            &mut net,
            &data,
            &PerturbationSet::IdentityOnly,
            &cfg(0.5),
            &flow,
            4,
            0,
        )
        .unwrap();
        assert_eq!(traj.times, vec![0]);
        assert_eq!(traj.states.len(), 1);
    }

    #[test]
    fn weight_space_loss_is_non_increasing() {
        let spec = ClusterSpec {
            ambient_dim: 3,
            latent_dim: 2,
            cluster_sizes: vec![4, 4],
            center_norms: vec![1.5, 1.5],
            noise_bound: 0.05,
            seed: 9,
        };
        let data = ClusteredDataset::generate(&spec).unwrap();
        let mut net = init_gaussian(
            &NetSpec {
                input_dim: 3,
                latent_dim: 2,
                width: 16,
                activation: Activation::Tanh,
                weight_std: None,
                weight_bound: 10.0,
            },
            5,
        );
        let flow = FlowConfig {
            mode: FlowMode::WeightSpace,
            step_size: 0.5,
            max_steps: 50,
            record_stride: 1,
            sphere_projection: false,
        };
        let traj = run_weight_space(
            &mut net,
            &data,
            &PerturbationSet::IdentityOnly,
            &cfg(0.3),
            &flow,
            4,
            0,
        )
        .unwrap();
        for w in traj.diagnostics.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-12);
        }
    }

    #[test]
    fn first_step_consistency_with_kernel_formula() {
        // Richardson check: z(1) - z(0) = -(step/n) sum_j K_ij g_j + O(step^2).
        let spec = ClusterSpec {
            ambient_dim: 3,
            latent_dim: 2,
            cluster_sizes: vec![2, 2],
            center_norms: vec![1.0, 1.0],
            noise_bound: 0.05,
            seed: 13,
        };
        let data = ClusteredDataset::generate(&spec).unwrap();
        let c = cfg(0.5);
        let defect = |step: f64| -> f64 {
            let mut net = init_gaussian(
                &NetSpec {
                    input_dim: 3,
                    latent_dim: 2,
                    width: 12,
                    activation: Activation::Tanh,
                    weight_std: None,
                    weight_bound: 10.0,
                },
                21,
            );
            let z0 = LatentConfiguration::uniform(
                data.points
                    .iter()
                    .map(|x| net.forward(x).unwrap())
                    .collect(),
            );
            let kernel = net.kernel(&data.points);
            let predicted = kernel_increments(&z0, &kernel, &c, step);
            let flow = FlowConfig {
                mode: FlowMode::WeightSpace,
                step_size: step,
                max_steps: 1,
                record_stride: 1,
                sphere_projection: false,
            };
            let traj = run_weight_space(
                &mut net,
                &data,
                &PerturbationSet::IdentityOnly,
                &c,
                &flow,
                1,
                0,
            )
            .unwrap();
            let mut max = 0.0f64;
            for (i, pred) in predicted.iter().enumerate() {
                for (k, p) in pred.iter().enumerate() {
                    let actual = traj.states[1][i][k] - traj.states[0][i][k];
                    max = max.max((actual - p).abs());
                }
            }
            max
        };
        let d1 = defect(0.2);
        let d2 = defect(0.1);
        // Second-order: halving the step should cut the defect ~4x.
        assert!(d2 < d1 / 2.5, "defects {d1} vs {d2}");
    }

    #[test]
    fn invariant_model_has_zero_invariance_deviation() {
        let spec = ClusterSpec {
            ambient_dim: 4,
            latent_dim: 2,
            cluster_sizes: vec![3, 3],
            center_norms: vec![1.0, 1.0],
            noise_bound: 0.1,
            seed: 5,
        };
        let data = ClusteredDataset::generate(&spec).unwrap();
        let net = crate::network::init_invariant(&[4, 8, 2], 2, Activation::Tanh, 0.7, 3).unwrap();
        let perturb = PerturbationSet::OrthogonalNoise {
            latent_dim: 2,
            magnitude: 0.2,
        };
        let dev = monitor_invariance(&net, &data, &perturb, 40, 0).unwrap();
        assert_eq!(dev, 0.0);
    }

    #[test]
    fn generic_net_is_not_invariant_to_orthogonal_noise() {
        let spec = ClusterSpec {
            ambient_dim: 4,
            latent_dim: 2,
            cluster_sizes: vec![3, 3],
            center_norms: vec![1.0, 1.0],
            noise_bound: 0.1,
            seed: 6,
        };
        let data = ClusteredDataset::generate(&spec).unwrap();
        let net = init_gaussian(
            &NetSpec {
                input_dim: 4,
                latent_dim: 2,
                width: 8,
                activation: Activation::Tanh,
                weight_std: None,
                weight_bound: 10.0,
            },
            8,
        );
        let perturb = PerturbationSet::OrthogonalNoise {
            latent_dim: 2,
            magnitude: 0.1,
        };
        let dev = monitor_invariance(&net, &data, &perturb, 40, 0).unwrap();
        assert!(dev > 0.0);
    }

    #[test]
    fn coherence_high_for_separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut points = Vec::new();
        let mut assignment = Vec::new();
        for (q, center) in [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]].iter().enumerate() {
            for _ in 0..20 {
                points.push(vec![
                    center[0] + rng.gen_range(-0.1..0.1),
                    center[1] + rng.gen_range(-0.1..0.1),
                ]);
                assignment.push(q);
            }
        }
        assert!(cluster_coherence(&points, &assignment) > 0.9);
    }

    #[test]
    fn coherence_near_zero_for_random_labels() {
        let mut total = 0.0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 64;
            let points: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let t = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
                    vec![t.cos(), t.sin()]
                })
                .collect();
            let assignment: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            total += cluster_coherence(&points, &assignment);
        }
        // Nearest-other-cluster selection biases random labels slightly
        // negative; the score just has to sit far from the separated regime.
        let mean = total / 20.0;
        assert!(mean < 0.1 && mean > -0.5, "mean={mean}");
    }

    #[test]
    fn coherence_zero_for_coincident_points() {
        let points = vec![vec![1.0, 0.0]; 6];
        let assignment = vec![0, 0, 1, 1, 2, 2];
        assert_eq!(cluster_coherence(&points, &assignment), 0.0);
    }

    #[test]
    fn uniformity_small_for_roots_of_unity() {
        let z = roots_of_unity(64);
        assert!(uniformity_score(&z.points).unwrap() < 0.05);
    }

    #[test]
    fn uniformity_near_one_for_coincident_points() {
        let points = vec![vec![1.0, 0.0]; 8];
        assert!(uniformity_score(&points).unwrap() > 0.9);
    }

    #[test]
    fn uniformity_intermediate_for_antipodal_half_masses() {
        let mut points = vec![vec![1.0, 0.0]; 8];
        points.extend(vec![vec![-1.0, 0.0]; 8]);
        let v = uniformity_score(&points).unwrap();
        let uniform = uniformity_score(&roots_of_unity(64).points).unwrap();
        let coincident = uniformity_score(&vec![vec![1.0, 0.0]; 8]).unwrap();
        assert!(v > uniform && v < coincident, "v={v}");
    }
}

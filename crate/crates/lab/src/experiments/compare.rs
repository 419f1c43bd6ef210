//! With/without-kernel dynamics comparison on the four-cluster line dataset:
//! weight-space descent through a one-hidden relu net versus vanilla latent
//! descent from the same initial configuration.

use crate::dataset::{ClusteredDataset, PerturbationSet};
use crate::dynamics::{
    run_vanilla, run_weight_space, EmbeddingModel, FlowConfig, FlowMode, Trajectory,
};
use crate::error::Result;
use crate::losses::{Constraint, LatentConfiguration, SimilarityConfig};
use crate::network::{init_gaussian, Activation, NetSpec, OneHiddenNet};
use crate::variations::stationarity_check;
use crate::vecmath::normalize;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub cluster_size: usize,
    /// First-coordinate positions of the cluster centers on the input line.
    pub center_positions: Vec<f64>,
    pub ambient_dim: usize,
    pub latent_dim: usize,
    pub width: usize,
    pub noise_bound: f64,
    pub tau: f64,
    pub weight_steps: usize,
    pub weight_step_size: f64,
    pub vanilla_steps: usize,
    pub vanilla_step_size: f64,
    pub record_stride: usize,
    pub coherence_goal: f64,
    pub uniformity_goal: f64,
    pub seed: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            cluster_size: 50,
            center_positions: vec![-3.0, -1.0, 1.0, 3.0],
            ambient_dim: 3,
            latent_dim: 2,
            width: 256,
            noise_bound: 0.1,
            tau: 0.5,
            weight_steps: 400,
            weight_step_size: 0.05,
            vanilla_steps: 3000,
            vanilla_step_size: 0.5,
            record_stride: 50,
            coherence_goal: 0.8,
            uniformity_goal: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ComparisonVerdict {
    /// First recorded step at which the weight-space path met the coherence
    /// goal, if any.
    pub kernel_coherence_step: Option<usize>,
    /// First recorded step at which the vanilla path met the uniformity goal.
    pub vanilla_uniformity_step: Option<usize>,
    pub kernel_final_coherence: f64,
    pub vanilla_final_uniformity: f64,
    /// Max tangential gradient norm of the vanilla path's final state.
    pub vanilla_final_tangential: f64,
    /// Max-magnitude entry of the loss gradient with respect to the weights
    /// at the weight path's final state (its own notion of stationarity; the
    /// latent functional gradient stays bounded away from zero because the
    /// net couples the points).
    pub kernel_final_weight_grad: f64,
    /// Both milestones reached strictly before their paths' final recorded
    /// steps.
    pub passed: bool,
}

pub struct ComparisonReport {
    pub kernel_trajectory: Trajectory,
    pub vanilla_trajectory: Trajectory,
    pub verdict: ComparisonVerdict,
}

pub fn line_dataset(cfg: &CompareConfig) -> Result<ClusteredDataset> {
    let centers = cfg
        .center_positions
        .iter()
        .map(|&x| {
            let mut c = vec![0.0; cfg.ambient_dim];
            c[0] = x;
            c
        })
        .collect();
    let sizes = vec![cfg.cluster_size; cfg.center_positions.len()];
    ClusteredDataset::from_centers(centers, &sizes, cfg.latent_dim, cfg.noise_bound, cfg.seed)
}

fn first_hit<F: Fn(&crate::dynamics::StepDiagnostics) -> bool>(
    traj: &Trajectory,
    pred: F,
) -> Option<usize> {
    traj.times
        .iter()
        .zip(&traj.diagnostics)
        .find(|(_, d)| pred(d))
        .map(|(&t, _)| t)
}

pub fn compare_dynamics(cfg: &CompareConfig) -> Result<ComparisonReport> {
    let data = line_dataset(cfg)?;
    let sim = SimilarityConfig {
        constraint: Constraint::Unconstrained,
        ..SimilarityConfig::nt_xent(cfg.tau)
    };
    let mut net = init_gaussian(
        &NetSpec {
            input_dim: cfg.ambient_dim,
            latent_dim: cfg.latent_dim,
            width: cfg.width,
            activation: Activation::Relu,
            weight_std: None,
            weight_bound: 100.0,
        },
        cfg.seed,
    );

    let z0 = LatentConfiguration::uniform(
        data.points
            .iter()
            .map(|x| net.forward(x).map(|z| normalize(&z)))
            .collect::<Result<Vec<_>>>()?,
    );

    let perturb = PerturbationSet::OrthogonalNoise {
        latent_dim: cfg.latent_dim,
        magnitude: cfg.noise_bound,
    };
    let kernel_flow = FlowConfig {
        mode: FlowMode::WeightSpace,
        step_size: cfg.weight_step_size,
        max_steps: cfg.weight_steps,
        record_stride: cfg.record_stride,
        sphere_projection: false,
    };
    let kernel_trajectory =
        run_weight_space(&mut net, &data, &perturb, &sim, &kernel_flow, 16, cfg.seed)?;

    let vanilla_flow = FlowConfig {
        mode: FlowMode::Vanilla,
        step_size: cfg.vanilla_step_size,
        max_steps: cfg.vanilla_steps,
        record_stride: cfg.record_stride,
        sphere_projection: true,
    };
    let vanilla_trajectory = run_vanilla(&z0, &data.assignment, &sim, &vanilla_flow)?;

    let kernel_final_weight_grad = final_weight_gradient(&net, &data, &sim);
    let vanilla_final = LatentConfiguration::uniform(vanilla_trajectory.final_state().clone());
    let (_, vanilla_report) = stationarity_check(&vanilla_final, &sim, 1e-4);

    let coherence_step = first_hit(&kernel_trajectory, |d| d.coherence >= cfg.coherence_goal);
    let uniformity_step = first_hit(&vanilla_trajectory, |d| d.uniformity <= cfg.uniformity_goal);
    let last_kernel = *kernel_trajectory.times.last().unwrap();
    let last_vanilla = *vanilla_trajectory.times.last().unwrap();
    let verdict = ComparisonVerdict {
        kernel_coherence_step: coherence_step,
        vanilla_uniformity_step: uniformity_step,
        kernel_final_coherence: kernel_trajectory.diagnostics.last().unwrap().coherence,
        vanilla_final_uniformity: vanilla_trajectory.diagnostics.last().unwrap().uniformity,
        vanilla_final_tangential: vanilla_report.max_tangential_norm,
        kernel_final_weight_grad,
        passed: coherence_step.is_some_and(|t| t < last_kernel)
            && uniformity_step.is_some_and(|t| t < last_vanilla),
    };
    Ok(ComparisonReport {
        kernel_trajectory,
        vanilla_trajectory,
        verdict,
    })
}

fn final_weight_gradient(
    net: &OneHiddenNet,
    data: &ClusteredDataset,
    sim: &SimilarityConfig,
) -> f64 {
    let z = LatentConfiguration::uniform(
        data.points
            .iter()
            .map(|x| net.forward(x).unwrap())
            .collect(),
    );
    let report = crate::variations::invariant_gradient(&z, sim);
    let mut grad = vec![0.0; net.param_count()];
    let n = data.len() as f64;
    for (x, g) in data.points.iter().zip(&report.euclidean) {
        net.accumulate_gradient(x, g, 1.0 / n, &mut grad);
    }
    grad.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

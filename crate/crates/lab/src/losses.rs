//! Contrastive losses: the original NT-Xent objective, its generalized
//! `Psi`/`eta` form, the invariant latent reformulations, and the latent forms
//! of the VICReg and BYOL objectives.
//!
//! The generalized loss over a discrete latent configuration `z` with weights
//! `w` is
//!
//! ```text
//! L(z) = sum_i w_i Psi( G_i ),   G_i = sum_j w_j eta(|z_i - z_j|^2 / 2) / eta(0)
//! ```
//!
//! which drops the `x != y` indicator of the original NT-Xent form. All loss
//! evaluations are pure; batch sums go through a fixed pairwise reduction so
//! parallel and sequential execution agree bitwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{apply_displacement, ClusteredDataset, PerturbationSet};
use crate::error::{LabError, Result};
use crate::exec::{pairwise_sum, sum_indexed, Execution};
use crate::vecmath::{dist_sq, dot, norm};

/// Outer transform `Psi` of the generalized loss. Must be nondecreasing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Psi {
    /// t -> log(1 + t)
    Log1p,
    /// t -> log(1 + t/2)
    Log1pHalf,
    Identity,
}

impl Psi {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Psi::Log1p => t.ln_1p(),
            Psi::Log1pHalf => (t / 2.0).ln_1p(),
            Psi::Identity => t,
        }
    }

    pub fn deriv(self, t: f64) -> f64 {
        match self {
            Psi::Log1p => 1.0 / (1.0 + t),
            Psi::Log1pHalf => 0.5 / (1.0 + t / 2.0),
            Psi::Identity => 1.0,
        }
    }

    pub fn second_deriv(self, t: f64) -> f64 {
        match self {
            Psi::Log1p => -1.0 / ((1.0 + t) * (1.0 + t)),
            Psi::Log1pHalf => -0.25 / ((1.0 + t / 2.0) * (1.0 + t / 2.0)),
            Psi::Identity => 0.0,
        }
    }
}

/// Similarity profile `eta`, applied to half squared distances. Maximized at 0.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Eta {
    /// t -> exp(-t / tau)
    ExpDecay,
    /// Piecewise-linear table of (t, value) knots, t increasing from 0.
    Table { knots: Vec<(f64, f64)> },
}

impl Eta {
    pub fn eval(&self, t: f64, tau: f64) -> f64 {
        match self {
            Eta::ExpDecay => (-t / tau).exp(),
            Eta::Table { knots } => table_interp(knots, t).0,
        }
    }

    pub fn deriv(&self, t: f64, tau: f64) -> f64 {
        match self {
            Eta::ExpDecay => -(-t / tau).exp() / tau,
            Eta::Table { knots } => table_interp(knots, t).1,
        }
    }
}

fn table_interp(knots: &[(f64, f64)], t: f64) -> (f64, f64) {
    assert!(knots.len() >= 2, "eta table needs at least two knots");
    let last = knots.len() - 1;
    if t <= knots[0].0 {
        let slope = (knots[1].1 - knots[0].1) / (knots[1].0 - knots[0].0);
        return (knots[0].1, slope);
    }
    if t >= knots[last].0 {
        return (knots[last].1, 0.0);
    }
    let i = knots.partition_point(|&(x, _)| x <= t) - 1;
    let (x0, y0) = knots[i];
    let (x1, y1) = knots[i + 1];
    let slope = (y1 - y0) / (x1 - x0);
    (y0 + slope * (t - x0), slope)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Embeddings constrained to the unit sphere.
    Sphere,
    Unconstrained,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityConfig {
    pub tau: f64,
    pub psi: Psi,
    pub eta: Eta,
    pub constraint: Constraint,
}

impl SimilarityConfig {
    pub fn nt_xent(tau: f64) -> Self {
        Self {
            tau,
            psi: Psi::Log1p,
            eta: Eta::ExpDecay,
            constraint: Constraint::Sphere,
        }
    }

    pub fn eta_at(&self, t: f64) -> f64 {
        self.eta.eval(t, self.tau)
    }

    pub fn eta_deriv_at(&self, t: f64) -> f64 {
        self.eta.deriv(t, self.tau)
    }

    pub fn eta_zero(&self) -> Result<f64> {
        let e0 = self.eta_at(0.0);
        if e0 == 0.0 {
            return Err(LabError::DegenerateConfig(
                "eta(0) = 0: attraction denominator vanishes".into(),
            ));
        }
        Ok(e0)
    }
}

/// A weighted discrete latent configuration (the pushforward measure).
#[derive(Debug, Clone)]
pub struct LatentConfiguration {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl LatentConfiguration {
    /// Uniform weights 1/n.
    pub fn uniform(points: Vec<Vec<f64>>) -> Self {
        let n = points.len();
        Self {
            points,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn validate(&self, constraint: Constraint) -> Result<()> {
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 || self.weights.iter().any(|&w| w < 0.0) {
            return Err(LabError::DegenerateConfig(
                "weights must be nonnegative and sum to 1".into(),
            ));
        }
        if constraint == Constraint::Sphere {
            for (i, p) in self.points.iter().enumerate() {
                if (norm(p) - 1.0).abs() > 1e-9 {
                    return Err(LabError::DegenerateConfig(format!(
                        "point {i} is off the unit sphere (norm {})",
                        norm(p)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Generalized loss evaluated on a latent configuration (the invariant form).
pub fn generalized_loss(z: &LatentConfiguration, cfg: &SimilarityConfig) -> f64 {
    generalized_loss_with(z, cfg, Execution::default())
}

pub fn generalized_loss_with(
    z: &LatentConfiguration,
    cfg: &SimilarityConfig,
    exec: Execution,
) -> f64 {
    let e0 = cfg.eta_at(0.0);
    let n = z.len();
    sum_indexed(exec, n, |i| {
        let g = mean_similarity(z, cfg, i) / e0;
        z.weights[i] * cfg.psi.eval(g)
    })
}

/// `G_i` without the eta(0) normalization: `sum_j w_j eta(|z_i - z_j|^2/2)`.
pub(crate) fn mean_similarity(z: &LatentConfiguration, cfg: &SimilarityConfig, i: usize) -> f64 {
    let terms: Vec<f64> = z
        .points
        .iter()
        .zip(&z.weights)
        .map(|(p, &w)| w * cfg.eta_at(dist_sq(&z.points[i], p) / 2.0))
        .collect();
    pairwise_sum(&terms)
}

fn cosine_sim(a: &[f64], b: &[f64], ia: usize, ib: usize) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 {
        return Err(LabError::ZeroNormEmbedding { index: ia });
    }
    if nb == 0.0 {
        return Err(LabError::ZeroNormEmbedding { index: ib });
    }
    Ok(dot(a, b) / (na * nb))
}

/// The original NT-Xent loss with cosine similarity and the `x != y`
/// indicator, Monte-Carlo averaged over perturbation pairs `(T, T')`.
pub fn nt_xent_original<F>(
    points: &[Vec<f64>],
    embed: F,
    perturb: &PerturbationSet,
    tau: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = points.len();
    let samples = match perturb {
        PerturbationSet::IdentityOnly => 1,
        _ => mc_samples.max(1),
    };
    let mut total = Vec::with_capacity(samples);
    for s in 0..samples {
        let view_t: Vec<Vec<f64>> = points
            .iter()
            .map(|x| embed(&perturb.apply(x, seed ^ (2 * s as u64 + 1))))
            .collect();
        let view_tp: Vec<Vec<f64>> = points
            .iter()
            .map(|x| embed(&perturb.apply(x, seed ^ (2 * s as u64 + 2))))
            .collect();
        let mut per_point = Vec::with_capacity(n);
        for i in 0..n {
            let mut numerator = 0.0;
            for view in [&view_t, &view_tp] {
                let mut inner = Vec::with_capacity(n);
                for (y, vy) in view.iter().enumerate() {
                    if y == i {
                        continue; // the x != y indicator
                    }
                    inner.push((cosine_sim(&view_t[i], vy, i, y)? / tau).exp());
                }
                numerator += pairwise_sum(&inner) / n as f64;
            }
            let denom = (cosine_sim(&view_t[i], &view_tp[i], i, i)? / tau).exp();
            per_point.push((1.0 + numerator / denom).ln());
        }
        total.push(pairwise_sum(&per_point) / n as f64);
    }
    Ok(pairwise_sum(&total) / samples as f64)
}

/// Invariant latent reformulation of the original NT-Xent loss (the factor-2
/// form: both views contribute the same repulsion sum once `f` is invariant).
/// The generalized loss relates to this by dropping the indicator and the
/// factor 2, and replacing cosine similarity with the `eta` profile.
pub fn nt_xent_invariant_form(z: &LatentConfiguration, tau: f64) -> Result<f64> {
    let n = z.len();
    let mut per_point = Vec::with_capacity(n);
    for i in 0..n {
        let mut inner = Vec::with_capacity(n);
        for j in 0..n {
            if j == i {
                continue;
            }
            inner.push(
                n as f64
                    * z.weights[j]
                    * (cosine_sim(&z.points[i], &z.points[j], i, j)? / tau).exp(),
            );
        }
        let repulsion = 2.0 * pairwise_sum(&inner) / n as f64;
        per_point.push(z.weights[i] * (1.0 + repulsion).ln());
    }
    Ok(pairwise_sum(&per_point))
}

/// Generalized two-view loss with explicit perturbation pairs, Monte-Carlo
/// estimated. Returns `(mean, standard_error)`.
pub fn full_loss_two_view_with_stderr<F>(
    data: &ClusteredDataset,
    embed: F,
    perturb: &PerturbationSet,
    cfg: &SimilarityConfig,
    mc_samples: usize,
    seed: u64,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    cfg.eta_zero()?;
    let samples = match perturb {
        PerturbationSet::IdentityOnly => 1,
        _ => mc_samples.max(1),
    };
    let mut values = Vec::with_capacity(samples);
    for s in 0..samples {
        let view_t: Vec<Vec<f64>> = data
            .points
            .iter()
            .map(|x| embed(&perturb.apply(x, seed ^ (2 * s as u64 + 1))))
            .collect();
        let view_tp: Vec<Vec<f64>> = data
            .points
            .iter()
            .map(|x| embed(&perturb.apply(x, seed ^ (2 * s as u64 + 2))))
            .collect();
        values.push(two_view_sample_loss(&view_t, &view_tp, cfg));
    }
    let mean = pairwise_sum(&values) / samples as f64;
    let var = if samples > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (samples - 1) as f64
    } else {
        0.0
    };
    Ok((mean, (var / samples as f64).sqrt()))
}

pub fn full_loss_two_view<F>(
    data: &ClusteredDataset,
    embed: F,
    perturb: &PerturbationSet,
    cfg: &SimilarityConfig,
    mc_samples: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    full_loss_two_view_with_stderr(data, embed, perturb, cfg, mc_samples, seed).map(|(m, _)| m)
}

/// Exact two-view loss for enumerable perturbation sets: the nu-integral is a
/// uniform double sum over the displacement list.
pub fn full_loss_two_view_exact<F>(
    points: &[Vec<f64>],
    embed: F,
    perturb: &PerturbationSet,
    cfg: &SimilarityConfig,
) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    cfg.eta_zero()?;
    let ambient = points.first().map_or(0, |p| p.len());
    let draws = perturb.enumerate(ambient)?;
    let views: Vec<Vec<Vec<f64>>> = draws
        .iter()
        .map(|t| {
            points
                .iter()
                .map(|x| embed(&apply_displacement(x, t)))
                .collect()
        })
        .collect();
    let m = draws.len();
    let mut terms = Vec::with_capacity(m * m);
    for vt in &views {
        for vtp in &views {
            terms.push(two_view_sample_loss(vt, vtp, cfg));
        }
    }
    Ok(pairwise_sum(&terms) / (m * m) as f64)
}

fn two_view_sample_loss(view_t: &[Vec<f64>], view_tp: &[Vec<f64>], cfg: &SimilarityConfig) -> f64 {
    let n = view_t.len();
    let per_point: Vec<f64> = (0..n)
        .map(|i| {
            let inner: Vec<f64> = view_tp
                .iter()
                .map(|y| cfg.eta_at(dist_sq(&view_t[i], y) / 2.0))
                .collect();
            let numerator = pairwise_sum(&inner) / n as f64;
            let denom = cfg.eta_at(dist_sq(&view_t[i], &view_tp[i]) / 2.0);
            cfg.psi.eval(numerator / denom)
        })
        .collect();
    pairwise_sum(&per_point) / n as f64
}

/// Latent VICReg objective: `lambda2 * v(z) + lambda3 * c(z)` with
/// `v` = mean over dimensions of `max(0, 1 - std)` and `c` = sum of squared
/// off-diagonal covariance entries. Both use population (1/n) statistics.
pub fn vicreg_latent(z: &LatentConfiguration, lambda2: f64, lambda3: f64) -> Result<f64> {
    let n = z.len();
    if n < 2 {
        return Err(LabError::DegenerateConfig(
            "VICReg variance needs at least 2 points".into(),
        ));
    }
    let d = z.dim();
    let mean: Vec<f64> = (0..d)
        .map(|k| z.points.iter().map(|p| p[k]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for p in &z.points {
        for k in 0..d {
            for l in 0..d {
                cov[k][l] += (p[k] - mean[k]) * (p[l] - mean[l]) / n as f64;
            }
        }
    }
    let v = (0..d)
        .map(|k| (1.0 - cov[k][k].sqrt()).max(0.0))
        .sum::<f64>()
        / d as f64;
    let mut c = 0.0;
    for (k, row) in cov.iter().enumerate() {
        for (l, v) in row.iter().enumerate() {
            if k != l {
                c += v * v;
            }
        }
    }
    Ok(lambda2 * v + lambda3 * c)
}

/// Latent BYOL objective: mean squared displacement under the predictor `q`.
pub fn byol_latent<Q>(z: &LatentConfiguration, q: Q) -> f64
where
    Q: Fn(&[f64]) -> Vec<f64>,
{
    let terms: Vec<f64> = z
        .points
        .iter()
        .zip(&z.weights)
        .map(|(p, &w)| w * dist_sq(&q(p), p))
        .collect();
    pairwise_sum(&terms)
}

/// Monte-Carlo helper: a fresh deterministic sub-seed for stream `k`.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed.wrapping_add(k).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.gen()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn config(tau: f64) -> SimilarityConfig {
        SimilarityConfig::nt_xent(tau)
    }

    fn two_point_antipodal() -> LatentConfiguration {
        LatentConfiguration::uniform(vec![vec![1.0, 0.0], vec![-1.0, 0.0]])
    }

    #[test]
    fn single_point_loss_is_log_two() {
        let z = LatentConfiguration::uniform(vec![vec![1.0, 0.0]]);
        assert_relative_eq!(
            generalized_loss(&z, &config(1.0)),
            2.0f64.ln(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn antipodal_pair_matches_direct_enumeration() {
        // Direct 2-point enumeration: G = (eta(0) + eta(2)) / 2 for both points.
        let cfg = config(1.0);
        let expected = (1.0 + (1.0 + (-2.0f64).exp()) / 2.0).ln();
        assert_relative_eq!(
            generalized_loss(&two_point_antipodal(), &cfg),
            expected,
            epsilon = 1e-15
        );
    }

    #[test]
    fn coincident_points_give_log_two_regardless_of_count() {
        for k in [1usize, 3, 17] {
            let z = LatentConfiguration::uniform(vec![vec![0.3, 0.7]; k]);
            assert_relative_eq!(
                generalized_loss(&z, &config(0.5)),
                2.0f64.ln(),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn loss_is_permutation_invariant() {
        let pts = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.6, 0.8],
        ];
        let cfg = config(0.3);
        let a = generalized_loss(&LatentConfiguration::uniform(pts.clone()), &cfg);
        let mut rev = pts;
        rev.reverse();
        let b = generalized_loss(&LatentConfiguration::uniform(rev), &cfg);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn moving_points_closer_increases_loss() {
        let cfg = config(0.5);
        let far = LatentConfiguration::uniform(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let theta: f64 = 0.4;
        let near =
            LatentConfiguration::uniform(vec![vec![1.0, 0.0], vec![theta.cos(), theta.sin()]]);
        assert!(generalized_loss(&near, &cfg) > generalized_loss(&far, &cfg));
    }

    #[test]
    fn nt_xent_single_point_is_zero() {
        let pts = vec![vec![1.0, 0.0]];
        let v = nt_xent_original(
            &pts,
            |x| x.to_vec(),
            &PerturbationSet::IdentityOnly,
            1.0,
            1,
            0,
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn nt_xent_antipodal_matches_direct_summation_oracle() {
        // Direct-summation oracle: enumerate both choices of x exactly.
        // For each x: numerator = 2 * (1/2) * e^{-1/tau}, denominator = e^{1/tau}.
        let tau = 1.0;
        let expected = (1.0 + (-1.0f64 / tau).exp() / (1.0f64 / tau).exp()).ln();
        let pts = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let v = nt_xent_original(
            &pts,
            |x| x.to_vec(),
            &PerturbationSet::IdentityOnly,
            tau,
            1,
            0,
        )
        .unwrap();
        assert_relative_eq!(v, expected, epsilon = 1e-14);
    }

    #[test]
    fn nt_xent_is_scale_invariant_in_the_embedding() {
        let pts = vec![vec![1.0, 0.2], vec![-0.4, 1.0], vec![0.3, -0.9]];
        let p = PerturbationSet::IdentityOnly;
        let a = nt_xent_original(&pts, |x| x.to_vec(), &p, 0.7, 1, 0).unwrap();
        let b = nt_xent_original(&pts, |x| crate::vecmath::scale(x, 2.0), &p, 0.7, 1, 0).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-14);
    }

    #[test]
    fn nt_xent_zero_embedding_reports_offender() {
        let pts = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        let err = nt_xent_original(
            &pts,
            |x| x.to_vec(),
            &PerturbationSet::IdentityOnly,
            1.0,
            1,
            0,
        )
        .unwrap_err();
        match err {
            LabError::ZeroNormEmbedding { index } => assert_eq!(index, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn two_view_identity_collapses_to_generalized_loss() {
        let spec = crate::dataset::ClusterSpec {
            ambient_dim: 3,
            latent_dim: 2,
            cluster_sizes: vec![2, 2],
            center_norms: vec![1.0, 1.0],
            noise_bound: 0.1,
            seed: 5,
        };
        let data = ClusteredDataset::generate(&spec).unwrap();
        let cfg = SimilarityConfig {
            constraint: Constraint::Unconstrained,
            ..config(0.5)
        };
        let embed = |x: &[f64]| vec![x[0], x[1]];
        let two_view =
            full_loss_two_view(&data, embed, &PerturbationSet::IdentityOnly, &cfg, 1, 0).unwrap();
        let z = LatentConfiguration::uniform(data.points.iter().map(|x| embed(x)).collect());
        assert_relative_eq!(two_view, generalized_loss(&z, &cfg), epsilon = 1e-13);
    }

    #[test]
    fn non_invariant_embed_pays_more_than_its_invariant_projection() {
        // Hand-built 2-point instance with an exact finite-list nu.
        let points = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let perturb = PerturbationSet::FiniteList {
            draws: vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 0.5]],
        };
        let cfg = SimilarityConfig {
            constraint: Constraint::Unconstrained,
            ..config(0.5)
        };
        // Non-invariant: reads the orthogonal coordinate.
        let noninv = |x: &[f64]| vec![x[0] + x[2], x[1]];
        // Its invariant projection ignores it.
        let inv = |x: &[f64]| vec![x[0], x[1]];
        let a = full_loss_two_view_exact(&points, noninv, &perturb, &cfg).unwrap();
        let b = full_loss_two_view_exact(&points, inv, &perturb, &cfg).unwrap();
        assert!(a > b, "non-invariant {a} should exceed invariant {b}");
    }

    #[test]
    fn eta_zero_table_is_rejected() {
        let cfg = SimilarityConfig {
            tau: 1.0,
            psi: Psi::Log1p,
            eta: Eta::Table {
                knots: vec![(0.0, 0.0), (1.0, 0.0)],
            },
            constraint: Constraint::Unconstrained,
        };
        assert!(cfg.eta_zero().is_err());
    }

    #[test]
    fn vicreg_identical_points() {
        let z = LatentConfiguration::uniform(vec![vec![0.5, -0.5]; 4]);
        // Zero spread: v at its maximum penalty 1, c = 0.
        assert_relative_eq!(vicreg_latent(&z, 1.0, 1.0).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn vicreg_identity_rows_match_direct_covariance_oracle() {
        // Direct covariance computation for the rows of I_n: every off-diagonal
        // entry equals -1/n^2, so c = d(d-1)/n^4. v uses std = sqrt(1/n - 1/n^2).
        let n = 4usize;
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let z = LatentConfiguration::uniform(pts);
        let nf = n as f64;
        let var = 1.0 / nf - 1.0 / (nf * nf);
        let expected_v = (1.0 - var.sqrt()).max(0.0);
        let expected_c = (nf * (nf - 1.0)) * (1.0 / (nf * nf)).powi(2);
        assert_relative_eq!(
            vicreg_latent(&z, 1.0, 0.0).unwrap(),
            expected_v,
            epsilon = 1e-13
        );
        assert_relative_eq!(
            vicreg_latent(&z, 0.0, 1.0).unwrap(),
            expected_c,
            epsilon = 1e-13
        );
    }

    #[test]
    fn vicreg_scales_linearly_in_the_weights() {
        let z = LatentConfiguration::uniform(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.3, 0.4]]);
        let a = vicreg_latent(&z, 1.0, 1.0).unwrap();
        let b = vicreg_latent(&z, 2.0, 2.0).unwrap();
        assert_relative_eq!(b, 2.0 * a, epsilon = 1e-13);
    }

    #[test]
    fn vicreg_rejects_single_point() {
        let z = LatentConfiguration::uniform(vec![vec![1.0]]);
        assert!(vicreg_latent(&z, 1.0, 1.0).is_err());
    }

    #[test]
    fn byol_identity_predictor_is_zero() {
        let z = two_point_antipodal();
        assert_eq!(byol_latent(&z, |y: &[f64]| y.to_vec()), 0.0);
    }

    #[test]
    fn byol_doubling_predictor_on_unit_vectors() {
        let z = two_point_antipodal();
        assert_relative_eq!(
            byol_latent(&z, |y: &[f64]| crate::vecmath::scale(y, 2.0)),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn byol_affine_predictor_matches_brute_force() {
        let pts = vec![
            vec![0.1, 0.2],
            vec![-0.5, 0.4],
            vec![0.9, -0.3],
            vec![0.0, 1.1],
            vec![-0.7, -0.7],
        ];
        let q = |y: &[f64]| vec![2.0 * y[0] - 0.3 * y[1] + 0.1, 0.5 * y[1] + y[0]];
        let z = LatentConfiguration::uniform(pts.clone());
        let mut oracle = 0.0;
        for p in &pts {
            oracle += dist_sq(&q(p), p) / pts.len() as f64;
        }
        assert_relative_eq!(byol_latent(&z, q), oracle, epsilon = 1e-14);
    }

    #[test]
    fn invariant_form_keeps_factor_two() {
        // n=2 antipodal, tau=1: per-point repulsion 2 * (1/2) * e^{-1}.
        let v = nt_xent_invariant_form(&two_point_antipodal(), 1.0).unwrap();
        assert_relative_eq!(v, (1.0 + (-1.0f64).exp()).ln(), epsilon = 1e-14);
    }
}

//! First and second variations of the generalized loss on discrete latent
//! configurations, plus stationarity certificates.
//!
//! [`invariant_gradient`] returns the functional gradient density
//!
//! ```text
//! g_i = sum_j w_j (Psi'(G_i) + Psi'(G_j)) eta'(|z_i - z_j|^2 / 2) (z_i - z_j) / eta(0)
//! ```
//!
//! so the differential of the loss is `dL = sum_i w_i <g_i, dz_i>`. With
//! uniform weights the coordinate partial `dL/dz_i` equals `g_i / n`; the
//! finite-difference oracles in the tests check exactly that relation.

use crate::dataset::{apply_displacement, PerturbationSet};
use crate::error::Result;
use crate::exec::{map_indexed, pairwise_sum, Execution};
use crate::losses::{
    full_loss_two_view_exact, generalized_loss, mean_similarity, Constraint, LatentConfiguration,
    SimilarityConfig,
};
use crate::vecmath::{dist_sq, dot, norm, sub, tangential};

#[derive(Debug, Clone)]
pub struct VariationReport {
    /// Functional gradient at each point.
    pub euclidean: Vec<Vec<f64>>,
    /// Tangential projection onto the sphere (sphere mode only).
    pub tangential: Option<Vec<Vec<f64>>>,
    pub max_euclidean_norm: f64,
    pub max_tangential_norm: f64,
    /// Per-point Lagrange multiplier estimates `lambda_i = <g_i, z_i>`.
    pub lambda: Vec<f64>,
    /// Max spread of the multiplier estimates (symmetry diagnostic).
    pub lambda_spread: f64,
}

/// Gradient of the generalized loss in the invariant latent form.
pub fn invariant_gradient(z: &LatentConfiguration, cfg: &SimilarityConfig) -> VariationReport {
    invariant_gradient_with(z, cfg, Execution::default())
}

pub fn invariant_gradient_with(
    z: &LatentConfiguration,
    cfg: &SimilarityConfig,
    exec: Execution,
) -> VariationReport {
    let n = z.len();
    let d = z.dim();
    let e0 = cfg.eta_at(0.0);
    let ratios: Vec<f64> = (0..n).map(|i| mean_similarity(z, cfg, i) / e0).collect();
    let psi_d: Vec<f64> = ratios.iter().map(|&g| cfg.psi.deriv(g)).collect();

    let euclidean: Vec<Vec<f64>> = map_indexed(exec, n, |i| {
        let mut acc = vec![0.0; d];
        for j in 0..n {
            if i == j {
                continue;
            }
            let coeff = z.weights[j]
                * (psi_d[i] + psi_d[j])
                * cfg.eta_deriv_at(dist_sq(&z.points[i], &z.points[j]) / 2.0)
                / e0;
            for (k, a) in acc.iter_mut().enumerate() {
                *a += coeff * (z.points[i][k] - z.points[j][k]);
            }
        }
        acc
    });

    let lambda: Vec<f64> = euclidean
        .iter()
        .zip(&z.points)
        .map(|(g, p)| dot(g, p))
        .collect();
    let lambda_spread = match lambda.len() {
        0 => 0.0,
        _ => {
            let max = lambda.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
            max - min
        }
    };
    let max_euclidean_norm = euclidean.iter().map(|g| norm(g)).fold(0.0, f64::max);

    let (tangential_grads, max_tangential_norm) = if cfg.constraint == Constraint::Sphere {
        let t: Vec<Vec<f64>> = euclidean
            .iter()
            .zip(&z.points)
            .map(|(g, p)| tangential(g, p))
            .collect();
        let m = t.iter().map(|g| norm(g)).fold(0.0, f64::max);
        (Some(t), m)
    } else {
        (None, max_euclidean_norm)
    };

    VariationReport {
        euclidean,
        tangential: tangential_grads,
        max_euclidean_norm,
        max_tangential_norm,
        lambda,
        lambda_spread,
    }
}

/// The full Euler-Lagrange pairing `<dL(f), h>` for an arbitrary (possibly
/// non-invariant) embedding, with the nu-integral taken as an exact sum over
/// an enumerable perturbation set. This is the exact directional derivative
/// `d/de L(f + e h)` of [`full_loss_two_view_exact`] at `e = 0`.
pub fn first_variation_pairing<F, H>(
    points: &[Vec<f64>],
    embed: F,
    perturb: &PerturbationSet,
    cfg: &SimilarityConfig,
    direction: H,
) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
    H: Fn(&[f64]) -> Vec<f64>,
{
    cfg.eta_zero()?;
    let n = points.len();
    let ambient = points.first().map_or(0, |p| p.len());
    let draws = perturb.enumerate(ambient)?;
    let m = draws.len();

    // Precompute f and h at every view of every point.
    let f_views: Vec<Vec<Vec<f64>>> = draws
        .iter()
        .map(|t| {
            points
                .iter()
                .map(|x| embed(&apply_displacement(x, t)))
                .collect()
        })
        .collect();
    let h_views: Vec<Vec<Vec<f64>>> = draws
        .iter()
        .map(|t| {
            points
                .iter()
                .map(|x| direction(&apply_displacement(x, t)))
                .collect()
        })
        .collect();

    let mut terms = Vec::with_capacity(m * m * n);
    for (a, (ft, ht)) in f_views.iter().zip(&h_views).enumerate() {
        for (b, (ftp, htp)) in f_views.iter().zip(&h_views).enumerate() {
            let _ = (a, b);
            for i in 0..n {
                // G = N / denom for this (x_i, T, T').
                let etas: Vec<f64> = (0..n)
                    .map(|y| cfg.eta_at(dist_sq(&ft[i], &ftp[y]) / 2.0))
                    .collect();
                let numer = pairwise_sum(&etas) / n as f64;
                let denom = etas[i];
                let g_ratio = numer / denom;
                let psi_d = cfg.psi.deriv(g_ratio);

                // dN: sum over y of eta' <f(Tx)-f(T'y), h(Tx)-h(T'y)>.
                let dn_terms: Vec<f64> = (0..n)
                    .map(|y| {
                        let df = sub(&ft[i], &ftp[y]);
                        let dh = sub(&ht[i], &htp[y]);
                        cfg.eta_deriv_at(dist_sq(&ft[i], &ftp[y]) / 2.0) * dot(&df, &dh)
                    })
                    .collect();
                let dn = pairwise_sum(&dn_terms) / n as f64;

                // dDenom: eta' at the positive pair.
                let df_pos = sub(&ft[i], &ftp[i]);
                let dh_pos = sub(&ht[i], &htp[i]);
                let dd = cfg.eta_deriv_at(dist_sq(&ft[i], &ftp[i]) / 2.0) * dot(&df_pos, &dh_pos);

                terms.push(psi_d * (dn / denom - g_ratio * dd / denom));
            }
        }
    }
    Ok(pairwise_sum(&terms) / (m * m * n) as f64)
}

/// Stationarity certificate for a sphere-constrained configuration.
pub fn stationarity_check(
    z: &LatentConfiguration,
    cfg: &SimilarityConfig,
    tol: f64,
) -> (bool, VariationReport) {
    let sphere_cfg = SimilarityConfig {
        constraint: Constraint::Sphere,
        ..cfg.clone()
    };
    let report = invariant_gradient(z, &sphere_cfg);
    (report.max_tangential_norm <= tol, report)
}

#[derive(Debug, Clone)]
pub struct SecondVariationReport {
    pub value: f64,
    pub sigma: f64,
    /// Whether the directional condition held with sigma > 3 K^2 tau.
    pub condition_satisfied: bool,
}

/// Second variation of the loss with `Psi(t) = log(1 + t/2)` and
/// `eta(t) = exp(-t/(2 tau))` at a K-cluster symmetric configuration, in the
/// direction `h` (one vector per point). Evaluates the three-term expression
/// as an exact finite sum over the discrete measure.
///
/// `num_clusters` is K; the directional condition asks for a `sigma > 3 K^2 tau`
/// with `<z_i - z_j, h_i - h_j>^2 >= sigma |h_i - h_j|^2` on all distinct
/// cluster pairs, and the value is strictly positive whenever it holds.
pub fn second_variation(
    z: &LatentConfiguration,
    tau: f64,
    h: &[Vec<f64>],
    num_clusters: usize,
) -> Result<SecondVariationReport> {
    let n = z.len();
    if h.len() != n {
        return Err(crate::error::LabError::DimMismatch {
            expected: n,
            got: h.len(),
        });
    }
    let eta = |t: f64| (-t / (2.0 * tau)).exp();
    // G(x_i) = E_y eta(|x_i - y|^2) over the discrete measure; the similarity
    // profile here takes the full squared distance per the 2 tau scaling.
    let g: Vec<f64> = (0..n)
        .map(|i| {
            let terms: Vec<f64> = (0..n)
                .map(|j| z.weights[j] * eta(dist_sq(&z.points[i], &z.points[j])))
                .collect();
            pairwise_sum(&terms)
        })
        .collect();

    let mut term1 = Vec::with_capacity(n);
    let mut term2 = Vec::with_capacity(n);
    let mut term3 = Vec::with_capacity(n);
    for i in 0..n {
        let a = 1.0 / (1.0 + g[i] * g[i] / 2.0);
        let mut inner1 = 0.0;
        let mut inner2 = 0.0;
        let mut inner3 = 0.0;
        for j in 0..n {
            let w = z.weights[j] * eta(dist_sq(&z.points[i], &z.points[j]));
            let dx = sub(&z.points[i], &z.points[j]);
            let dh = sub(&h[i], &h[j]);
            let pairing = dot(&dx, &dh);
            inner1 += w * pairing;
            inner2 += w * pairing * pairing;
            inner3 += w * dot(&dh, &dh);
        }
        term1.push(-z.weights[i] / (tau * tau) * a * a * inner1 * inner1);
        term2.push(z.weights[i] / (tau * tau) * a * inner2);
        term3.push(-z.weights[i] / tau * a * inner3);
    }
    let value = pairwise_sum(&term1) + pairwise_sum(&term2) + pairwise_sum(&term3);

    // Largest sigma supported by the direction on distinct pairs.
    let mut sigma = f64::INFINITY;
    let mut any_pair = false;
    for i in 0..n {
        for j in 0..n {
            let dh2 = dist_sq(&h[i], &h[j]);
            if dh2 <= 1e-30 {
                continue;
            }
            any_pair = true;
            let pairing = dot(&sub(&z.points[i], &z.points[j]), &sub(&h[i], &h[j]));
            sigma = sigma.min(pairing * pairing / dh2);
        }
    }
    if !any_pair {
        sigma = 0.0;
    }
    let k = num_clusters as f64;
    let condition_satisfied = any_pair && sigma > 3.0 * k * k * tau;

    Ok(SecondVariationReport {
        value,
        sigma,
        condition_satisfied,
    })
}

/// Max gradient norm of the scaled configurations `k * z` for each scale.
/// With eta profiles satisfying `t eta'(t) -> 0`, the sequence decays to 0.
pub fn scaled_map_gradient_decay(
    z: &LatentConfiguration,
    cfg: &SimilarityConfig,
    scales: &[f64],
) -> Vec<f64> {
    let free_cfg = SimilarityConfig {
        constraint: Constraint::Unconstrained,
        ..cfg.clone()
    };
    scales
        .iter()
        .map(|&k| {
            let scaled = LatentConfiguration {
                points: z
                    .points
                    .iter()
                    .map(|p| crate::vecmath::scale(p, k))
                    .collect(),
                weights: z.weights.clone(),
            };
            invariant_gradient(&scaled, &free_cfg).max_euclidean_norm
        })
        .collect()
}

/// Central finite difference of the generalized latent loss with respect to
/// one coordinate of one point. Test oracle; independent of the analytic path.
pub fn fd_loss_partial(
    z: &LatentConfiguration,
    cfg: &SimilarityConfig,
    point: usize,
    coord: usize,
    step: f64,
) -> f64 {
    let mut plus = z.clone();
    plus.points[point][coord] += step;
    let mut minus = z.clone();
    minus.points[point][coord] -= step;
    (generalized_loss(&plus, cfg) - generalized_loss(&minus, cfg)) / (2.0 * step)
}

pub fn roots_of_unity(n: usize) -> LatentConfiguration {
    let pts = (0..n)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            vec![t.cos(), t.sin()]
        })
        .collect();
    LatentConfiguration::uniform(pts)
}

/// FD oracle for the Euler-Lagrange pairing: symmetric difference of the exact
/// two-view loss along `f + e h`.
pub fn fd_pairing_oracle<F, H>(
    points: &[Vec<f64>],
    embed: F,
    perturb: &PerturbationSet,
    cfg: &SimilarityConfig,
    direction: H,
    step: f64,
) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + Copy,
    H: Fn(&[f64]) -> Vec<f64> + Copy,
{
    let shifted = |eps: f64| {
        move |x: &[f64]| {
            let f = embed(x);
            let h = direction(x);
            f.iter()
                .zip(&h)
                .map(|(a, b)| a + eps * b)
                .collect::<Vec<f64>>()
        }
    };
    let plus = full_loss_two_view_exact(points, shifted(step), perturb, cfg)?;
    let minus = full_loss_two_view_exact(points, shifted(-step), perturb, cfg)?;
    Ok((plus - minus) / (2.0 * step))
}

//! Clustered dataset generator: mutually orthogonal cluster centers supported
//! on the first `d` coordinates, bounded noise, and a perturbation model that
//! displaces points only in the complementary coordinates `d+1..D`.
//!
//! Randomness comes from `ChaCha8Rng` (a counter-based stream cipher RNG), so
//! generation is reproducible bit-for-bit across platforms given the seed.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};
use crate::vecmath::{dist_sq, norm};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    /// Ambient dimension D.
    pub ambient_dim: usize,
    /// Latent (manifold) dimension d, d <= D.
    pub latent_dim: usize,
    /// Points per cluster; the list length is the number of clusters N.
    pub cluster_sizes: Vec<usize>,
    /// Norm of each cluster center.
    pub center_norms: Vec<f64>,
    /// Bound on the noise displacement of every point.
    pub noise_bound: f64,
    pub seed: u64,
}

impl ClusterSpec {
    pub fn num_clusters(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn num_points(&self) -> usize {
        self.cluster_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n_clusters = self.num_clusters();
        if n_clusters == 0 {
            return Err(LabError::InvalidSpec("need at least one cluster".into()));
        }
        if n_clusters > self.latent_dim {
            return Err(LabError::InvalidSpec(format!(
                "cannot place {} orthogonal centers in a {}-dim subspace",
                n_clusters, self.latent_dim
            )));
        }
        if self.latent_dim > self.ambient_dim {
            return Err(LabError::InvalidSpec(format!(
                "latent_dim {} exceeds ambient_dim {}",
                self.latent_dim, self.ambient_dim
            )));
        }
        if self.cluster_sizes.contains(&0) {
            return Err(LabError::InvalidSpec("cluster sizes must be >= 1".into()));
        }
        if self.center_norms.len() != n_clusters {
            return Err(LabError::InvalidSpec(
                "center_norms length must match cluster_sizes".into(),
            ));
        }
        if self.center_norms.iter().any(|&r| r <= 0.0 || r.is_nan()) {
            return Err(LabError::InvalidSpec(
                "center norms must be positive".into(),
            ));
        }
        if self.noise_bound < 0.0 {
            return Err(LabError::InvalidSpec(
                "noise bound must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ClusteredDataset {
    pub points: Vec<Vec<f64>>,
    pub centers: Vec<Vec<f64>>,
    /// Cluster index of each point.
    pub assignment: Vec<usize>,
    pub ambient_dim: usize,
    pub latent_dim: usize,
    pub noise_bound: f64,
}

impl ClusteredDataset {
    /// Generates the dataset from a spec. Centers are the scaled standard-basis
    /// vectors `r_q * e_q`, which realizes the mutual-orthogonality condition.
    /// Noise is split into an in-manifold part (first `d` coordinates) and an
    /// orthogonal part (coordinates `d+1..D`), each drawn uniformly in a ball
    /// of radius `noise_bound / 2`, so the total displacement stays below
    /// `noise_bound`.
    pub fn generate(spec: &ClusterSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.latent_dim;
        let big_d = spec.ambient_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

        let centers: Vec<Vec<f64>> = (0..spec.num_clusters())
            .map(|q| {
                let mut c = vec![0.0; big_d];
                c[q] = spec.center_norms[q];
                c
            })
            .collect();

        let mut points = Vec::with_capacity(spec.num_points());
        let mut assignment = Vec::with_capacity(spec.num_points());
        let half = spec.noise_bound / 2.0;
        for (q, &size) in spec.cluster_sizes.iter().enumerate() {
            for _ in 0..size {
                let mut x = centers[q].clone();
                if half > 0.0 {
                    let inside = sample_ball(&mut rng, d, half);
                    for (k, v) in inside.iter().enumerate() {
                        x[k] += v;
                    }
                    if big_d > d {
                        let ortho = sample_ball(&mut rng, big_d - d, half);
                        for (k, v) in ortho.iter().enumerate() {
                            x[d + k] += v;
                        }
                    }
                }
                points.push(x);
                assignment.push(q);
            }
        }

        let ds = Self {
            points,
            centers,
            assignment,
            ambient_dim: big_d,
            latent_dim: d,
            noise_bound: spec.noise_bound,
        };
        ds.assert_noise_bound();
        Ok(ds)
    }

    /// Builds a dataset from explicit centers (not required to be orthogonal;
    /// the Fig.-3-style comparison places collinear centers on one axis).
    /// Points are drawn around each center with the same split-ball noise as
    /// [`ClusteredDataset::generate`].
    pub fn from_centers(
        centers: Vec<Vec<f64>>,
        cluster_sizes: &[usize],
        latent_dim: usize,
        noise_bound: f64,
        seed: u64,
    ) -> Result<Self> {
        if centers.len() != cluster_sizes.len() {
            return Err(LabError::InvalidSpec(
                "centers length must match cluster_sizes".into(),
            ));
        }
        let big_d = centers
            .first()
            .map(|c| c.len())
            .ok_or_else(|| LabError::InvalidSpec("need at least one cluster".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = noise_bound / 2.0;
        let mut points = Vec::new();
        let mut assignment = Vec::new();
        for (q, &size) in cluster_sizes.iter().enumerate() {
            for _ in 0..size {
                let mut x = centers[q].clone();
                if half > 0.0 {
                    let inside = sample_ball(&mut rng, latent_dim, half);
                    for (k, v) in inside.iter().enumerate() {
                        x[k] += v;
                    }
                    if big_d > latent_dim {
                        let ortho = sample_ball(&mut rng, big_d - latent_dim, half);
                        for (k, v) in ortho.iter().enumerate() {
                            x[latent_dim + k] += v;
                        }
                    }
                }
                points.push(x);
                assignment.push(q);
            }
        }
        Ok(Self {
            points,
            centers,
            assignment,
            ambient_dim: big_d,
            latent_dim,
            noise_bound,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_center_distance(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.assignment)
            .map(|(x, &q)| dist_sq(x, &self.centers[q]).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn max_center_inner_product(&self) -> f64 {
        let mut max = 0.0f64;
        for (q, a) in self.centers.iter().enumerate() {
            for b in self.centers.iter().skip(q + 1) {
                max = max.max(crate::vecmath::dot(a, b).abs());
            }
        }
        max
    }

    fn assert_noise_bound(&self) {
        if self.noise_bound > 0.0 {
            let max = self.max_center_distance();
            assert!(
                max < self.noise_bound,
                "noise bound violated: {max} >= {}",
                self.noise_bound
            );
        }
    }

    /// CSV export with header `idx,cluster,x_0,...,x_{D-1}`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("idx,cluster");
        for k in 0..self.ambient_dim {
            write!(out, ",x_{k}").unwrap();
        }
        out.push('\n');
        for (i, (x, &q)) in self.points.iter().zip(&self.assignment).enumerate() {
            write!(out, "{i},{q}").unwrap();
            for v in x {
                write!(out, ",{v:.17e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Re-imports a CSV produced by [`ClusteredDataset::to_csv`]. Centers are
    /// reconstructed as per-cluster means (sufficient for experiment replay).
    pub fn from_csv<R: Read>(reader: R, latent_dim: usize) -> Result<Self> {
        let reader = BufReader::new(reader);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| LabError::Parse("empty CSV".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "idx" || cols[1] != "cluster" {
            return Err(LabError::Parse(
                "expected header idx,cluster,x_0,...".into(),
            ));
        }
        let big_d = cols.len() - 2;
        let mut points = Vec::new();
        let mut assignment = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != big_d + 2 {
                return Err(LabError::Parse(format!("bad row: {line}")));
            }
            let q: usize = fields[1]
                .parse()
                .map_err(|e| LabError::Parse(format!("cluster index: {e}")))?;
            let x: Vec<f64> = fields[2..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| LabError::Parse(format!("coordinate: {e}")))?;
            points.push(x);
            assignment.push(q);
        }
        let n_clusters = assignment.iter().copied().max().map_or(0, |m| m + 1);
        let mut centers = vec![vec![0.0; big_d]; n_clusters];
        let mut counts = vec![0usize; n_clusters];
        for (x, &q) in points.iter().zip(&assignment) {
            counts[q] += 1;
            for (k, v) in x.iter().enumerate() {
                centers[q][k] += v;
            }
        }
        for (c, &cnt) in centers.iter_mut().zip(&counts) {
            if cnt > 0 {
                for v in c.iter_mut() {
                    *v /= cnt as f64;
                }
            }
        }
        Ok(Self {
            points,
            centers,
            assignment,
            ambient_dim: big_d,
            latent_dim,
            noise_bound: f64::INFINITY,
        })
    }
}

/// Uniform sample from the ball of radius `r` in `dim` dimensions.
fn sample_ball(rng: &mut ChaCha8Rng, dim: usize, r: f64) -> Vec<f64> {
    if dim == 0 || r == 0.0 {
        return vec![0.0; dim];
    }
    // Gaussian direction, radius via inverse CDF of the volume measure.
    let mut dir: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
    let n = norm(&dir);
    if n == 0.0 {
        dir[0] = 1.0;
    }
    let n = norm(&dir);
    let u: f64 = rng.gen::<f64>();
    let radius = r * u.powf(1.0 / dim as f64);
    dir.iter().map(|v| v / n * radius).collect()
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniforms per call keeps the stream layout simple.
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// The augmentation model: which displacements `T` the distribution nu ranges
/// over.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PerturbationSet {
    /// nu = {identity}.
    IdentityOnly,
    /// Uniform displacement in a ball of radius `magnitude` restricted to
    /// coordinates `latent_dim..D`; the first `latent_dim` coordinates of the
    /// input are never touched.
    OrthogonalNoise { latent_dim: usize, magnitude: f64 },
    /// An explicit finite list of displacement vectors (uniform nu over the
    /// list). Supports exact integration over nu.
    FiniteList { draws: Vec<Vec<f64>> },
}

impl PerturbationSet {
    /// Applies a perturbation sampled from nu (deterministic in `seed`).
    pub fn apply(&self, x: &[f64], seed: u64) -> Vec<f64> {
        match self {
            Self::IdentityOnly => x.to_vec(),
            Self::OrthogonalNoise {
                latent_dim,
                magnitude,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut out = x.to_vec();
                if x.len() > *latent_dim {
                    let disp = sample_ball(&mut rng, x.len() - latent_dim, *magnitude);
                    for (k, v) in disp.iter().enumerate() {
                        out[latent_dim + k] += v;
                    }
                }
                out
            }
            Self::FiniteList { draws } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let i = rng.gen_range(0..draws.len());
                apply_displacement(x, &draws[i])
            }
        }
    }

    /// The displacement list when nu is an exact finite measure, or an error
    /// for stochastic modes.
    pub fn enumerate(&self, ambient_dim: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            Self::IdentityOnly => Ok(vec![vec![0.0; ambient_dim]]),
            Self::FiniteList { draws } => Ok(draws.clone()),
            Self::OrthogonalNoise { .. } => Err(LabError::NonEnumerablePerturbation(
                "orthogonal-noise mode is a continuous distribution".into(),
            )),
        }
    }
}

pub fn apply_displacement(x: &[f64], disp: &[f64]) -> Vec<f64> {
    x.iter().zip(disp).map(|(a, b)| a + b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecmath::dot;

    fn spec(d_amb: usize, d: usize, sizes: &[usize], delta: f64) -> ClusterSpec {
        ClusterSpec {
            ambient_dim: d_amb,
            latent_dim: d,
            cluster_sizes: sizes.to_vec(),
            center_norms: vec![1.0; sizes.len()],
            noise_bound: delta,
            seed: 7,
        }
    }

    #[test]
    fn zero_noise_pins_points_to_centers() {
        let ds = ClusteredDataset::generate(&spec(4, 2, &[1, 1], 0.0)).unwrap();
        assert_eq!(ds.points[0], vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(ds.points[1], vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn too_many_clusters_rejected() {
        let err = ClusteredDataset::generate(&spec(2, 2, &[1, 1, 1, 1], 0.0));
        assert!(err.is_err());
    }

    #[test]
    fn noise_bound_holds_for_every_point() {
        let ds = ClusteredDataset::generate(&spec(3, 2, &[50, 50], 0.05)).unwrap();
        // Brute-force distance scan over all points.
        for (x, &q) in ds.points.iter().zip(&ds.assignment) {
            assert!(dist_sq(x, &ds.centers[q]).sqrt() < 0.05);
        }
    }

    #[test]
    fn centers_are_orthogonal() {
        let ds = ClusteredDataset::generate(&spec(6, 4, &[3, 3, 3, 3], 0.1)).unwrap();
        assert!(ds.max_center_inner_product() <= 1e-12);
        for c in &ds.centers {
            assert!(dot(c, c) > 0.0);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(5, 3, &[4, 4, 4], 0.2);
        let a = ClusteredDataset::generate(&s).unwrap();
        let b = ClusteredDataset::generate(&s).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn identity_perturbation_is_identity() {
        let p = PerturbationSet::IdentityOnly;
        let x = vec![1.0, 2.0, 3.0];
        assert_eq!(p.apply(&x, 3), x);
    }

    #[test]
    fn orthogonal_noise_keeps_manifold_coordinates() {
        let p = PerturbationSet::OrthogonalNoise {
            latent_dim: 2,
            magnitude: 0.1,
        };
        let x = vec![1.0, 0.0, 0.0];
        for seed in 0..50 {
            let y = p.apply(&x, seed);
            assert_eq!(y[0], 1.0);
            assert_eq!(y[1], 0.0);
            assert!(y[2].abs() <= 0.1);
        }
    }

    #[test]
    fn finite_list_adds_displacement() {
        let p = PerturbationSet::FiniteList {
            draws: vec![vec![0.0, 0.0, 0.5]],
        };
        assert_eq!(p.apply(&[1.0, 2.0, 0.0], 0), vec![1.0, 2.0, 0.5]);
    }

    #[test]
    fn csv_round_trip() {
        let ds = ClusteredDataset::generate(&spec(3, 2, &[2, 3], 0.1)).unwrap();
        let csv = ds.to_csv();
        let back = ClusteredDataset::from_csv(csv.as_bytes(), 2).unwrap();
        assert_eq!(back.points, ds.points);
        assert_eq!(back.assignment, ds.assignment);
    }
}

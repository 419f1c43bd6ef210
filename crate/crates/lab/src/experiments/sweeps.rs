//! Loss sweeps over the number of clusters, the minimum squared pairwise
//! distance, and the temperature, with plateau/threshold detection.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{LabError, Result};
use crate::exec::{map_indexed, Execution};
use crate::losses::{generalized_loss, LatentConfiguration, SimilarityConfig};
use crate::variations::roots_of_unity;

/// Fraction of the initial excess over the asymptotic floor at which the
/// distance sweep declares its threshold. The floor-relative rule makes the
/// detected threshold scale with the temperature instead of with the sweep
/// grid.
pub const DEFAULT_KNEE_FRACTION: f64 = 0.3;

/// Successive-decrease fraction (relative to the total range) below which the
/// cluster sweep declares a plateau.
pub const DEFAULT_PLATEAU_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SweepResult {
    /// Swept quantity, strictly increasing.
    pub axis: Vec<f64>,
    /// Response at each axis value (loss, or detected threshold for the
    /// temperature sweep).
    pub values: Vec<f64>,
    pub axis_label: String,
    pub value_label: String,
    /// Axis value where the curve plateaus or crosses the knee rule.
    pub plateau: Option<f64>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
}

impl SweepResult {
    fn new(axis: Vec<f64>, values: Vec<f64>, axis_label: &str, value_label: &str) -> Result<Self> {
        if axis.len() != values.len() {
            return Err(LabError::InvalidSpec("axis/value length mismatch".into()));
        }
        if axis.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::InvalidSpec(
                "axis must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            axis,
            values,
            axis_label: axis_label.into(),
            value_label: value_label.into(),
            plateau: None,
            slope: None,
            intercept: None,
            r_squared: None,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{}\n", self.axis_label, self.value_label);
        for (a, v) in self.axis.iter().zip(&self.values) {
            writeln!(out, "{a:.17e},{v:.17e}").unwrap();
        }
        out
    }

    pub fn is_non_increasing(&self, tol: f64) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

/// First axis value whose successive decrease falls below
/// `fraction * (total range)`.
fn detect_plateau(axis: &[f64], values: &[f64], fraction: f64) -> Option<f64> {
    let range = values.first()? - values.last()?;
    if range <= 0.0 {
        return None;
    }
    for w in 0..values.len() - 1 {
        if values[w] - values[w + 1] < fraction * range {
            return Some(axis[w + 1]);
        }
    }
    None
}

/// Loss of `K` evenly spread points on the circle, per K in `cluster_counts`.
pub fn sweep_clusters(cluster_counts: &[usize], cfg: &SimilarityConfig) -> Result<SweepResult> {
    sweep_clusters_with(cluster_counts, cfg, Execution::default())
}

pub fn sweep_clusters_with(
    cluster_counts: &[usize],
    cfg: &SimilarityConfig,
    exec: Execution,
) -> Result<SweepResult> {
    if cluster_counts.is_empty() || cluster_counts.contains(&0) {
        return Err(LabError::InvalidSpec(
            "cluster counts must be positive".into(),
        ));
    }
    let counts = cluster_counts.to_vec();
    let losses = map_indexed(exec, counts.len(), |i| {
        generalized_loss(&roots_of_unity(counts[i]), cfg)
    });
    let mut result = SweepResult::new(
        counts.iter().map(|&k| k as f64).collect(),
        losses,
        "clusters",
        "loss",
    )?;
    result.plateau = detect_plateau(&result.axis, &result.values, DEFAULT_PLATEAU_FRACTION);
    Ok(result)
}

/// `K` points on a circular arc whose adjacent squared chord distance is `s`;
/// this is also the minimum squared pairwise distance while the arc fits.
pub fn arc_configuration(k: usize, s: f64) -> Result<LatentConfiguration> {
    if k == 0 {
        return Err(LabError::InvalidSpec("need at least one point".into()));
    }
    let s_max = max_arc_distance_sq(k);
    if !(0.0..=s_max + 1e-12).contains(&s) {
        return Err(LabError::Infeasible(format!(
            "squared distance {s} not realizable by {k} points on the circle (max {s_max:.6})"
        )));
    }
    let phi = (1.0 - s / 2.0).clamp(-1.0, 1.0).acos();
    let points = (0..k)
        .map(|i| {
            let a = i as f64 * phi;
            vec![a.cos(), a.sin()]
        })
        .collect();
    Ok(LatentConfiguration::uniform(points))
}

/// Largest adjacent squared chord distance for which the minimum pairwise
/// distance of the arc is still the adjacent one: angle 2*pi/K.
pub fn max_arc_distance_sq(k: usize) -> f64 {
    2.0 - 2.0 * (2.0 * PI / k as f64).cos()
}

/// Loss versus minimum squared pairwise distance for `K` points on an arc.
/// The threshold is where the excess loss over the coincidence-free floor
/// `Psi(1/K)` first drops below `knee_fraction` of its initial value.
pub fn sweep_min_distance(
    k: usize,
    distances_sq: &[f64],
    cfg: &SimilarityConfig,
    knee_fraction: f64,
) -> Result<SweepResult> {
    sweep_min_distance_with(k, distances_sq, cfg, knee_fraction, Execution::default())
}

pub fn sweep_min_distance_with(
    k: usize,
    distances_sq: &[f64],
    cfg: &SimilarityConfig,
    knee_fraction: f64,
    exec: Execution,
) -> Result<SweepResult> {
    if k < 2 {
        return Err(LabError::InvalidSpec("distance sweep needs K >= 2".into()));
    }
    let configs = distances_sq
        .iter()
        .map(|&s| arc_configuration(k, s))
        .collect::<Result<Vec<_>>>()?;
    let losses = map_indexed(exec, configs.len(), |i| generalized_loss(&configs[i], cfg));
    let mut result = SweepResult::new(
        distances_sq.to_vec(),
        losses,
        "min_squared_distance",
        "loss",
    )?;
    let floor = cfg.psi.eval(1.0 / k as f64);
    let initial_excess = result.values[0] - floor;
    if initial_excess > 0.0 {
        let target = floor + knee_fraction * initial_excess;
        result.plateau = result
            .axis
            .iter()
            .zip(&result.values)
            .find(|(_, &v)| v <= target)
            .map(|(&a, _)| a);
    }
    Ok(result)
}

/// Uniform grid of `n` squared distances covering the feasible range for `k`
/// points, starting at 0.
pub fn distance_grid(k: usize, n: usize) -> Vec<f64> {
    let s_max = max_arc_distance_sq(k);
    (0..n).map(|i| s_max * i as f64 / (n - 1) as f64).collect()
}

/// Detected distance threshold per temperature, with a linear fit.
pub fn sweep_tau_threshold(
    taus: &[f64],
    k: usize,
    grid_points: usize,
    knee_fraction: f64,
) -> Result<SweepResult> {
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::InvalidSpec(
            "temperatures must be strictly increasing".into(),
        ));
    }
    let grid = distance_grid(k, grid_points);
    let thresholds = taus
        .iter()
        .map(|&tau| {
            let sweep =
                sweep_min_distance(k, &grid, &SimilarityConfig::nt_xent(tau), knee_fraction)?;
            sweep
                .plateau
                .ok_or_else(|| LabError::Infeasible(format!("no threshold detected at tau={tau}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut result = SweepResult::new(taus.to_vec(), thresholds, "tau", "threshold")?;
    let (slope, intercept, r_squared) = linear_fit(&result.axis, &result.values)?;
    result.slope = Some(slope);
    result.intercept = Some(intercept);
    result.r_squared = Some(r_squared);
    Ok(result)
}

/// Least-squares line through (x, y): returns (slope, intercept, R^2).
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(LabError::InvalidSpec("fit needs at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(LabError::DegenerateConfig("constant abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let p = slope * a + intercept;
            (b - p) * (b - p)
        })
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok((slope, intercept, r_squared))
}

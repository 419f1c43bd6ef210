//! Experiment orchestration: loss-landscape sweeps, the with/without-kernel
//! dynamics comparison, plot/CSV emission, and reproducibility manifests.

pub mod compare;
pub mod config;
pub mod manifest;
pub mod plot;
pub mod sweeps;

pub use compare::{compare_dynamics, CompareConfig, ComparisonReport};
pub use config::{ExperimentConfig, SweepAxes};
pub use manifest::RunManifest;
pub use plot::{emit_plots, svg_line_chart, PlotSeries};
pub use sweeps::{
    linear_fit, sweep_clusters, sweep_min_distance, sweep_tau_threshold, SweepResult,
};

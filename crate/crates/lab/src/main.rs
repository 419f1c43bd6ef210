//! `clab`: command-line driver for the sweeps, dynamics comparisons, and
//! verification checks. Every subcommand asserts its own success criteria and
//! exits nonzero on failure, so the binary doubles as a smoke test.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use contrastive_lab::experiments::sweeps::{distance_grid, DEFAULT_KNEE_FRACTION};
use contrastive_lab::experiments::{
    compare_dynamics, emit_plots, sweep_clusters, sweep_min_distance, sweep_tau_threshold,
    CompareConfig, ExperimentConfig, RunManifest, SweepResult,
};
use contrastive_lab::losses::{derive_seed, LatentConfiguration, SimilarityConfig};
use contrastive_lab::network::{init_gaussian, kernel_infinite, Activation, NetSpec};
use contrastive_lab::variations::{fd_loss_partial, invariant_gradient, stationarity_check};
use contrastive_lab::Result;

#[derive(Parser)]
#[command(name = "clab", version, about = "contrastive loss laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Svg,
    Both,
}

#[derive(Args)]
struct CommonOut {
    /// Output directory for CSV/SVG artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Both)]
    format: OutputFormat,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Loss of K evenly spread points on the circle, over a range of K.
    SweepClusters {
        #[command(flatten)]
        common: CommonOut,
        #[arg(long, default_value_t = 64)]
        max_k: usize,
        #[arg(long, default_value_t = 0.05)]
        tau: f64,
    },
    /// Loss versus minimum squared pairwise distance for K points on an arc.
    SweepDistance {
        #[command(flatten)]
        common: CommonOut,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
        #[arg(long, default_value_t = 120)]
        grid: usize,
    },
    /// Detected distance threshold as a function of temperature, with fit.
    SweepTau {
        #[command(flatten)]
        common: CommonOut,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 0.02)]
        tau_min: f64,
        #[arg(long, default_value_t = 0.5)]
        tau_max: f64,
        #[arg(long, default_value_t = 25)]
        tau_steps: usize,
        #[arg(long, default_value_t = 400)]
        grid: usize,
    },
    /// Weight-space vs vanilla latent descent on the four-cluster dataset.
    CompareDynamics {
        #[command(flatten)]
        common: CommonOut,
        #[arg(long, default_value_t = 400)]
        weight_steps: usize,
        #[arg(long, default_value_t = 3000)]
        vanilla_steps: usize,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
    },
    /// Finite-difference validation of the functional gradient.
    CheckGradients {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Stationarity report for a latent configuration read from CSV.
    CheckStationarity {
        /// CSV of latent points, one point per line, comma-separated.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Finite-width kernel error against the infinite-width limit.
    KernelConverge {
        #[arg(long, default_value_t = 256)]
        width_small: usize,
        #[arg(long, default_value_t = 4096)]
        width_large: usize,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
    },
    /// Runs the experiment described by a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_outputs(
    results: Vec<(String, SweepResult)>,
    common: &CommonOut,
    config_json: &str,
) -> Result<()> {
    match common.format {
        OutputFormat::Both => {
            emit_plots(&results, &common.out)?;
        }
        OutputFormat::Csv => {
            std::fs::create_dir_all(&common.out)?;
            for (name, sweep) in &results {
                std::fs::write(common.out.join(format!("{name}.csv")), sweep.to_csv())?;
            }
        }
        OutputFormat::Svg => {
            emit_plots(&results, &common.out)?;
            for (name, _) in &results {
                let _ = std::fs::remove_file(common.out.join(format!("{name}.csv")));
            }
        }
    }
    RunManifest::new(config_json, common.seed).write(&common.out)?;
    Ok(())
}

fn cmd_sweep_clusters(common: &CommonOut, max_k: usize, tau: f64) -> Result<bool> {
    let counts: Vec<usize> = (1..=max_k).collect();
    let sweep = sweep_clusters(&counts, &SimilarityConfig::nt_xent(tau))?;
    let monotone = sweep.is_non_increasing(1e-12);
    let plateau = sweep.plateau;
    println!(
        "clusters sweep: K=1..{max_k}, tau={tau}, non-increasing={monotone}, plateau={plateau:?}"
    );
    write_outputs(
        vec![("sweep_clusters".into(), sweep)],
        common,
        &format!("{{\"experiment\":\"sweep-clusters\",\"max_k\":{max_k},\"tau\":{tau}}}"),
    )?;
    Ok(monotone && plateau.is_some())
}

fn cmd_sweep_distance(common: &CommonOut, k: usize, tau: f64, grid: usize) -> Result<bool> {
    let sweep = sweep_min_distance(
        k,
        &distance_grid(k, grid),
        &SimilarityConfig::nt_xent(tau),
        DEFAULT_KNEE_FRACTION,
    )?;
    let monotone = sweep.is_non_increasing(1e-12);
    let threshold = sweep.plateau;
    println!(
        "distance sweep: K={k}, tau={tau}, non-increasing={monotone}, threshold={threshold:?}"
    );
    write_outputs(
        vec![("sweep_distance".into(), sweep)],
        common,
        &format!("{{\"experiment\":\"sweep-distance\",\"k\":{k},\"tau\":{tau},\"grid\":{grid}}}"),
    )?;
    Ok(monotone && threshold.is_some())
}

fn cmd_sweep_tau(
    common: &CommonOut,
    k: usize,
    tau_min: f64,
    tau_max: f64,
    tau_steps: usize,
    grid: usize,
) -> Result<bool> {
    let taus: Vec<f64> = (0..tau_steps)
        .map(|i| tau_min + (tau_max - tau_min) * i as f64 / (tau_steps - 1) as f64)
        .collect();
    let sweep = sweep_tau_threshold(&taus, k, grid, DEFAULT_KNEE_FRACTION)?;
    let r2 = sweep.r_squared.unwrap_or(0.0);
    println!(
        "tau sweep: K={k}, tau in [{tau_min},{tau_max}], slope={:.4}, intercept={:.4}, R2={r2:.4}",
        sweep.slope.unwrap_or(f64::NAN),
        sweep.intercept.unwrap_or(f64::NAN)
    );
    write_outputs(
        vec![("sweep_tau".into(), sweep)],
        common,
        &format!("{{\"experiment\":\"sweep-tau\",\"k\":{k},\"grid\":{grid}}}"),
    )?;
    Ok(r2 >= 0.95)
}

fn cmd_compare(common: &CommonOut, cfg: &CompareConfig) -> Result<bool> {
    let report = compare_dynamics(cfg)?;
    let v = &report.verdict;
    println!(
        "compare: kernel coherence {:.3} (goal {} at step {:?}), vanilla uniformity {:.3} (goal {} at step {:?}), passed={}",
        v.kernel_final_coherence,
        cfg.coherence_goal,
        v.kernel_coherence_step,
        v.vanilla_final_uniformity,
        cfg.uniformity_goal,
        v.vanilla_uniformity_step,
        v.passed
    );
    std::fs::create_dir_all(&common.out)?;
    std::fs::write(
        common.out.join("kernel_diagnostics.csv"),
        report.kernel_trajectory.diagnostics_csv(),
    )?;
    std::fs::write(
        common.out.join("vanilla_diagnostics.csv"),
        report.vanilla_trajectory.diagnostics_csv(),
    )?;
    std::fs::write(
        common.out.join("verdict.json"),
        serde_json::to_string_pretty(v).expect("verdict serializes"),
    )?;
    let config_json = serde_json::to_string(cfg).expect("config serializes");
    RunManifest::new(&config_json, cfg.seed).write(&common.out)?;
    Ok(v.passed)
}

fn cmd_check_gradients(instances: usize, seed: u64, tol: f64) -> Result<bool> {
    let mut worst = 0.0f64;
    for inst in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, inst as u64));
        let n = rng.gen_range(2..=10);
        let d = rng.gen_range(1..=4);
        let tau = rng.gen_range(0.2..1.0);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let z = LatentConfiguration::uniform(points);
        let cfg = SimilarityConfig::nt_xent(tau);
        let report = invariant_gradient(&z, &cfg);
        for i in 0..n {
            for k in 0..d {
                let fd = (n as f64) * fd_loss_partial(&z, &cfg, i, k, 1e-6);
                let g = report.euclidean[i][k];
                let denom = g.abs().max(fd.abs()).max(1e-8);
                worst = worst.max((g - fd).abs() / denom);
            }
        }
    }
    println!(
        "gradient check: {instances} instances, worst relative error {worst:.3e} (tol {tol:.1e})"
    );
    Ok(worst <= tol)
}

fn cmd_check_stationarity(input: &Path, tau: f64, tol: f64) -> Result<bool> {
    let text = std::fs::read_to_string(input)?;
    let mut points = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        match row {
            Ok(row) => points.push(row),
            // Tolerate a single header line.
            Err(_) if points.is_empty() => continue,
            Err(e) => return Err(contrastive_lab::LabError::Parse(e.to_string())),
        }
    }
    let z = LatentConfiguration::uniform(points);
    let (stationary, report) = stationarity_check(&z, &SimilarityConfig::nt_xent(tau), tol);
    let lambda_spread = report.lambda_spread;
    println!(
        "{}",
        serde_json::json!({
            "max_tangential_norm": report.max_tangential_norm,
            "lambda_spread": lambda_spread,
            "stationary": stationary,
        })
    );
    Ok(stationary)
}

fn kernel_error(width: usize, seed: u64, points: &[Vec<f64>]) -> f64 {
    let net = init_gaussian(
        &NetSpec {
            input_dim: 2,
            latent_dim: 2,
            width,
            activation: Activation::Relu,
            weight_std: Some(1.0),
            weight_bound: 12.0,
        },
        seed,
    );
    let finite = net.kernel(points);
    let limit = kernel_infinite(points).expect("nonzero inputs");
    let mut max = 0.0f64;
    for i in 0..points.len() {
        for j in 0..points.len() {
            for k in 0..2 {
                for l in 0..2 {
                    max = max.max((finite.entry(i, j, k, l) - limit.entry(i, j, k, l)).abs());
                }
            }
        }
    }
    max
}

fn cmd_kernel_converge(width_small: usize, width_large: usize, seeds: usize) -> Result<bool> {
    // Unit vectors at relative angles 0, pi/4, pi/2.
    let points = vec![
        vec![1.0, 0.0],
        vec![
            std::f64::consts::FRAC_1_SQRT_2,
            std::f64::consts::FRAC_1_SQRT_2,
        ],
        vec![0.0, 1.0],
    ];
    let mut err_small = 0.0;
    let mut err_large = 0.0;
    for s in 0..seeds {
        err_small += kernel_error(width_small, derive_seed(1, s as u64), &points);
        err_large += kernel_error(width_large, derive_seed(2, s as u64), &points);
    }
    let ratio = err_small / err_large;
    let expected = ((width_large as f64) / (width_small as f64)).sqrt();
    println!(
        "kernel convergence: mean error M={width_small}: {:.3e}, M={width_large}: {:.3e}, ratio {ratio:.2} (sqrt scaling predicts {expected:.2})",
        err_small / seeds as f64,
        err_large / seeds as f64
    );
    Ok(ratio >= expected * 0.625 && ratio <= expected * 1.625)
}

fn cmd_run(config_path: &Path, out_override: Option<PathBuf>) -> Result<bool> {
    let cfg = ExperimentConfig::load(config_path)?;
    let out = out_override
        .or_else(|| cfg.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let common = CommonOut {
        out,
        format: OutputFormat::Both,
        seed: cfg.seed,
    };
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let tau = cfg.similarity.as_ref().map_or(0.05, |s| s.tau);
    match cfg.experiment.as_str() {
        "sweep-clusters" => {
            let counts = sweep.cluster_counts.unwrap_or_else(|| (1..=64).collect());
            let result = sweep_clusters(&counts, &SimilarityConfig::nt_xent(tau))?;
            let ok = result.is_non_increasing(1e-12) && result.plateau.is_some();
            write_outputs(
                vec![("sweep_clusters".into(), result)],
                &common,
                &cfg.to_json(),
            )?;
            Ok(ok)
        }
        "sweep-distance" => {
            let grid = sweep
                .squared_distances
                .unwrap_or_else(|| distance_grid(8, 120));
            let result = sweep_min_distance(
                8,
                &grid,
                &SimilarityConfig::nt_xent(tau),
                DEFAULT_KNEE_FRACTION,
            )?;
            let ok = result.is_non_increasing(1e-12) && result.plateau.is_some();
            write_outputs(
                vec![("sweep_distance".into(), result)],
                &common,
                &cfg.to_json(),
            )?;
            Ok(ok)
        }
        "sweep-tau" => {
            let taus = sweep
                .taus
                .unwrap_or_else(|| (0..25).map(|i| 0.02 + 0.48 * i as f64 / 24.0).collect());
            let result = sweep_tau_threshold(&taus, 8, 400, DEFAULT_KNEE_FRACTION)?;
            let ok = result.r_squared.unwrap_or(0.0) >= 0.95;
            write_outputs(vec![("sweep_tau".into(), result)], &common, &cfg.to_json())?;
            Ok(ok)
        }
        "compare-dynamics" => {
            let mut compare = cfg.compare.clone().unwrap_or_default();
            compare.seed = cfg.seed;
            cmd_compare(&common, &compare)
        }
        other => Err(contrastive_lab::LabError::Config(format!(
            "unknown experiment id {other:?}"
        ))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::SweepClusters { common, max_k, tau } => cmd_sweep_clusters(common, *max_k, *tau),
        Command::SweepDistance {
            common,
            k,
            tau,
            grid,
        } => cmd_sweep_distance(common, *k, *tau, *grid),
        Command::SweepTau {
            common,
            k,
            tau_min,
            tau_max,
            tau_steps,
            grid,
        } => cmd_sweep_tau(common, *k, *tau_min, *tau_max, *tau_steps, *grid),
        Command::CompareDynamics {
            common,
            weight_steps,
            vanilla_steps,
            tau,
        } => {
            let cfg = CompareConfig {
                weight_steps: *weight_steps,
                vanilla_steps: *vanilla_steps,
                tau: *tau,
                seed: common.seed,
                ..CompareConfig::default()
            };
            cmd_compare(common, &cfg)
        }
        Command::CheckGradients {
            instances,
            seed,
            tol,
        } => cmd_check_gradients(*instances, *seed, *tol),
        Command::CheckStationarity { input, tau, tol } => cmd_check_stationarity(input, *tau, *tol),
        Command::KernelConverge {
            width_small,
            width_large,
            seeds,
        } => cmd_kernel_converge(*width_small, *width_large, *seeds),
        Command::Run { config, out } => cmd_run(config, out.clone()),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("assertions failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

//! `cdp` — command-line driver for the conformal-dp pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cdp_harness::config::ExperimentConfig;
use cdp_harness::experiment::{
    build_pipeline, run_experiment, run_experiment_with_data, synthetic_dataset, write_trials_csv,
    TrialRecord,
};
use cdp_harness::report::{aggregate, parse_trials_csv, render_svg, write_aggregate_csv, SweepVariable};
use cdp_harness::spd_image::load_image;
use cdp_harness::spd_image::{image_to_spd, DEFAULT_IOTA};
use conformal_dp::density::{kde_evaluate, sanitize, KernelConfig};
use conformal_dp::error::Error as CdpError;
use conformal_dp::manifold::{ManifoldKind, Point};
use conformal_dp::rng::derive_seed;
use conformal_dp::solver::{build_graph, default_edge_bandwidth, default_knn_k, heat_smooth};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "cdp", version, about = "Density-aware differential privacy on manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for repetitions (0 = rayon default).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Debug mode: skip noise injection everywhere.
    #[arg(long, default_value_t = false)]
    zero_noise: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate and sanitize the kernel density; dump the field CSV.
    Kde {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run both pipeline stages; dump sigma/phi and edge CSVs.
    Conformal {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Privatize the Fréchet mean once with each requested mechanism.
    PrivatizeMean {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run experiment sweeps.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    /// Aggregate a trials CSV and render the sweep chart.
    Report {
        /// Trials CSV produced by `cdp experiment`.
        #[arg(long)]
        records: PathBuf,
        /// Swept variable: dim | n_samples | vmf_std | eps_total.
        #[arg(long = "x")]
        x: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Synthetic data (vMF on spheres, gradient-image descriptors on SPD).
    Synthetic {
        #[command(flatten)]
        common: CommonArgs,
        /// Sweep one config field: e.g. --sweep eps_total=0.1,0.5,1.0
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Image directory (PGM/PPM or raw tensors) on the SPD manifold.
    Images {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory of image files.
        #[arg(long)]
        images: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cdp: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: msg.into() }
    }
    fn io(msg: impl Into<String>) -> Self {
        Self { code: EXIT_IO, message: msg.into() }
    }
}

impl From<CdpError> for CliError {
    fn from(e: CdpError) -> Self {
        let code = match &e {
            CdpError::InvalidArgument(_) | CdpError::NonpositiveEpsilon(_)
            | CdpError::NonpositiveBudget(_) => EXIT_CONFIG,
            _ => EXIT_NUMERIC,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self { code: EXIT_IO, message: e.to_string() }
    }
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| CliError::io(format!("read {}: {e}", common.config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text).map_err(|e| CliError::config(e.to_string()))?;
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
    }
    Ok(cfg)
}

fn ensure_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("create {}: {e}", dir.display())))
}

fn install_pool(workers: usize) -> Result<(), CliError> {
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::config(format!("worker pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Kde { common } => {
            let cfg = load_config(&common)?;
            install_pool(common.workers)?;
            ensure_out(&common.out)?;
            let spec = cfg.manifold.to_spec()?;
            let rep_seed = derive_seed(cfg.base_seed, 0);
            let data = synthetic_dataset(&cfg, &spec, rep_seed)?;
            let bandwidth = cfg.solver.kde_bandwidth.unwrap_or(match spec.kind() {
                ManifoldKind::Sphere => 0.5 * spec.radius(),
                ManifoldKind::Spd => 1.0,
            });
            let kernel = KernelConfig::bump(bandwidth, spec.intrinsic_dim());
            let raw = kde_evaluate(&data, kernel, &data, &spec)?;
            let k = cfg.solver.knn_k.unwrap_or_else(|| default_knn_k(data.len()));
            let h_l = match cfg.solver.edge_bandwidth {
                Some(h) => h,
                None => default_edge_bandwidth(&data, k, &spec)?,
            };
            let graph = build_graph(&data, k, h_l, &spec)?;
            let smoothed = raw.with_values(heat_smooth(
                &graph,
                raw.values(),
                cfg.solver.heat_t.unwrap_or(0.01),
                cfg.solver.heat_steps.unwrap_or(3),
            )?)?;
            let field = if common.zero_noise {
                smoothed
            } else {
                sanitize(&smoothed, cfg.epsilon_phi(), data.len(), derive_seed(rep_seed, 2))?
            };
            let path = common.out.join("density_field.csv");
            let mut file = fs::File::create(&path)?;
            field.write_csv(&mut file)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Conformal { common } => {
            let cfg = load_config(&common)?;
            install_pool(common.workers)?;
            ensure_out(&common.out)?;
            let spec = cfg.manifold.to_spec()?;
            let rep_seed = derive_seed(cfg.base_seed, 0);
            let data = synthetic_dataset(&cfg, &spec, rep_seed)?;
            let state = build_pipeline(&cfg, &spec, &data, rep_seed)?;
            let sigma_path = common.out.join("sigma_phi.csv");
            state.structure.write_csv(&mut fs::File::create(&sigma_path)?)?;
            let edges_path = common.out.join("edges.csv");
            state
                .structure
                .laplacian()
                .write_edges_csv(state.structure.phi(), &mut fs::File::create(&edges_path)?)?;
            println!(
                "phi range [{:.6}, {:.6}], Delta = {:.6e}, Delta* = {:.6e}, lambda* = {:.6e}",
                state.structure.phi_min(),
                state.structure.phi_max(),
                state.delta_g,
                state.ledger.delta_star,
                state.ledger.lambda_star
            );
            println!("wrote {} and {}", sigma_path.display(), edges_path.display());
            Ok(())
        }
        Command::PrivatizeMean { common } => {
            let cfg = load_config(&common)?;
            install_pool(common.workers)?;
            ensure_out(&common.out)?;
            let records = run_experiment(&cfg, common.zero_noise)?;
            let path = common.out.join("trials.csv");
            write_csv_file(&records, &path)?;
            for r in &records {
                if let Some(err) = &r.error {
                    eprintln!("rep {} {}: {err}", r.rep, r.mechanism);
                }
            }
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Experiment(ExperimentCmd::Synthetic { common, sweep }) => {
            let cfg = load_config(&common)?;
            install_pool(common.workers)?;
            ensure_out(&common.out)?;
            let mut all = Vec::new();
            match sweep {
                None => all.extend(run_experiment(&cfg, common.zero_noise)?),
                Some(expr) => {
                    for variant in sweep_variants(&cfg, &expr)? {
                        all.extend(run_experiment(&variant, common.zero_noise)?);
                    }
                }
            }
            let path = common.out.join("trials.csv");
            write_csv_file(&all, &path)?;
            report_failures(&all);
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Experiment(ExperimentCmd::Images { common, images }) => {
            let cfg = load_config(&common)?;
            install_pool(common.workers)?;
            ensure_out(&common.out)?;
            let mut paths: Vec<PathBuf> = fs::read_dir(&images)
                .map_err(|e| CliError::io(format!("read {}: {e}", images.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(CliError::config(format!(
                    "no image files in {}",
                    images.display()
                )));
            }
            let mut data: Vec<Point> = Vec::with_capacity(paths.len());
            for p in &paths {
                let img = load_image(p).map_err(CliError::from)?;
                data.push(image_to_spd(&img, DEFAULT_IOTA)?);
            }
            let records = run_experiment_with_data(&cfg, &data, common.zero_noise)?;
            let path = common.out.join("trials.csv");
            write_csv_file(&records, &path)?;
            report_failures(&records);
            println!("wrote {} ({} images)", path.display(), data.len());
            Ok(())
        }
        Command::Report { records, x, out } => {
            let variable = SweepVariable::parse(&x).map_err(|e| CliError::config(e.to_string()))?;
            let text = fs::read_to_string(&records)
                .map_err(|e| CliError::io(format!("read {}: {e}", records.display())))?;
            let trials = parse_trials_csv(&text).map_err(|e| CliError::config(e.to_string()))?;
            if trials.is_empty() {
                return Err(CliError::config("records file has no rows"));
            }
            ensure_out(&out)?;
            let rows = aggregate(&trials, variable);
            let agg_path = out.join("aggregate.csv");
            write_aggregate_csv(&rows, variable, &mut fs::File::create(&agg_path)?)?;
            println!("wrote {}", agg_path.display());
            match render_svg(&rows, variable) {
                Some(svg) => {
                    let svg_path = out.join("sweep.svg");
                    fs::write(&svg_path, svg)?;
                    println!("wrote {}", svg_path.display());
                }
                None => println!("skipping plot: fewer than two x values"),
            }
            Ok(())
        }
    }
}

fn write_csv_file(records: &[TrialRecord], path: &Path) -> Result<(), CliError> {
    let mut file = fs::File::create(path)?;
    write_trials_csv(records, &mut file)?;
    Ok(())
}

fn report_failures(records: &[TrialRecord]) {
    for r in records {
        if let Some(err) = &r.error {
            eprintln!("rep {} {}: {err}", r.rep, r.mechanism);
        }
    }
}

/// Parse `field=v1,v2,...` into per-value config variants.
fn sweep_variants(base: &ExperimentConfig, expr: &str) -> Result<Vec<ExperimentConfig>, CliError> {
    let (field, values) = expr
        .split_once('=')
        .ok_or_else(|| CliError::config("sweep syntax: field=v1,v2,..."))?;
    let values: Vec<f64> = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::config(format!("bad sweep value {v}")))
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(CliError::config("sweep needs at least one value"));
    }
    let mut variants = Vec::with_capacity(values.len());
    for v in &values {
        let mut cfg = base.clone();
        match field {
            "dim" => cfg.manifold.dim_param = *v as usize,
            "n" | "n_samples" => cfg.n_samples = *v as usize,
            "std" | "vmf_std" => cfg.vmf_std = Some(*v),
            "eps_total" | "epsilon_total" => cfg.epsilon_total = *v,
            other => {
                return Err(CliError::config(format!(
                    "unknown sweep field {other} (want dim | n_samples | vmf_std | eps_total)"
                )))
            }
        }
        cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
        variants.push(cfg);
    }
    Ok(variants)
}

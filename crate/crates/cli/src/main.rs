//! Single-binary front end: `larch simulate | estimate | infer | mc`.
//!
//! All inputs and outputs are files (CSV for series, JSON for everything
//! else); every output document carries a top-level `schema_version`, and
//! every run logs its config hash, master seed and wall time to stderr.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use larch::estimate::{fit, ContrastKind, FitOverrides};
use larch::infer::{
    asymptotic_cov, confidence_intervals, default_guard, gamma_hats, l2_scale_mask, matrix_rows,
    rescale_to_l2, sigma_xi_hat,
};
use larch::mc::{run_experiment, ExperimentConfig};
use larch::model::ModelJson;
use larch::simulate::{read_xs_csv, simulate, write_xs_csv, SimConfig, Trajectory};
use larch::Error as CoreError;

const SCHEMA_VERSION: u32 = 1;

/// Exit 1: usage or malformed input. Exit 2: domain or convergence failure.
enum CliError {
    Usage(String),
    Domain(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Argument(_) => CliError::Usage(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(format!("io error: {e}"))
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "larch",
    about = "Simulate, estimate and benchmark LARCH-family volatility models",
    version
)]
struct Cli {
    /// Worker threads for Monte-Carlo runs (affects wall time only, never
    /// results).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log more detail to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a trajectory and write it as CSV (plus optional JSON
    /// envelope with metadata).
    Simulate(SimulateArgs),
    /// Fit a contrast to an observed trajectory.
    Estimate(EstimateArgs),
    /// Sandwich covariance and confidence intervals for a fitted model.
    Infer(InferArgs),
    /// Replicated simulate→fit experiment with an RMSE report.
    Mc(McArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model JSON: {"family":"larch|glarch|longmemory","p":…,"q":…,"theta":[…]}
    #[arg(long)]
    model: PathBuf,
    /// Noise JSON: {"noise":"gaussian"} or {"noise":"student","nu":6};
    /// Gaussian when omitted.
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    n: usize,
    /// Seed (falls back to LARCH_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 2000)]
    burn_in: usize,
    #[arg(long, default_value_t = 2000)]
    trunc_k: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON envelope (series + metadata).
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Trajectory CSV (header "x").
    #[arg(long)]
    data: PathBuf,
    /// Model JSON; "theta" is ignored here if present.
    #[arg(long)]
    model: PathBuf,
    /// lav | sqml | wls
    #[arg(long)]
    method: String,
    /// Regularization for --method sqml.
    #[arg(long)]
    h: Option<f64>,
    /// Optional fit-options JSON: {"bounds":[[lo,hi],…],"starts":…,"tol":…,
    /// "max_iter":…,"trunc_k":…}
    #[arg(long)]
    options: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    /// Trajectory CSV the estimate was fitted on.
    #[arg(long)]
    data: PathBuf,
    /// EstimateResult JSON written by `larch estimate`.
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Near-zero-volatility guard in the σ̂_ξ² denominator; defaults to
    /// the scale-aware 1e-4·mean(X²).
    #[arg(long)]
    guard: Option<f64>,
    /// Also report θ̂ with scale coordinates multiplied by the estimated
    /// ‖ξ₀‖₂ (the unit-variance parametrization).
    #[arg(long)]
    rescale: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct McArgs {
    /// ExperimentConfig JSON.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV table.
    #[arg(long)]
    out: PathBuf,
    /// Optional full JSON report.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path too
            let _ = e.print();
            let code = if e.use_stderr() { 1 } else { 0 };
            std::process::exit(code);
        }
    };
    env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or(if cli.verbose { "debug" } else { "info" }),
    )
    .format_timestamp(None)
    .init();

    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            log::warn!("could not configure {threads} worker threads: {e}");
        }
    }

    let started = Instant::now();
    let outcome = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Mc(args) => cmd_mc(args),
    };
    match outcome {
        Ok(()) => {
            log::info!("done in {:.3}s", started.elapsed().as_secs_f64());
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Domain(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("LARCH_SEED").ok().and_then(|s| s.parse().ok())
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(env_seed).unwrap_or(0)
}

fn file_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| {
        CliError::Usage(format!(
            "malformed JSON in {} at line {} column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut out = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Usage(format!("serialization failed: {e}")))?;
    out.push('\n');
    fs::write(path, out)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn read_data(path: &Path) -> CliResult<Vec<f64>> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(read_xs_csv(BufReader::new(file))?)
}

#[derive(Serialize, Deserialize)]
struct NoiseDoc {
    #[serde(flatten)]
    noise: larch::NoiseSpec,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryDoc {
    schema_version: u32,
    #[serde(flatten)]
    trajectory: Trajectory,
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let model_bytes = fs::read(&args.model)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.model.display())))?;
    let model: ModelJson = read_json(&args.model)?;
    let (spec, theta) = model.spec_and_theta()?;
    let noise = match &args.noise {
        Some(path) => read_json::<NoiseDoc>(path)?.noise,
        None => larch::NoiseSpec::GaussianL1,
    };
    let seed = resolve_seed(args.seed);
    let cfg = SimConfig {
        burn_in: args.burn_in,
        trunc_k: args.trunc_k,
    };
    let traj = simulate(&spec, &theta, &noise, args.n, &cfg, seed)?;
    if !traj.meta.in_theta2 {
        log::warn!("theta is outside Theta(2); trajectory may be nonstationary");
    }

    let file = fs::File::create(&args.out)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", args.out.display())))?;
    let mut w = BufWriter::new(file);
    write_xs_csv(&traj.x, &mut w)?;
    w.flush()?;
    if let Some(json_path) = &args.json {
        write_json(
            json_path,
            &TrajectoryDoc {
                schema_version: SCHEMA_VERSION,
                trajectory: traj,
            },
        )?;
    }
    log::info!(
        "simulate: config {} seed {} n {}",
        file_hash(&model_bytes),
        seed,
        args.n
    );
    Ok(())
}

/// Estimate output document; `model.theta` holds θ̂ so the file feeds
/// straight into `larch infer`.
#[derive(Serialize, Deserialize)]
struct EstimateDoc {
    schema_version: u32,
    model: ModelJson,
    kind: ContrastKind,
    contrast: f64,
    converged: bool,
    n_evals: usize,
    start_index: usize,
    in_theta2: bool,
    seed: u64,
}

fn parse_method(method: &str, h: Option<f64>) -> CliResult<ContrastKind> {
    match method {
        "lav" => Ok(ContrastKind::Lav),
        "wls" => Ok(ContrastKind::WeightedLs),
        "sqml" => {
            let h = h.ok_or_else(|| {
                CliError::Usage("--method sqml requires --h <positive value>".into())
            })?;
            Ok(ContrastKind::SmoothedQml { h })
        }
        other => Err(CliError::Usage(format!(
            "unknown method \"{other}\" (expected lav, sqml or wls)"
        ))),
    }
}

fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let model: ModelJson = read_json(&args.model)?;
    let spec = model.spec()?;
    let x = read_data(&args.data)?;
    let kind = parse_method(&args.method, args.h)?;
    let overrides: FitOverrides = match &args.options {
        Some(path) => read_json(path)?,
        None => FitOverrides::default(),
    };
    let opts = overrides.resolve(&spec);
    let seed = resolve_seed(args.seed);

    let result = fit(&spec, &x, kind, &opts, seed)?;
    if !result.converged {
        log::warn!("optimizer did not meet its tolerance; best point reported");
    }
    let doc = EstimateDoc {
        schema_version: SCHEMA_VERSION,
        model: ModelJson::from_parts(&spec, Some(&result.theta_hat)),
        kind: result.kind,
        contrast: result.contrast,
        converged: result.converged,
        n_evals: result.n_evals,
        start_index: result.start_index,
        in_theta2: result.in_theta2,
        seed,
    };
    write_json(&args.out, &doc)?;
    log::info!(
        "estimate: method {} seed {seed} n {} contrast {:.6e}",
        result.kind.label(),
        x.len(),
        result.contrast
    );
    if !result.converged {
        return Err(CliError::Domain(
            "fit did not converge within max_iter".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct InferDoc {
    schema_version: u32,
    n: usize,
    theta_hat: Vec<f64>,
    sigma_xi2_hat: f64,
    guard_hits: usize,
    gamma1_condition: f64,
    gamma1_hat: Vec<Vec<f64>>,
    gamma2_hat: Vec<Vec<f64>>,
    cov: Vec<Vec<f64>>,
    level: f64,
    intervals: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_hat_l2: Option<Vec<f64>>,
}

fn cmd_infer(args: &InferArgs) -> CliResult<()> {
    let est: EstimateDoc = read_json(&args.estimate)?;
    let (spec, theta_hat) = est.model.spec_and_theta()?;
    let x = read_data(&args.data)?;
    let n = x.len();
    let trunc_k = n.saturating_sub(1).min(5000).max(spec.order());

    let (g1, g2) = gamma_hats(&spec, &theta_hat, &x, trunc_k)?;
    let guard = args.guard.unwrap_or_else(|| default_guard(&x));
    let sig = sigma_xi_hat(&spec, &theta_hat, &x, trunc_k, guard)?;
    let sw = asymptotic_cov(g1, g2, sig.value, n)?;
    let intervals = confidence_intervals(&theta_hat, &sw.cov, args.level)?;
    let theta_hat_l2 = if args.rescale {
        Some(rescale_to_l2(
            &theta_hat,
            sig.value.sqrt(),
            &l2_scale_mask(&spec),
        )?)
    } else {
        None
    };

    let doc = InferDoc {
        schema_version: SCHEMA_VERSION,
        n,
        theta_hat,
        sigma_xi2_hat: sig.value,
        guard_hits: sig.guard_hits,
        gamma1_condition: sw.gamma1_condition,
        gamma1_hat: matrix_rows(&sw.gamma1_hat),
        gamma2_hat: matrix_rows(&sw.gamma2_hat),
        cov: matrix_rows(&sw.cov),
        level: args.level,
        intervals,
        theta_hat_l2,
    };
    write_json(&args.out, &doc)?;
    log::info!(
        "infer: n {n} sigma_xi2_hat {:.4} guard_hits {} condition {:.2e}",
        sig.value,
        sig.guard_hits,
        sw.gamma1_condition
    );
    Ok(())
}

#[derive(Serialize)]
struct McDoc {
    schema_version: u32,
    #[serde(flatten)]
    report: larch::McReport,
}

fn cmd_mc(args: &McArgs) -> CliResult<()> {
    let mut cfg: ExperimentConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed.or_else(env_seed) {
        cfg.master_seed = seed;
    }
    let report = run_experiment(&cfg)?;
    let failures: usize = report.rows.iter().map(|r| r.failures).sum();

    let file = fs::File::create(&args.out)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", args.out.display())))?;
    let mut w = BufWriter::new(file);
    report.write_csv(&mut w)?;
    w.flush()?;
    if let Some(json_path) = &args.json {
        write_json(
            json_path,
            &McDoc {
                schema_version: SCHEMA_VERSION,
                report: report.clone(),
            },
        )?;
    }
    log::info!(
        "mc: config {} master_seed {} rows {}",
        report.config_hash,
        report.master_seed,
        report.rows.len()
    );
    if failures > 0 {
        log::warn!("{failures} fit failures were excluded from the RMSE");
    }
    Ok(())
}

//! Monte-Carlo benchmarking: replicated simulate→fit pipelines with
//! per-coordinate RMSE aggregation.
//!
//! Replication `r` draws from the ChaCha stream `(master_seed, r)`, so the
//! report is bit-identical regardless of worker count or scheduling; the
//! aggregation is a deterministic reduction ordered by replication index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimate::{fit, ContrastKind, FitOverrides};
use crate::infer;
use crate::model::ModelJson;
use crate::noise::{stream_rng, NoiseSpec};
use crate::simulate::{simulate_with_rng, SimConfig};
use rand::RngCore;

/// Full description of one Monte-Carlo experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Family and true parameter vector θ*.
    pub model: ModelJson,
    pub noise: NoiseSpec,
    /// Trajectory lengths, ascending.
    pub n_list: Vec<usize>,
    /// Replications per length.
    pub reps: usize,
    pub estimators: Vec<ContrastKind>,
    pub master_seed: u64,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitOverrides>,
    /// Map QML/WLS estimates back to the `E|ξ|=1` parametrization (divide
    /// the scale coordinates by the true `‖ξ₀‖₂`) before computing errors.
    /// The LAV estimator targets that parametrization directly and is never
    /// rescaled.
    #[serde(default)]
    pub rescale: bool,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::argument("reps must be at least 1"));
        }
        if self.n_list.is_empty() {
            return Err(Error::argument("n_list must be nonempty"));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::argument("n_list must be strictly ascending"));
        }
        if self.estimators.is_empty() {
            return Err(Error::argument("estimators must be nonempty"));
        }
        for e in &self.estimators {
            e.validate()?;
        }
        Ok(())
    }

    /// Stable hex digest of the canonical JSON form, recorded as provenance.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One (estimator, n, coordinate) cell of the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McRow {
    pub estimator: String,
    pub n: usize,
    pub coord: usize,
    pub rmse: f64,
    pub mean_bias: f64,
    pub reps_used: usize,
    pub failures: usize,
}

/// RMSE table plus provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McReport {
    pub rows: Vec<McRow>,
    pub master_seed: u64,
    pub config_hash: String,
    pub reps: usize,
}

impl McReport {
    /// Rows for one (estimator, n) pair, ordered by coordinate.
    pub fn cell(&self, estimator: &str, n: usize) -> Vec<&McRow> {
        self.rows
            .iter()
            .filter(|r| r.estimator == estimator && r.n == n)
            .collect()
    }

    /// CSV with columns (estimator, n, coordinate, rmse, bias, failures).
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "estimator,n,coordinate,rmse,bias,failures")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.estimator, r.n, r.coord, r.rmse, r.mean_bias, r.failures
            )?;
        }
        Ok(())
    }
}

/// Per-coordinate `√(mean of squared errors)` over the replication rows.
pub fn rmse(errors: &[Vec<f64>]) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(Error::argument("rmse needs at least one replication row"));
    }
    let d = errors[0].len();
    if errors.iter().any(|row| row.len() != d) {
        return Err(Error::argument("rmse rows must have equal length"));
    }
    let mut acc = vec![0.0; d];
    for row in errors {
        for (a, e) in acc.iter_mut().zip(row) {
            *a += e * e;
        }
    }
    Ok(acc
        .into_iter()
        .map(|s| (s / errors.len() as f64).sqrt())
        .collect())
}

fn mean_bias(errors: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut acc = vec![0.0; d];
    for row in errors {
        for (a, e) in acc.iter_mut().zip(row) {
            *a += e;
        }
    }
    let n = errors.len().max(1) as f64;
    acc.into_iter().map(|s| s / n).collect()
}

/// Runs the experiment: per replication, simulate once and fit every
/// estimator on the same trajectory; failed or non-converged fits are
/// excluded from the RMSE and counted.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<McReport> {
    cfg.validate()?;
    let (spec, theta_star) = cfg.model.spec_and_theta()?;
    let moments = cfg.noise.moments()?;
    let opts = cfg.fit.clone().unwrap_or_default().resolve(&spec);
    opts.validate(&spec)?;
    let mask = infer::l2_scale_mask(&spec);
    let rescale_factor = 1.0 / moments.sigma_xi2.sqrt();
    let d = spec.dim();

    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        // Vec of per-estimator error rows, one entry per replication,
        // collected in replication order.
        let per_rep: Vec<Vec<Option<Vec<f64>>>> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream_rng(cfg.master_seed, r as u64 + 1);
                let traj = simulate_with_rng(
                    &spec,
                    &theta_star,
                    &cfg.noise,
                    n,
                    &cfg.sim,
                    &mut rng,
                    cfg.master_seed,
                );
                cfg.estimators
                    .iter()
                    .map(|kind| {
                        let fit_seed = rng.next_u64();
                        let traj = match &traj {
                            Ok(t) => t,
                            Err(_) => return None,
                        };
                        match fit(&spec, &traj.x, *kind, &opts, fit_seed) {
                            Ok(res) if res.converged => {
                                let est = if cfg.rescale
                                    && !matches!(kind, ContrastKind::Lav)
                                {
                                    infer::rescale_to_l2(&res.theta_hat, rescale_factor, &mask)
                                        .ok()?
                                } else {
                                    res.theta_hat
                                };
                                Some(
                                    est.iter()
                                        .zip(&theta_star)
                                        .map(|(e, t)| e - t)
                                        .collect::<Vec<f64>>(),
                                )
                            }
                            _ => None,
                        }
                    })
                    .collect()
            })
            .collect();

        for (ei, kind) in cfg.estimators.iter().enumerate() {
            let errors: Vec<Vec<f64>> = per_rep
                .iter()
                .filter_map(|rep| rep[ei].clone())
                .collect();
            let failures = cfg.reps - errors.len();
            let (rmse_vec, bias_vec) = if errors.is_empty() {
                (vec![f64::NAN; d], vec![f64::NAN; d])
            } else {
                (rmse(&errors)?, mean_bias(&errors, d))
            };
            for coord in 0..d {
                rows.push(McRow {
                    estimator: kind.label(),
                    n,
                    coord,
                    rmse: rmse_vec[coord],
                    mean_bias: bias_vec[coord],
                    reps_used: errors.len(),
                    failures,
                });
            }
        }
    }

    Ok(McReport {
        rows,
        master_seed: cfg.master_seed,
        config_hash: cfg.hash(),
        reps: cfg.reps,
    })
}

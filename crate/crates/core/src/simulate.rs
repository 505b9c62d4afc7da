//! Stationary trajectory generation and the closed-form moment formulas
//! used as simulation oracles.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Family, ModelJson, ModelSpec};
use crate::noise::{self, NoiseSpec};

/// Burn-in and coefficient-truncation settings for simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Discarded initial segment letting the recursion forget its zero
    /// initial condition.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Coefficient truncation for the long-memory family, where each step
    /// sums over the whole (truncated) past.
    #[serde(default = "default_trunc_k")]
    pub trunc_k: usize,
}

fn default_burn_in() -> usize {
    2000
}

fn default_trunc_k() -> usize {
    2000
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            burn_in: default_burn_in(),
            trunc_k: default_trunc_k(),
        }
    }
}

/// Generation metadata stored alongside a simulated series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub seed: u64,
    pub burn_in: usize,
    pub trunc_k: usize,
    pub model: ModelJson,
    pub noise: NoiseSpec,
    /// Advisory: whether θ passed the second-moment stationarity check.
    pub in_theta2: bool,
}

/// An observed series (X_1, …, X_n) plus generation metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub x: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.x.len()
    }
}

/// Simulates a trajectory of length `n`, deterministic given `seed`.
///
/// θ outside Θ(2) only triggers a warning: on a finite horizon the recursion
/// stays finite and the domain check is advisory.
pub fn simulate(
    spec: &ModelSpec,
    theta: &[f64],
    noise: &NoiseSpec,
    n: usize,
    cfg: &SimConfig,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = noise::stream_rng(seed, 0);
    simulate_with_rng(spec, theta, noise, n, cfg, &mut rng, seed)
}

/// Same as [`simulate`] but drawing from a caller-provided stream, which is
/// how the Monte-Carlo harness attaches one stream per replication.
pub fn simulate_with_rng(
    spec: &ModelSpec,
    theta: &[f64],
    noise: &NoiseSpec,
    n: usize,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    seed_label: u64,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::argument("trajectory length n must be at least 1"));
    }
    spec.validate_theta(theta)?;
    let moments = noise.moments()?;
    let (inside, margin) = model::in_theta2(spec, theta, moments.sigma_xi2)?;
    if !inside {
        log::warn!(
            "theta is outside Theta(2) (margin {margin:.4} >= 1); simulating anyway, \
             the trajectory may not be second-order stationary"
        );
    }
    let sampler = noise.sampler()?;
    let total = cfg.burn_in + n;
    let mut x = vec![0.0; total];

    match spec.family() {
        Family::LarchP { p } => {
            let a0 = theta[0];
            let slopes = &theta[1..];
            for t in 0..total {
                let mut vol = a0;
                for (i, ai) in slopes.iter().enumerate().take(p.min(t)) {
                    vol += ai * x[t - 1 - i];
                }
                x[t] = sampler.sample(rng) * vol;
            }
        }
        Family::Glarch { p, q } => {
            // Iterate the (X, σ) recursion directly: exact and O(p+q) per
            // step, no coefficient expansion needed.
            let c = &theta[..=p];
            let d = &theta[p + 1..];
            let mut sigma = vec![0.0; total];
            for t in 0..total {
                let mut vol = c[0];
                for i in 1..=p.min(t) {
                    vol += c[i] * x[t - i];
                }
                for (j, dj) in d.iter().enumerate().take(q.min(t)) {
                    vol += dj * sigma[t - 1 - j];
                }
                sigma[t] = vol;
                x[t] = sampler.sample(rng) * vol;
            }
        }
        Family::LongMemoryPowerLaw => {
            if cfg.trunc_k == 0 {
                return Err(Error::argument("trunc_k must be at least 1"));
            }
            let table = model::expand_coefficients(spec, theta, cfg.trunc_k)?;
            let a = table.a();
            for t in 0..total {
                let mut vol = a[0];
                for j in 1..=cfg.trunc_k.min(t) {
                    vol += a[j] * x[t - j];
                }
                x[t] = sampler.sample(rng) * vol;
            }
        }
    }

    x.drain(..cfg.burn_in);
    Ok(Trajectory {
        x,
        meta: TrajectoryMeta {
            seed: seed_label,
            burn_in: cfg.burn_in,
            trunc_k: cfg.trunc_k,
            model: ModelJson::from_parts(spec, Some(theta)),
            noise: *noise,
            in_theta2: inside,
        },
    })
}

/// Stationary second moment `σ²_X = a_0² σ_ξ² / (1 − σ_ξ² Σ_{k≥1} a_k²)`.
pub fn theoretical_sigma2(spec: &ModelSpec, theta: &[f64], sigma_xi2: f64) -> Result<f64> {
    let (_, margin) = model::in_theta2(spec, theta, sigma_xi2)?;
    let denom = 1.0 - margin;
    if denom <= 0.0 {
        return Err(Error::domain(format!(
            "sigma_X^2 undefined: 1 - sigma_xi^2 sum a_k^2 = {denom:.4} <= 0"
        )));
    }
    let a0 = model::expand_coefficients(spec, theta, spec.order())?.intercept();
    Ok(a0 * a0 * sigma_xi2 / denom)
}

/// Closed-form fourth moment of a stationary LARCH(1) process:
/// `E[X⁴] = a₀⁴ μ₄ (1 + 5σ_ξ²a₁²) (1 − σ_ξ²a₁²)⁻¹ (1 − μ₄a₁⁴)⁻¹`.
pub fn larch1_fourth_moment(a0: f64, a1: f64, sigma_xi2: f64, mu4: f64) -> Result<f64> {
    let d2 = 1.0 - sigma_xi2 * a1 * a1;
    let d4 = 1.0 - mu4 * a1.powi(4);
    if d2 <= 0.0 || d4 <= 0.0 {
        return Err(Error::domain(format!(
            "fourth moment undefined: denominators ({d2:.4}, {d4:.4}) must be positive"
        )));
    }
    Ok(a0.powi(4) * mu4 * (1.0 + 5.0 * sigma_xi2 * a1 * a1) / (d2 * d4))
}

/// Writes a series as CSV: header `x`, one value per line in shortest
/// round-trip decimal form.
pub fn write_xs_csv<W: std::io::Write>(x: &[f64], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "x")?;
    for v in x {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

/// Reads a series written by [`write_xs_csv`].
pub fn read_xs_csv<R: std::io::BufRead>(r: R) -> Result<Vec<f64>> {
    let mut x = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::argument(format!("csv read failed: {e}")))?;
        let line = line.trim();
        if i == 0 {
            if line != "x" {
                return Err(Error::argument(format!(
                    "csv header must be \"x\", got \"{line}\""
                )));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|e| Error::argument(format!("csv line {}: {e}", i + 1)))?;
        x.push(v);
    }
    if x.is_empty() {
        return Err(Error::degenerate("csv contains no data rows"));
    }
    Ok(x)
}

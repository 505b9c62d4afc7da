//! Parametric coefficient families `a_k(θ)`, their analytic gradients and
//! the second/fourth-moment stationarity domains.
//!
//! Three families are supported:
//!
//! * `LarchP(p)` — finite order, `a_k = θ_k` for `k ≤ p`;
//! * `Glarch(p,q)` — volatility feeds back on its own lags; the implied
//!   LARCH(∞) coefficients are the power-series expansion of the transfer
//!   function `(Σ c_i x^i) / (1 − Σ d_j x^j)` and decay geometrically;
//! * `LongMemoryPowerLaw` — `a_0(θ) = a_0`, `a_k = c · k^{d−1}` with
//!   `0 ≤ d < 1/2`, so `Σ|a_k|` diverges while `Σ a_k²` converges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which parametric family the coefficients come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Finite LARCH(p); θ = (a_0, a_1, …, a_p).
    LarchP { p: usize },
    /// GLARCH(p,q); θ = (c_0, c_1, …, c_p, d_1, …, d_q).
    Glarch { p: usize, q: usize },
    /// Long-memory power law; θ = (a_0, c, d).
    LongMemoryPowerLaw,
}

/// A coefficient family together with its parameter dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    family: Family,
}

impl ModelSpec {
    pub fn larch(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::argument("LARCH(p) requires p >= 1"));
        }
        Ok(ModelSpec {
            family: Family::LarchP { p },
        })
    }

    pub fn glarch(p: usize, q: usize) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::argument("GLARCH(p,q) requires p >= 1 and q >= 1"));
        }
        Ok(ModelSpec {
            family: Family::Glarch { p, q },
        })
    }

    pub fn long_memory() -> Self {
        ModelSpec {
            family: Family::LongMemoryPowerLaw,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Parameter dimension d: p+1, p+q+1 or 3.
    pub fn dim(&self) -> usize {
        match self.family {
            Family::LarchP { p } => p + 1,
            Family::Glarch { p, q } => p + q + 1,
            Family::LongMemoryPowerLaw => 3,
        }
    }

    /// Minimal admissible truncation order for coefficient expansion.
    pub fn order(&self) -> usize {
        match self.family {
            Family::LarchP { p } => p,
            Family::Glarch { p, q } => p.max(q),
            Family::LongMemoryPowerLaw => 1,
        }
    }

    /// `Some(p)` when the slope coefficients vanish exactly beyond a finite
    /// lag, `None` for the infinite families.
    pub fn finite_order(&self) -> Option<usize> {
        match self.family {
            Family::LarchP { p } => Some(p),
            _ => None,
        }
    }

    /// Checks length, intercept positivity and the long-memory constraint
    /// `d < 1/2`.
    pub fn validate_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::argument(format!(
                "theta has length {}, expected {}",
                theta.len(),
                self.dim()
            )));
        }
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(Error::argument("theta contains non-finite entries"));
        }
        if theta[0] <= 0.0 {
            return Err(Error::domain(format!(
                "intercept parameter must be strictly positive, got {}",
                theta[0]
            )));
        }
        if let Family::LongMemoryPowerLaw = self.family {
            if theta[2] >= 0.5 {
                return Err(Error::domain(format!(
                    "memory parameter d must satisfy d < 1/2, got {}",
                    theta[2]
                )));
            }
        }
        Ok(())
    }
}

/// Truncated coefficient sequence `a_0..a_K`, optionally with the analytic
/// gradient rows `∂_θ a_k`.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    a: Vec<f64>,
    dim: usize,
    /// Row-major (K+1) × dim; row k holds ∂a_k/∂θ_0 … ∂a_k/∂θ_{d−1}.
    grads: Option<Vec<f64>>,
}

impl CoefficientTable {
    /// The coefficients a_0..a_K.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Truncation order K.
    pub fn trunc_k(&self) -> usize {
        self.a.len() - 1
    }

    /// Parameter dimension of the gradient rows.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn intercept(&self) -> f64 {
        self.a[0]
    }

    pub fn has_grads(&self) -> bool {
        self.grads.is_some()
    }

    /// Gradient row ∂_θ a_k. Panics if gradients were not computed.
    pub fn grad_row(&self, k: usize) -> &[f64] {
        let g = self.grads.as_ref().expect("gradients not computed");
        &g[k * self.dim..(k + 1) * self.dim]
    }

    /// Number of leading entries up to and including the last non-zero
    /// coefficient (at least 1). Trailing exact zeros contribute nothing to
    /// any sum, so loops may stop here.
    pub fn effective_len(&self) -> usize {
        let mut len = self.a.len();
        while len > 1 && self.a[len - 1] == 0.0 {
            len -= 1;
        }
        len
    }

    /// Copy with gradient columns reordered by `perm` (entry i of each new
    /// row is entry perm[i] of the old one).
    #[cfg(test)]
    pub(crate) fn permuted_grads_for_tests(&self, perm: &[usize]) -> CoefficientTable {
        let grads = self.grads.as_ref().expect("gradients required");
        let mut g = vec![0.0; grads.len()];
        for k in 0..self.a.len() {
            for (i, &src) in perm.iter().enumerate() {
                g[k * self.dim + i] = grads[k * self.dim + src];
            }
        }
        CoefficientTable {
            a: self.a.clone(),
            dim: self.dim,
            grads: Some(g),
        }
    }
}

fn check_trunc_order(spec: &ModelSpec, k: usize) -> Result<()> {
    if k < spec.order() {
        return Err(Error::argument(format!(
            "truncation order K={} is below the family order {}",
            k,
            spec.order()
        )));
    }
    Ok(())
}

/// Expands θ into the LARCH(∞) coefficients a_0..a_K.
///
/// For GLARCH the slope coefficients are the power-series expansion of
/// `(Σ c_i x^i)/(1 − Σ d_j x^j)`, generated by the linear recursion
/// `a_k = c_k·1{k≤p} + Σ_j d_j a_{k−j}` (terms with `k−j < 1` read as zero),
/// and the intercept is `a_0 = c_0 / (1 − Σ d_j)`.
pub fn expand_coefficients(spec: &ModelSpec, theta: &[f64], k: usize) -> Result<CoefficientTable> {
    spec.validate_theta(theta)?;
    check_trunc_order(spec, k)?;
    let a = expand_raw(spec, theta, k)?;
    Ok(CoefficientTable {
        a,
        dim: spec.dim(),
        grads: None,
    })
}

fn expand_raw(spec: &ModelSpec, theta: &[f64], k: usize) -> Result<Vec<f64>> {
    let mut a = vec![0.0; k + 1];
    match spec.family {
        Family::LarchP { p } => {
            a[..=p.min(k)].copy_from_slice(&theta[..=p.min(k)]);
        }
        Family::Glarch { p, q: _ } => {
            let c = &theta[..=p]; // c_0..c_p
            let d = &theta[p + 1..]; // d_1..d_q
            let d_sum: f64 = d.iter().sum();
            if d_sum == 1.0 {
                return Err(Error::domain(
                    "GLARCH intercept undefined: sum of d coefficients equals 1",
                ));
            }
            a[0] = c[0] / (1.0 - d_sum);
            // a_{m−lag} terms with m ≤ lag read as zero: the intercept a_0
            // is not part of the slope recursion.
            for m in 1..=k {
                let mut v = if m <= p { c[m] } else { 0.0 };
                for (j, dj) in d.iter().enumerate() {
                    let lag = j + 1;
                    if m > lag {
                        v += dj * a[m - lag];
                    }
                }
                a[m] = v;
            }
        }
        Family::LongMemoryPowerLaw => {
            let (a0, c, dm) = (theta[0], theta[1], theta[2]);
            a[0] = a0;
            for (m, slot) in a.iter_mut().enumerate().skip(1) {
                *slot = c * (m as f64).powf(dm - 1.0);
            }
        }
    }
    Ok(a)
}

/// Like [`expand_coefficients`] but also fills the analytic gradient rows
/// `∂_θ a_k`.
pub fn grad_coefficients(spec: &ModelSpec, theta: &[f64], k: usize) -> Result<CoefficientTable> {
    spec.validate_theta(theta)?;
    check_trunc_order(spec, k)?;
    let a = expand_raw(spec, theta, k)?;
    let dim = spec.dim();
    let mut g = vec![0.0; (k + 1) * dim];
    match spec.family {
        Family::LarchP { p } => {
            // coefficients are the parameters: ∂a_k/∂θ_j = 1{j=k}
            for m in 0..=p.min(k) {
                g[m * dim + m] = 1.0;
            }
        }
        Family::Glarch { p, q } => {
            let c0 = theta[0];
            let d = &theta[p + 1..];
            let d_sum: f64 = d.iter().sum();
            let denom = 1.0 - d_sum;
            // row 0: a_0 = c_0/(1−Σd)
            g[0] = 1.0 / denom;
            for j in 0..q {
                g[p + 1 + j] = c0 / (denom * denom);
            }
            // rows k ≥ 1: differentiate the linear recursion; same
            // d-coefficients drive the gradient recursion.
            for m in 1..=k {
                let row = m * dim;
                if m <= p {
                    g[row + m] = 1.0; // ∂/∂c_m of the direct term
                }
                for (j, dj) in d.iter().enumerate() {
                    let lag = j + 1;
                    if m > lag {
                        let prev = (m - lag) * dim;
                        for i in 0..dim {
                            g[row + i] += dj * g[prev + i];
                        }
                    }
                    // ∂/∂d_j picks up the a_{m−j} factor
                    if m > lag {
                        g[row + p + 1 + j] += a[m - lag];
                    }
                }
            }
        }
        Family::LongMemoryPowerLaw => {
            let (c, dm) = (theta[1], theta[2]);
            g[0] = 1.0; // ∂a_0/∂a_0
            for m in 1..=k {
                let mf = m as f64;
                let pow = mf.powf(dm - 1.0);
                let row = m * dim;
                g[row + 1] = pow;
                g[row + 2] = c * mf.ln() * pow;
            }
        }
    }
    Ok(CoefficientTable {
        a,
        dim,
        grads: Some(g),
    })
}

/// `Σ_{j=1}^∞ j^{−s}` for `s > 1`, by partial sum plus an Euler–Maclaurin
/// tail. Absolute error below 1e−15 for s ∈ (1, 8].
fn power_sum(s: f64) -> f64 {
    debug_assert!(s > 1.0);
    const N: usize = 10_000;
    let mut sum = 0.0;
    for j in 1..N {
        sum += (j as f64).powf(-s);
    }
    let n = N as f64;
    sum + n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s * n.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * n.powf(-s - 3.0) / 720.0
}

/// `Σ_{j≥1} a_j(θ)^pow` for pow ∈ {2, 4}; `+∞` when the series cannot be
/// certified convergent (GLARCH with `Σ|d_j| ≥ 1`).
fn slope_power_sum(spec: &ModelSpec, theta: &[f64], pow: u32) -> Result<f64> {
    spec.validate_theta(theta)?;
    debug_assert!(pow == 2 || pow == 4);
    match spec.family {
        Family::LarchP { .. } => {
            let table = expand_raw(spec, theta, spec.order())?;
            Ok(table[1..].iter().map(|a| a.powi(pow as i32)).sum())
        }
        Family::Glarch { p, q } => {
            let rho: f64 = theta[p + 1..].iter().map(|d| d.abs()).sum();
            if rho >= 1.0 {
                return Ok(f64::INFINITY);
            }
            // Expand until the geometric tail bound is negligible: beyond K
            // the running sup over a q-window contracts by ρ each block, so
            // Σ_{k>K} |a_k|^pow ≤ q · m^pow · ρ^pow / (1 − ρ^pow) with m the
            // sup over the last window.
            let mut k = (p + q).max(64);
            loop {
                let a = expand_raw(spec, theta, k)?;
                let partial: f64 = a[1..].iter().map(|v| v.powi(pow as i32)).sum();
                let m = a[k + 1 - q..=k].iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                let rp = rho.powi(pow as i32);
                let tail = q as f64 * m.powi(pow as i32) * rp / (1.0 - rp);
                if tail <= 1e-14 * (1.0 + partial) {
                    return Ok(partial);
                }
                if k >= 1 << 22 {
                    return Ok(f64::INFINITY);
                }
                k *= 2;
            }
        }
        Family::LongMemoryPowerLaw => {
            let (c, d) = (theta[1], theta[2]);
            let s = pow as f64 * (1.0 - d);
            Ok(c.powi(pow as i32) * power_sum(s))
        }
    }
}

pub fn sum_squared_slopes(spec: &ModelSpec, theta: &[f64]) -> Result<f64> {
    slope_power_sum(spec, theta, 2)
}

pub fn sum_fourth_slopes(spec: &ModelSpec, theta: &[f64]) -> Result<f64> {
    slope_power_sum(spec, theta, 4)
}

/// Second-moment stationarity check: margin `σ_ξ² Σ_{j≥1} a_j²(θ)`, inside
/// iff margin < 1.
pub fn in_theta2(spec: &ModelSpec, theta: &[f64], sigma_xi2: f64) -> Result<(bool, f64)> {
    if sigma_xi2 <= 0.0 {
        return Err(Error::argument("sigma_xi2 must be positive"));
    }
    let margin = sigma_xi2 * sum_squared_slopes(spec, theta)?;
    Ok((margin < 1.0, margin))
}

/// Fourth-moment stationarity check: margin
/// `μ₄ Σ a_j⁴ + 6 σ_ξ² Σ a_j²`, inside iff margin < 1.
pub fn in_theta4(spec: &ModelSpec, theta: &[f64], sigma_xi2: f64, mu4: f64) -> Result<(bool, f64)> {
    if sigma_xi2 <= 0.0 {
        return Err(Error::argument("sigma_xi2 must be positive"));
    }
    if mu4 < sigma_xi2 * sigma_xi2 {
        return Err(Error::argument(
            "mu4 must be at least sigma_xi2^2 (Jensen)",
        ));
    }
    let margin =
        mu4 * sum_fourth_slopes(spec, theta)? + 6.0 * sigma_xi2 * sum_squared_slopes(spec, theta)?;
    Ok((margin < 1.0, margin))
}

/// Wire format for a model with parameters:
/// `{"family":"larch|glarch|longmemory","p":…,"q":…,"theta":[…]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelJson {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
}

impl ModelJson {
    pub fn from_parts(spec: &ModelSpec, theta: Option<&[f64]>) -> Self {
        let (family, p, q) = match spec.family() {
            Family::LarchP { p } => ("larch", Some(p), None),
            Family::Glarch { p, q } => ("glarch", Some(p), Some(q)),
            Family::LongMemoryPowerLaw => ("longmemory", None, None),
        };
        ModelJson {
            family: family.to_string(),
            p,
            q,
            theta: theta.map(|t| t.to_vec()),
        }
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        match self.family.as_str() {
            "larch" => {
                let p = self
                    .p
                    .ok_or_else(|| Error::argument("larch model requires field \"p\""))?;
                ModelSpec::larch(p)
            }
            "glarch" => {
                let p = self
                    .p
                    .ok_or_else(|| Error::argument("glarch model requires field \"p\""))?;
                let q = self
                    .q
                    .ok_or_else(|| Error::argument("glarch model requires field \"q\""))?;
                ModelSpec::glarch(p, q)
            }
            "longmemory" => Ok(ModelSpec::long_memory()),
            other => Err(Error::argument(format!(
                "unknown model family \"{other}\" (expected larch, glarch or longmemory)"
            ))),
        }
    }

    /// Spec plus validated parameter vector.
    pub fn spec_and_theta(&self) -> Result<(ModelSpec, Vec<f64>)> {
        let spec = self.spec()?;
        let theta = self
            .theta
            .clone()
            .ok_or_else(|| Error::argument("model JSON is missing field \"theta\""))?;
        spec.validate_theta(&theta)?;
        Ok((spec, theta))
    }
}

//! Sandwich asymptotic covariance for the fitted parameters.
//!
//! The estimator satisfies
//! `√n (θ̂ − θ*) → N(0, (σ_ξ²−1) Γ₁⁻¹ Γ₂ Γ₁⁻¹)` where
//! `Γ₁ = E[∂M ∂Mᵀ]` and `Γ₂ = E[M² ∂M ∂Mᵀ]` are estimated by the plug-in
//! sums over the truncated predictor and its gradient
//! `G_t = ∂a_0(θ̂) + Σ_{k=1}^{t−1} ∂a_k(θ̂) X_{t−k}`.

use nalgebra::DMatrix;
use statrs::distribution::ContinuousCDF;

use crate::error::{Error, Result};
use crate::estimate::predictor_series;
use crate::model::{self, CoefficientTable, Family, ModelSpec};

/// Refuse to invert Γ̂₁ above this condition number.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Plug-in noise variance estimate together with the number of samples where
/// the near-zero-volatility guard was active.
#[derive(Debug, Clone, Copy)]
pub struct SigmaXiHat {
    pub value: f64,
    pub guard_hits: usize,
}

/// Scale-equivariant default for the near-zero-volatility guard:
/// `1e−4 · mean(X²)`.
///
/// The fitted volatility crosses zero on a set of positive density for
/// LARCH models, and with any parameter error δ the ratio X²/M̃² picks up
/// δ²/M̃² spikes there whose total does not vanish as n grows. Flooring the
/// denominator at a small fraction of the signal scale removes those spikes
/// while moving the statistic by well under a percent on typical samples.
pub fn default_guard(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    1e-4 * x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// `σ̂_ξ² = (1/n) Σ_t X_t² / max((M̃_θ̂^t)², eps_guard)`.
///
/// The guard keeps the statistic finite and stable on samples where the
/// fitted volatility crosses zero; activations are counted so callers can
/// tell whether it mattered. [`default_guard`] gives a scale-appropriate
/// value.
pub fn sigma_xi_hat(
    spec: &ModelSpec,
    theta_hat: &[f64],
    x: &[f64],
    trunc_k: usize,
    eps_guard: f64,
) -> Result<SigmaXiHat> {
    if eps_guard < 0.0 {
        return Err(Error::argument("eps_guard must be non-negative"));
    }
    let m = predictor_series(spec, theta_hat, x, trunc_k)?;
    let mut guard_hits = 0;
    let mut sum = 0.0;
    for (xt, mt) in x.iter().zip(&m) {
        let mut denom = mt * mt;
        if denom < eps_guard {
            denom = eps_guard;
            guard_hits += 1;
        }
        sum += xt * xt / denom;
    }
    Ok(SigmaXiHat {
        value: sum / x.len() as f64,
        guard_hits,
    })
}

/// Index of the last gradient row with any non-zero entry, plus one.
fn grad_effective_len(table: &CoefficientTable) -> usize {
    let mut len = table.trunc_k() + 1;
    while len > 1 && table.grad_row(len - 1).iter().all(|g| *g == 0.0) {
        len -= 1;
    }
    len
}

pub(crate) fn assemble_gammas(
    table: &CoefficientTable,
    m: &[f64],
    x: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = table.dim();
    let n = x.len();
    let k_eff = grad_effective_len(table) - 1;
    let mut g1 = DMatrix::zeros(d, d);
    let mut g2 = DMatrix::zeros(d, d);
    let mut gt = vec![0.0; d];
    for t in 1..=n {
        gt.copy_from_slice(table.grad_row(0));
        for j in 1..=(t - 1).min(k_eff) {
            let xj = x[t - 1 - j];
            for (gi, row) in gt.iter_mut().zip(table.grad_row(j)) {
                *gi += row * xj;
            }
        }
        let w = m[t - 1] * m[t - 1];
        for i in 0..d {
            for l in i..d {
                let v = gt[i] * gt[l];
                g1[(i, l)] += v;
                g2[(i, l)] += w * v;
            }
        }
    }
    let nf = n as f64;
    for i in 0..d {
        for l in i..d {
            g1[(i, l)] /= nf;
            g2[(i, l)] /= nf;
            g1[(l, i)] = g1[(i, l)];
            g2[(l, i)] = g2[(i, l)];
        }
    }
    (g1, g2)
}

/// The plug-in estimators `Γ̂₁ = (1/n) Σ G_t G_tᵀ` and
/// `Γ̂₂ = (1/n) Σ (M̃_θ̂^t)² G_t G_tᵀ`, truncated at `trunc_k` like the
/// contrast they accompany.
pub fn gamma_hats(
    spec: &ModelSpec,
    theta_hat: &[f64],
    x: &[f64],
    trunc_k: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let expand_k = spec
        .finite_order()
        .map(|p| p.min(trunc_k).max(spec.order()))
        .unwrap_or(trunc_k);
    let table = model::grad_coefficients(spec, theta_hat, expand_k)?;
    let m = predictor_series(spec, theta_hat, x, trunc_k)?;
    Ok(assemble_gammas(&table, &m, x))
}

/// Sandwich covariance of θ̂ and its ingredients.
#[derive(Debug, Clone)]
pub struct SandwichCovariance {
    pub gamma1_hat: DMatrix<f64>,
    pub gamma2_hat: DMatrix<f64>,
    pub sigma_xi2_hat: f64,
    /// `(σ̂_ξ²−1) Γ̂₁⁻¹ Γ̂₂ Γ̂₁⁻¹ / n`.
    pub cov: DMatrix<f64>,
    pub n: usize,
    pub gamma1_condition: f64,
}

/// Row-major copy of a matrix, for serialization.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Builds the sandwich `(σ̂_ξ²−1) Γ̂₁⁻¹ Γ̂₂ Γ̂₁⁻¹ / n`, inverting Γ̂₁
/// through a symmetric eigendecomposition and refusing condition numbers
/// above [`CONDITION_LIMIT`].
pub fn asymptotic_cov(
    gamma1_hat: DMatrix<f64>,
    gamma2_hat: DMatrix<f64>,
    sigma_xi2_hat: f64,
    n: usize,
) -> Result<SandwichCovariance> {
    if n == 0 {
        return Err(Error::argument("sample size n must be positive"));
    }
    let d = gamma1_hat.nrows();
    if gamma1_hat.ncols() != d || gamma2_hat.nrows() != d || gamma2_hat.ncols() != d {
        return Err(Error::argument("gamma matrices must be square of equal size"));
    }
    let eig = gamma1_hat.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min_abs = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, v| a.min(v.abs()));
    let cond = if min_abs == 0.0 {
        f64::INFINITY
    } else {
        max_abs / min_abs
    };
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::Singular {
            cond,
            limit: CONDITION_LIMIT,
        });
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let inv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    let mut cov = &inv * &gamma2_hat * &inv * ((sigma_xi2_hat - 1.0) / n as f64);
    // symmetrize away rounding asymmetry from the triple product
    cov = (&cov + cov.transpose()) * 0.5;
    Ok(SandwichCovariance {
        gamma1_hat,
        gamma2_hat,
        sigma_xi2_hat,
        cov,
        n,
        gamma1_condition: cond,
    })
}

/// Per-coordinate `θ̂_i ± z_{(1+level)/2} √cov_ii`.
pub fn confidence_intervals(
    theta_hat: &[f64],
    cov: &DMatrix<f64>,
    level: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::argument("confidence level must lie in (0, 1)"));
    }
    if cov.nrows() != theta_hat.len() {
        return Err(Error::argument("covariance size does not match theta"));
    }
    let normal = statrs::distribution::Normal::new(0.0, 1.0).expect("standard normal");
    let z = normal.inverse_cdf(0.5 * (1.0 + level));
    theta_hat
        .iter()
        .enumerate()
        .map(|(i, th)| {
            let var = cov[(i, i)];
            if var < 0.0 {
                return Err(Error::NegativeVariance(format!(
                    "cov[{i},{i}] = {var:.6e}"
                )));
            }
            let half = z * var.sqrt();
            Ok((th - half, th + half))
        })
        .collect()
}

/// Multiplies the masked coordinates by `factor`, leaving the rest alone.
///
/// QML and weighted LS target the unit-variance parametrization whose scale
/// coefficients are `‖ξ₀‖₂` times the `E|ξ|=1` ones; feedback coordinates
/// (`d_j` of GLARCH, `d` of the long-memory family) are normalization-free
/// and pass through.
pub fn rescale_to_l2(theta_hat: &[f64], factor: f64, mask: &[bool]) -> Result<Vec<f64>> {
    if factor <= 0.0 {
        return Err(Error::argument("rescale factor must be positive"));
    }
    if mask.len() != theta_hat.len() {
        return Err(Error::argument("mask length does not match theta"));
    }
    Ok(theta_hat
        .iter()
        .zip(mask)
        .map(|(v, m)| if *m { factor * v } else { *v })
        .collect())
}

/// Which coordinates carry the `‖ξ₀‖₂` normalization factor.
pub fn l2_scale_mask(spec: &ModelSpec) -> Vec<bool> {
    match spec.family() {
        Family::LarchP { p } => vec![true; p + 1],
        Family::Glarch { p, q } => {
            let mut m = vec![true; p + 1];
            m.extend(std::iter::repeat(false).take(q));
            m
        }
        Family::LongMemoryPowerLaw => vec![true, true, false],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::{fit, ContrastKind, FitOptions};
    use crate::model::{expand_coefficients, grad_coefficients, ModelSpec};
    use crate::noise::NoiseSpec;
    use crate::simulate::{larch1_fourth_moment, simulate, theoretical_sigma2, SimConfig};
    use nalgebra::dmatrix;
    use std::f64::consts::PI;

    fn larch(p: usize) -> ModelSpec {
        ModelSpec::larch(p).unwrap()
    }

    #[test]
    fn gamma1_on_zero_data_is_the_intercept_outer_product() {
        let spec = larch(1);
        let x = vec![0.0; 50];
        let (g1, g2) = gamma_hats(&spec, &[1.0, 0.3], &x, 49).unwrap();
        assert_eq!(g1, dmatrix![1.0, 0.0; 0.0, 0.0]);
        // M̃ ≡ a0 = 1 on zero data, so Γ̂₂ = Γ̂₁ here
        assert_eq!(g2, g1);
    }

    #[test]
    fn larch1_gammas_match_closed_forms() {
        let spec = larch(1);
        let theta = [1.0, 0.5];
        let sigma_xi2 = PI / 2.0;
        let mu4 = 3.0 * sigma_xi2 * sigma_xi2;
        let sigma_x2 = theoretical_sigma2(&spec, &theta, sigma_xi2).unwrap();
        let ex4 = larch1_fourth_moment(theta[0], theta[1], sigma_xi2, mu4).unwrap();

        let traj = simulate(
            &spec,
            &theta,
            &NoiseSpec::GaussianL1,
            1_000_000,
            &SimConfig::default(),
            101,
        )
        .unwrap();
        let (g1, g2) = gamma_hats(&spec, &theta, &traj.x, traj.n() - 1).unwrap();

        // Γ₁* = diag(1, σ²_X)
        assert!((g1[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((g1[(1, 1)] - sigma_x2).abs() < 0.03 * sigma_x2, "{}", g1[(1, 1)]);
        assert!(g1[(0, 1)].abs() < 0.02 * sigma_x2);

        // Γ₂* = E[M² ∂M ∂Mᵀ] for M = a0 + a1 X:
        //   [ a0² + a1²σ²_X                 2 a0 a1 σ²_X       ]
        //   [ 2 a0 a1 σ²_X                  a0²σ²_X + a1⁴E[X⁴] ]
        // (the a1-power factors follow from expanding E[(a0+a1X)²X^k])
        let (a0, a1) = (theta[0], theta[1]);
        let g2_closed = [
            a0 * a0 + a1 * a1 * sigma_x2,
            2.0 * a0 * a1 * sigma_x2,
            a0 * a0 * sigma_x2 + a1 * a1 * ex4,
        ];
        assert!(
            (g2[(0, 0)] - g2_closed[0]).abs() < 0.03 * g2_closed[0],
            "g2_00 {} vs {}",
            g2[(0, 0)],
            g2_closed[0]
        );
        assert!(
            (g2[(0, 1)] - g2_closed[1]).abs() < 0.03 * g2_closed[1].abs(),
            "g2_01 {} vs {}",
            g2[(0, 1)],
            g2_closed[1]
        );
        assert!(
            (g2[(1, 1)] - g2_closed[2]).abs() < 0.05 * g2_closed[2],
            "g2_11 {} vs {}",
            g2[(1, 1)],
            g2_closed[2]
        );
    }

    #[test]
    fn larch1_sandwich_matches_closed_form() {
        let spec = larch(1);
        let theta = [1.0, 0.5];
        let sigma_xi2 = PI / 2.0;
        let mu4 = 3.0 * sigma_xi2 * sigma_xi2;
        let sigma_x2 = theoretical_sigma2(&spec, &theta, sigma_xi2).unwrap();
        let ex4 = larch1_fourth_moment(theta[0], theta[1], sigma_xi2, mu4).unwrap();

        let n = 1_000_000;
        let traj = simulate(&spec, &theta, &NoiseSpec::GaussianL1, n, &SimConfig::default(), 307)
            .unwrap();
        let (g1, g2) = gamma_hats(&spec, &theta, &traj.x, n - 1).unwrap();
        let sig = sigma_xi_hat(&spec, &theta, &traj.x, n - 1, 1e-8).unwrap();
        let sw = asymptotic_cov(g1, g2, sig.value, n).unwrap();

        // Γ₁⁻¹Γ₂Γ₁⁻¹ with the LARCH(1) ingredients
        let (a0, a1) = (theta[0], theta[1]);
        let bread = [
            a0 * a0 + a1 * a1 * sigma_x2,
            2.0 * a0 * a1,
            a0 * a0 / sigma_x2 + a1 * a1 * ex4 / (sigma_x2 * sigma_x2),
        ];
        let factor = (sigma_xi2 - 1.0) / n as f64;
        // the (1,1) entry is driven by the sample fourth moment, whose
        // heavy tail (X⁸ is not integrable here) keeps its Monte-Carlo
        // error in the several-percent range at this n
        for (got, want, band) in [
            (sw.cov[(0, 0)], factor * bread[0], 0.05),
            (sw.cov[(0, 1)], factor * bread[1], 0.05),
            (sw.cov[(1, 1)], factor * bread[2], 0.10),
        ] {
            assert!(
                (got - want).abs() < band * want.abs(),
                "cov entry {got:.6e} vs closed form {want:.6e}"
            );
        }
    }

    #[test]
    fn sigma_xi_hat_on_proportional_data_is_exact() {
        // zero-slope model: M̃ ≡ a0, with X = c·a0 the ratio is c² exactly
        let spec = larch(1);
        let x = vec![3.0; 200];
        let s = sigma_xi_hat(&spec, &[2.0, 0.0], &x, 199, 1e-8).unwrap();
        assert_eq!(s.guard_hits, 0);
        assert!((s.value - 2.25).abs() < 1e-12);
        assert!(sigma_xi_hat(&spec, &[2.0, 0.0], &x, 199, -1.0).is_err());
    }

    #[test]
    fn sigma_xi_hat_estimates_the_noise_variance() {
        let spec = larch(2);
        let theta = [5.0, -0.2, 0.4];
        for (noise, truth) in [
            (NoiseSpec::GaussianL1, PI / 2.0),
            (NoiseSpec::student(6).unwrap(), 16.0 / 9.0),
        ] {
            let traj = simulate(&spec, &theta, &noise, 100_000, &SimConfig::default(), 83).unwrap();
            let s = sigma_xi_hat(&spec, &theta, &traj.x, 5000, 1e-8).unwrap();
            assert!(
                (s.value - truth).abs() < 0.05 * truth,
                "{noise:?}: sigma_xi2_hat {} vs {truth}",
                s.value
            );
        }
    }

    #[test]
    fn sigma_xi_hat_deviation_shrinks_at_root_n_rate() {
        // quadrupling n should halve the average absolute deviation
        let spec = larch(1);
        let theta = [1.0, 0.4];
        let truth = PI / 2.0;
        let mut dev = [0.0, 0.0];
        let seeds = 50;
        for seed in 0..seeds {
            for (slot, n) in [(0usize, 4000usize), (1, 16000)] {
                let traj =
                    simulate(&spec, &theta, &NoiseSpec::GaussianL1, n, &SimConfig::default(), seed)
                        .unwrap();
                let s = sigma_xi_hat(&spec, &theta, &traj.x, n - 1, 1e-8).unwrap();
                dev[slot] += (s.value - truth).abs() / seeds as f64;
            }
        }
        let ratio = dev[0] / dev[1];
        assert!(
            (1.4..3.0).contains(&ratio),
            "deviation ratio {ratio} (means {dev:?})"
        );
    }

    #[test]
    fn asymptotic_cov_identity_example_and_scaling() {
        let id = DMatrix::<f64>::identity(2, 2);
        let sw = asymptotic_cov(id.clone(), id.clone(), 2.0, 100).unwrap();
        assert_eq!(sw.cov, DMatrix::identity(2, 2) / 100.0);
        assert_eq!(sw.gamma1_condition, 1.0);

        let sw4 = asymptotic_cov(id.clone(), id.clone(), 2.0, 400).unwrap();
        assert_eq!(sw4.cov * 4.0, sw.cov);

        let singular = dmatrix![1.0, 1.0; 1.0, 1.0];
        assert!(matches!(
            asymptotic_cov(singular, id, 2.0, 100),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn gammas_are_symmetric_psd_on_simulated_data() {
        let spec = ModelSpec::glarch(1, 1).unwrap();
        let theta = [2.0, 0.3, -0.6];
        let traj =
            simulate(&spec, &theta, &NoiseSpec::GaussianL1, 5000, &SimConfig::default(), 11)
                .unwrap();
        let (g1, g2) = gamma_hats(&spec, &theta, &traj.x, traj.n() - 1).unwrap();
        for g in [&g1, &g2] {
            assert_eq!(g, &g.transpose());
            let eig = g.clone().symmetric_eigen();
            let trace = g.trace();
            assert!(
                eig.eigenvalues.iter().all(|l| *l >= -1e-10 * trace),
                "eigenvalues {:?}",
                eig.eigenvalues
            );
        }
    }

    #[test]
    fn gamma_assembly_commutes_with_coordinate_permutation() {
        // permuting the gradient columns permutes Γ̂ rows/columns
        let spec = larch(2);
        let theta = [1.0, 0.3, -0.2];
        let mut rng = crate::noise::stream_rng(15, 0);
        use rand::Rng;
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(-2.0..2.0)).collect();
        let table = grad_coefficients(&spec, &theta, 2).unwrap();
        let m = crate::estimate::predictor_series(&spec, &theta, &x, 2).unwrap();
        let (g1, g2) = assemble_gammas(&table, &m, &x);

        let perm = [2usize, 0, 1];
        let table_p = table.permuted_grads_for_tests(&perm);
        let (g1p, g2p) = assemble_gammas(&table_p, &m, &x);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g1p[(i, j)], g1[(perm[i], perm[j])]);
                assert_eq!(g2p[(i, j)], g2[(perm[i], perm[j])]);
            }
        }
    }

    #[test]
    fn confidence_interval_basics() {
        let theta = [1.0, -0.5];
        let zero = DMatrix::zeros(2, 2);
        let ivs = confidence_intervals(&theta, &zero, 0.95).unwrap();
        assert_eq!(ivs, vec![(1.0, 1.0), (-0.5, -0.5)]);

        let id = DMatrix::identity(2, 2);
        let ivs = confidence_intervals(&theta, &id, 0.95).unwrap();
        for (i, (lo, hi)) in ivs.iter().enumerate() {
            assert!((hi - theta[i] - 1.959964).abs() < 1e-6);
            assert!((theta[i] - lo - 1.959964).abs() < 1e-6);
        }

        let neg = dmatrix![-1.0, 0.0; 0.0, 1.0];
        assert!(matches!(
            confidence_intervals(&theta, &neg, 0.95),
            Err(Error::NegativeVariance(_))
        ));
        assert!(confidence_intervals(&theta, &id, 1.0).is_err());
        assert!(confidence_intervals(&theta, &id, 0.0).is_err());
    }

    #[test]
    fn rescale_examples() {
        let theta = [5.0, -0.2, 0.4];
        let same = rescale_to_l2(&theta, 2.0, &[false, false, false]).unwrap();
        assert_eq!(same, theta.to_vec());

        let factor = (PI / 2.0f64).sqrt();
        let spec = larch(2);
        let all = rescale_to_l2(&theta, factor, &l2_scale_mask(&spec)).unwrap();
        for (a, b) in all.iter().zip(&theta) {
            assert_eq!(*a, factor * b);
        }

        let g = ModelSpec::glarch(1, 1).unwrap();
        assert_eq!(l2_scale_mask(&g), vec![true, true, false]);
        let scaled = rescale_to_l2(&[2.0, 0.3, -0.6], factor, &l2_scale_mask(&g)).unwrap();
        assert_eq!(scaled[2], -0.6);
        assert_eq!(scaled[0], 2.0 * factor);

        assert_eq!(
            l2_scale_mask(&ModelSpec::long_memory()),
            vec![true, true, false]
        );
        assert!(rescale_to_l2(&theta, 0.0, &[true, true, true]).is_err());
        assert!(rescale_to_l2(&theta, 1.0, &[true]).is_err());
    }

    #[test]
    fn end_to_end_interval_covers_truth_on_one_sample() {
        let spec = larch(1);
        let theta_star = [1.0, 0.3];
        let n = 20_000;
        let traj =
            simulate(&spec, &theta_star, &NoiseSpec::GaussianL1, n, &SimConfig::default(), 555)
                .unwrap();
        let opts = FitOptions::default_for(&spec);
        let res = fit(&spec, &traj.x, ContrastKind::Lav, &opts, 9).unwrap();
        let trunc_k = n - 1;
        let (g1, g2) = gamma_hats(&spec, &res.theta_hat, &traj.x, trunc_k).unwrap();
        let sig = sigma_xi_hat(&spec, &res.theta_hat, &traj.x, trunc_k, 1e-8).unwrap();
        let sw = asymptotic_cov(g1, g2, sig.value, n).unwrap();
        let ivs = confidence_intervals(&res.theta_hat, &sw.cov, 0.99).unwrap();
        for (i, (lo, hi)) in ivs.iter().enumerate() {
            assert!(
                *lo <= theta_star[i] && theta_star[i] <= *hi,
                "coordinate {i}: [{lo}, {hi}] misses {}",
                theta_star[i]
            );
        }
    }
}

//! Derivative-free simplex search with box projection and seeded
//! Latin-hypercube multi-start.
//!
//! The LAV objective has kinks wherever the fitted volatility crosses zero,
//! so gradient-based methods are unsafe; Nelder–Mead only compares function
//! values and is unaffected.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const ALPHA: f64 = 1.0; // reflection
const GAMMA: f64 = 2.0; // expansion
const RHO: f64 = 0.5; // contraction
const SIGMA: f64 = 0.5; // shrink

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
    pub start_index: usize,
}

fn clamp_into(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

fn simplex_diameter(simplex: &[Vec<f64>], best: &[f64]) -> f64 {
    simplex
        .iter()
        .map(|v| {
            v.iter()
                .zip(best)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Nelder–Mead from `x0`, clamping every trial point into the box.
///
/// Converged when the simplex diameter falls below `tol·(1+‖θ‖)` or the
/// spread of contrast values over the simplex falls below `tol`.
pub fn nelder_mead_box(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    bounds: &[(f64, f64)],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64, usize, bool) {
    let d = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };

    // initial simplex: x0 plus a 5%-of-box-width bump per coordinate,
    // flipped when it would leave the box
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    let mut base = x0.to_vec();
    clamp_into(&mut base, bounds);
    simplex.push(base.clone());
    for i in 0..d {
        let (lo, hi) = bounds[i];
        let step = 0.05 * (hi - lo);
        let mut v = base.clone();
        v[i] = if v[i] + step <= hi { v[i] + step } else { v[i] - step };
        clamp_into(&mut v, bounds);
        simplex.push(v);
    }
    let mut fs: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let mut converged = false;
    for _ in 0..max_iter {
        // order ascending by contrast
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&a, &b| fs[a].partial_cmp(&fs[b]).unwrap_or(std::cmp::Ordering::Equal));
        let ordered: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let ordered_f: Vec<f64> = idx.iter().map(|&i| fs[i]).collect();
        simplex = ordered;
        fs = ordered_f;

        let best_norm = simplex[0].iter().map(|v| v * v).sum::<f64>().sqrt();
        // the improvement test is relative to the contrast scale, so the
        // stopping decision is invariant under positive rescaling of the
        // objective (weighted-LS weights are defined up to a constant)
        if simplex_diameter(&simplex, &simplex[0]) < tol * (1.0 + best_norm)
            || (fs[d] - fs[0]).abs() <= tol * fs[0].abs()
        {
            converged = true;
            break;
        }

        // centroid of all but the worst
        let mut centroid = vec![0.0; d];
        for v in &simplex[..d] {
            for (c, vi) in centroid.iter_mut().zip(v) {
                *c += vi / d as f64;
            }
        }

        let trial = |coef: f64, centroid: &[f64], worst: &[f64]| -> Vec<f64> {
            let mut t: Vec<f64> = centroid
                .iter()
                .zip(worst)
                .map(|(c, w)| c + coef * (c - w))
                .collect();
            clamp_into(&mut t, bounds);
            t
        };

        let reflected = trial(ALPHA, &centroid, &simplex[d]);
        let fr = eval(&reflected, &mut evals);

        if fr < fs[0] {
            let expanded = trial(GAMMA, &centroid, &simplex[d]);
            let fe = eval(&expanded, &mut evals);
            if fe < fr {
                simplex[d] = expanded;
                fs[d] = fe;
            } else {
                simplex[d] = reflected;
                fs[d] = fr;
            }
        } else if fr < fs[d - 1] {
            simplex[d] = reflected;
            fs[d] = fr;
        } else {
            // contract toward the better of (worst, reflected)
            let (anchor, fa) = if fr < fs[d] {
                (reflected.clone(), fr)
            } else {
                (simplex[d].clone(), fs[d])
            };
            let contracted = trial(-RHO, &centroid, &anchor);
            let fc = eval(&contracted, &mut evals);
            if fc < fa {
                simplex[d] = contracted;
                fs[d] = fc;
            } else {
                // shrink toward the best vertex
                for i in 1..=d {
                    let best = simplex[0].clone();
                    for (v, b) in simplex[i].iter_mut().zip(&best) {
                        *v = b + SIGMA * (*v - b);
                    }
                    clamp_into(&mut simplex[i], bounds);
                    fs[i] = eval(&simplex[i], &mut evals);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=d {
        if fs[i] < fs[best] {
            best = i;
        }
    }
    (simplex.swap_remove(best), fs[best], evals, converged)
}

/// Latin-hypercube sample of `count` points: each coordinate is stratified
/// into `count` cells with one point per cell, in a seeded random order.
pub fn latin_hypercube(
    bounds: &[(f64, f64)],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let d = bounds.len();
    let mut points = vec![vec![0.0; d]; count];
    for (j, (lo, hi)) in bounds.iter().enumerate() {
        let mut perm: Vec<usize> = (0..count).collect();
        perm.shuffle(rng);
        let width = hi - lo;
        for (i, point) in points.iter_mut().enumerate() {
            let u: f64 = rng.random();
            point[j] = lo + (perm[i] as f64 + u) * width / count as f64;
        }
    }
    points
}

/// Runs Nelder–Mead from every Latin-hypercube start and keeps the lowest
/// contrast, ties broken by lowest start index. Total evaluation count is
/// accumulated across starts.
pub fn multi_start(
    f: &mut dyn FnMut(&[f64]) -> f64,
    bounds: &[(f64, f64)],
    starts: usize,
    tol: f64,
    max_iter: usize,
    rng: &mut ChaCha8Rng,
) -> SearchOutcome {
    let points = latin_hypercube(bounds, starts, rng);
    let mut best: Option<SearchOutcome> = None;
    let mut total_evals = 0;
    for (start_index, x0) in points.iter().enumerate() {
        let (x, fx, evals, converged) = nelder_mead_box(f, x0, bounds, tol, max_iter);
        total_evals += evals;
        let better = match &best {
            None => true,
            Some(b) => fx < b.f,
        };
        if better {
            best = Some(SearchOutcome {
                x,
                f: fx,
                evals: 0,
                converged,
                start_index,
            });
        }
    }
    let mut out = best.expect("at least one start");
    out.evals = total_evals;
    out
}

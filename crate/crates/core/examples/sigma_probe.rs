use larch::estimate::{fit, ContrastKind, FitOptions};
use larch::infer::{default_guard, sigma_xi_hat};
use larch::model::ModelSpec;
use larch::noise::NoiseSpec;
use larch::simulate::{simulate, SimConfig};
use std::f64::consts::PI;

fn main() {
    let cases: Vec<(ModelSpec, Vec<f64>, usize, Option<usize>, &str)> = vec![
        (ModelSpec::larch(2).unwrap(), vec![5.0, -0.2, 0.4], 100_000, None, "larch2 "),
        (ModelSpec::larch(1).unwrap(), vec![1.0, 0.3], 100_000, None, "larch1 "),
        (ModelSpec::glarch(1, 1).unwrap(), vec![2.0, 0.3, -0.6], 100_000, None, "glarch "),
        (ModelSpec::long_memory(), vec![1.0, 0.2, 0.1], 10_000, Some(2000), "longmem"),
    ];
    for (spec, theta_star, n, trunc_k, label) in &cases {
        for (noise, truth, nlabel) in [
            (NoiseSpec::GaussianL1, PI / 2.0, "gauss"),
            (NoiseSpec::student(6).unwrap(), 16.0 / 9.0, "t6"),
        ] {
            let mut opts = FitOptions::default_for(spec);
            opts.trunc_k = *trunc_k;
            let mut devs = Vec::new();
            for seed in [1u64, 2, 3] {
                let traj = simulate(spec, theta_star, &noise, *n, &SimConfig::default(), seed).unwrap();
                let res = fit(spec, &traj.x, ContrastKind::Lav, &opts, 4).unwrap();
                let k = trunc_k.unwrap_or(5000);
                let s = sigma_xi_hat(spec, &res.theta_hat, &traj.x, k, default_guard(&traj.x)).unwrap();
                devs.push(format!("{:+.2}", (s.value / truth - 1.0) * 100.0));
            }
            println!("{label} {nlabel:>5}: devs% = {devs:?}");
        }
    }
}

use cointssm::filter::{likelihood, likelihood_decomposition, pseudo_innovations};
use cointssm::levy::LevyConfig;
use cointssm::model::{discretize, ModelSpec};
use cointssm::simulate::{simulate_exact_gaussian, stationary_covariance, ObservationSeries};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn simulate(name: &str, n: usize, seed: u64) -> (ModelSpec, Vec<f64>, ObservationSeries) {
    let spec = ModelSpec::from_name(name).unwrap();
    let truth = spec.truth.clone().unwrap();
    let r = spec.blocks(&truth).unwrap();
    let cfg = LevyConfig::Brownian { sigma: r.sigma_l.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = simulate_exact_gaussian(&r, &cfg, 1.0, n, true, &mut rng).unwrap();
    (spec, truth, s)
}

#[test]
fn trace_identity_at_the_truth() {
    let (spec, truth, s) = simulate("canonical2d", 100_000, 40);
    let f = discretize(&spec.blocks(&truth).unwrap(), 1.0).unwrap();
    let d = 2.0;
    let target = d * (2.0 * std::f64::consts::PI).ln() + f.innovation_cov.determinant().ln() + d;
    let l = likelihood(&spec, &truth, &s);
    assert!((l - target).abs() < 0.05, "{l} vs {target}");
}

#[test]
fn innovations_are_white_with_covariance_v() {
    let (spec, truth, s) = simulate("canonical2d", 50_000, 41);
    let f = discretize(&spec.blocks(&truth).unwrap(), 1.0).unwrap();
    let eps = pseudo_innovations(&f, &s, None).unwrap().innovations;
    let n = eps.nrows();
    let burn = 50;
    let e = eps.rows(burn, n - burn).into_owned();
    let m = e.nrows() as f64;
    let bound = 3.0 / m.sqrt();
    for i in 0..2 {
        for j in 0..2 {
            let cov = e.column(i).dot(&e.column(j)) / m;
            // Var(ε_i ε_j) = V_ii V_jj + V_ij² for Gaussian innovations
            let v = &f.innovation_cov;
            let se = ((v[(i, i)] * v[(j, j)] + v[(i, j)].powi(2)) / m).sqrt();
            assert!((cov - v[(i, j)]).abs() < 5.0 * se, "V({i},{j}): {cov} vs {}", v[(i, j)]);
            for lag in 1..=10 {
                let c: f64 = (lag..e.nrows()).map(|k| e[(k, i)] * e[(k - lag, j)]).sum::<f64>() / m;
                let r = c / (v[(i, i)] * v[(j, j)]).sqrt();
                assert!(r.abs() <= bound, "lag {lag} ({i},{j}): {r} > {bound}");
            }
        }
    }
}

#[test]
fn initial_state_is_forgotten_geometrically() {
    let (spec, truth, s) = simulate("canonical2d", 300, 42);
    let f = discretize(&spec.blocks(&truth).unwrap(), 1.0).unwrap();
    let v = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
    let a = pseudo_innovations(&f, &s, None).unwrap().innovations;
    let b = pseudo_innovations(&f, &s, Some(&v)).unwrap().innovations;
    let rho = f.spectral_radius * 1.05;
    let c_norm = f.c.norm();
    // transient constant of F^k, measured on the matrix powers
    let mut pow = DMatrix::<f64>::identity(4, 4);
    let mut m = 1.0f64;
    for k in 1..300 {
        pow = &f.closed_loop * pow;
        m = m.max(pow.norm() / rho.powi(k));
    }
    for k in 0..300 {
        let gap = (a.row(k) - b.row(k)).norm();
        let bound = m * c_norm * rho.powi(k as i32) * v.norm();
        assert!(gap <= bound * (1.0 + 1e-9), "k = {k}: {gap} > {bound}");
    }
    assert!((a.row(299) - b.row(299)).norm() < 1e-10);
}

/// −(2/n)·log-likelihood of the exact Kalman filter started from the
/// stationary law, for a model without common trends.
fn exact_gaussian_criterion(spec: &ModelSpec, theta: &[f64], s: &ObservationSeries) -> f64 {
    let r = spec.blocks(theta).unwrap();
    let f = discretize(&r, s.h).unwrap();
    let (phi, q, c) = (&f.phi, &f.sigma_h, &f.c);
    let mut x = DVector::zeros(phi.nrows());
    let mut p = stationary_covariance(&r, s.h).unwrap();
    let d = s.dim() as f64;
    let mut total = 0.0;
    for k in 0..s.len() {
        let y = s.y.row(k).transpose();
        let v = c * &p * c.transpose();
        let vi = v.clone().try_inverse().unwrap();
        let e = &y - c * &x;
        total += d * (2.0 * std::f64::consts::PI).ln() + v.determinant().ln() + (e.transpose() * &vi * &e)[(0, 0)];
        let gain = &p * c.transpose() * &vi;
        x = phi * (&x + &gain * &e);
        let pu = &p - &gain * c * &p;
        p = phi * pu * phi.transpose() + q;
    }
    total / s.len() as f64
}

#[test]
fn steady_state_criterion_approaches_the_exact_one_at_rate_one_over_n() {
    let (spec, truth, s) = simulate("canonical2d-stationary", 8000, 43);
    let mut gaps = Vec::new();
    for n in [1000, 2000, 4000, 8000] {
        let sub = s.truncate(n).unwrap();
        let gap = (likelihood(&spec, &truth, &sub) - exact_gaussian_criterion(&spec, &truth, &sub)).abs();
        gaps.push(n as f64 * gap);
    }
    // n·|L̂_n − L_n| stays bounded
    let max = gaps.iter().cloned().fold(0.0, f64::max);
    let min = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max < 50.0 && max < 3.0 * min.max(1e-3), "n * gap = {gaps:?}");
}

#[test]
fn long_run_part_grows_linearly_away_from_the_truth() {
    let (spec, truth, s) = simulate("canonical2d", 8000, 44);
    for t13 in [1.5, 2.5, 4.0] {
        let mut theta = truth.clone();
        theta[12] = t13;
        let (l1_n, _) = likelihood_decomposition(&spec, &theta, &truth, &s.truncate(2000).unwrap()).unwrap();
        let (l1_4n, _) = likelihood_decomposition(&spec, &theta, &truth, &s).unwrap();
        assert!(l1_n > 0.0 && l1_4n > 0.0, "θ13 = {t13}: {l1_n}, {l1_4n}");
        // L_{n,1}/n settles at a positive level
        let ratio = (l1_4n / 8000.0) / (l1_n / 2000.0);
        assert!(ratio > 0.2 && ratio < 5.0, "θ13 = {t13}: ratio {ratio}");
    }
    let (l1, l2) = likelihood_decomposition(&spec, &truth, &truth, &s).unwrap();
    assert_eq!(l1, 0.0);
    assert_eq!(l2, likelihood(&spec, &truth, &s));
}

#[test]
fn stationary_space_fits_worse_than_the_true_space() {
    let (spec, truth, s) = simulate("canonical2d", 2000, 45);
    let stat = ModelSpec::from_name("canonical2d-stationary").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let opts = cointssm::estimate::EstimatorOptions {
        method: cointssm::estimate::Method::Bfgs,
        starts: 2,
        ..Default::default()
    };
    let init = cointssm::estimate::Init::Multi(2);
    let best_s = cointssm::estimate::qml_estimate(&stat, &s, &init, &opts, &mut rng).unwrap();
    assert!(best_s.value > likelihood(&spec, &truth, &s));
}

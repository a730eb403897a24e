//! Acceptance criteria. Every test prints one `PASS`/`FAIL` line to stderr
//! before asserting.

use std::io::Write;
use std::sync::OnceLock;

use cointssm::estimate::Method;
use cointssm::filter::{likelihood, pseudo_innovations};
use cointssm::harness::{
    misspecification_study, qq_correlation, rate_study, run_replicates, write_replicates_csv, ExperimentConfig, McRun,
};
use cointssm::levy::{levy_covariance, DriverConfig, LevyConfig, Nig};
use cointssm::matfun::{matrix_exponential, noise_covariance_integral};
use cointssm::model::{check_assumptions, discretize, vech, ModelSpec, DEFAULT_J_MAX};
use cointssm::simulate::{simulate_exact_gaussian, Scheme};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, Normal};

const BROWNIAN_STD: [f64; 12] = [
    0.0425, 0.0459, 0.0570, 0.0872, 0.0324, 0.0789, 0.0441, 0.0482, 0.0599, 0.0518, 0.0266, 0.0213,
];
const NIG_STD: [f64; 12] = [
    0.0515, 0.0573, 0.0749, 0.1126, 0.0497, 0.1071, 0.0690, 0.0684, 0.0761, 0.0678, 0.0381, 0.0314,
];

fn verdict(id: &str, ok: bool, detail: &str) {
    let line = format!("[{}] {id}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
}

fn table_config(name: &str, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_model(name);
    cfg.name = name.into();
    cfg.n = 2000;
    cfg.seed = seed;
    cfg.estimator.method = Method::Bfgs;
    cfg.estimator.starts = 5;
    cfg
}

fn nig_driver(nig: &Nig) -> DriverConfig {
    DriverConfig::Nig {
        alpha: nig.alpha,
        beta: nig.beta.iter().copied().collect(),
        delta: nig.delta,
        dispersion: nig.dispersion.row_iter().map(|r| r.iter().copied().collect()).collect(),
        mu: None,
        center: true,
    }
}

fn brownian_config(workers: usize) -> ExperimentConfig {
    let mut cfg = table_config("canonical2d", 2024);
    cfg.replicates = 100;
    cfg.workers = workers;
    cfg
}

fn brownian_run() -> &'static McRun {
    static RUN: OnceLock<McRun> = OnceLock::new();
    RUN.get_or_init(|| run_replicates(&brownian_config(1)).unwrap())
}

/// Adaptive Simpson for matrix-valued integrands.
fn simpson<F: Fn(f64) -> DMatrix<f64>>(f: &F, a: f64, b: f64, tol: f64) -> DMatrix<f64> {
    fn step<F: Fn(f64) -> DMatrix<f64>>(
        f: &F,
        a: f64,
        b: f64,
        fa: &DMatrix<f64>,
        fm: &DMatrix<f64>,
        fb: &DMatrix<f64>,
        whole: &DMatrix<f64>,
        tol: f64,
        depth: usize,
    ) -> DMatrix<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (fa + &flm * 4.0 + fm) * ((m - a) / 6.0);
        let right = (fm + &frm * 4.0 + fb) * ((b - m) / 6.0);
        let sum = &left + &right;
        if depth == 0 || (&sum - whole).amax() <= 15.0 * tol {
            return &sum + (&sum - whole) / 15.0;
        }
        step(f, a, m, fa, &flm, fm, &left, 0.5 * tol, depth - 1) + step(f, m, b, fm, &frm, fb, &right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (&fa + &fm * 4.0 + &fb) * ((b - a) / 6.0);
    step(f, a, b, &fa, &fm, &fb, &whole, tol, 40)
}

#[test]
fn c1_kernel_correctness() {
    let mut ok = true;
    let mut detail = Vec::new();
    for name in ["canonical2d", "canonical3d"] {
        let spec = ModelSpec::from_name(name).unwrap();
        let r = spec.blocks(spec.truth.as_ref().unwrap()).unwrap();
        let f = discretize(&r, 1.0).unwrap();
        let q = &r.b * &r.sigma_l * r.b.transpose();
        let integrand = |s: f64| {
            let e = matrix_exponential(&(&r.a * s)).unwrap();
            &e * &q * e.transpose()
        };
        let quad = simpson(&integrand, 0.0, 1.0, 1e-14);
        let van_loan = noise_covariance_integral(&r.a, &r.b, &r.sigma_l, 1.0).unwrap();
        let rel = (&van_loan - &quad).norm() / quad.norm();
        ok &= f.dare_residual <= 1e-10 && f.spectral_radius < 1.0 && rel <= 1e-8;
        detail.push(format!(
            "{name} residual {:.1e} rho(F) {:.4} van Loan rel err {rel:.1e}",
            f.dare_residual, f.spectral_radius
        ));
    }
    verdict("C1 kernel", ok, &detail.join("; "));
    assert!(ok);
}

#[test]
fn c2_nig_moments() {
    let reference = Nig::bivariate_reference();
    let centered = Nig::centered(
        reference.alpha,
        reference.beta.clone(),
        reference.delta,
        reference.dispersion.clone(),
    )
    .unwrap();
    let v = vech(&levy_covariance(&LevyConfig::Nig(centered.clone())).unwrap());
    let rounded: Vec<f64> = v.iter().map(|x| (x * 1e4).round() / 1e4).collect();
    let target = [0.4751, -0.1622, 0.3708];
    let mu = -DVector::from_vec(vec![3.0, 2.0]) / (2.0 * 31f64.sqrt());
    let mu_err = (&centered.mu - &mu).amax();
    let ok = rounded.iter().zip(target).all(|(a, b)| (a - b).abs() < 1e-12) && mu_err <= 1e-10;
    verdict("C2 NIG moments", ok, &format!("vech Sigma_L {v:.6?}, mu error {mu_err:.1e}"));
    assert!(ok);
}

#[test]
fn c3_likelihood_oracle() {
    let spec = ModelSpec::from_name("car1").unwrap();
    let theta = spec.truth.clone().unwrap();
    let (a, s2, h) = (theta[0], theta[1], 1.0);
    let r = spec.blocks(&theta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = LevyConfig::Brownian { sigma: r.sigma_l.clone() };
    let s = simulate_exact_gaussian(&r, &cfg, h, 5000, true, &mut rng).unwrap();
    let y: Vec<f64> = s.y.column(0).iter().copied().collect();
    // Y_k = φY_{k−1} + e_k, e_k ~ N(0, v); the filter predicts Y₁ by 0
    let phi = (-a * h).exp();
    let v = s2 * (1.0 - (-2.0 * a * h).exp()) / (2.0 * a);
    let normal = Normal::new(0.0, v.sqrt()).unwrap();
    let mut log_lik = normal.ln_pdf(y[0]);
    for k in 1..y.len() {
        log_lik += normal.ln_pdf(y[k] - phi * y[k - 1]);
    }
    let oracle = -2.0 * log_lik / y.len() as f64;
    let value = likelihood(&spec, &theta, &s);
    let err = (value - oracle).abs();
    let ok = err <= 1e-8;
    verdict("C3 likelihood oracle", ok, &format!("L = {value:.12}, AR(1) {oracle:.12}, diff {err:.1e}"));
    assert!(ok);
}

#[test]
fn c4_filter_properties() {
    let spec = ModelSpec::from_name("canonical2d").unwrap();
    let truth = spec.truth.clone().unwrap();
    let r = spec.blocks(&truth).unwrap();
    let cfg = LevyConfig::Brownian { sigma: r.sigma_l.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = simulate_exact_gaussian(&r, &cfg, 1.0, 100_000, true, &mut rng).unwrap();
    let f = discretize(&r, 1.0).unwrap();
    let eps = pseudo_innovations(&f, &s, None).unwrap().innovations;
    let e = eps.rows(50, eps.nrows() - 50).into_owned();
    let m = e.nrows() as f64;
    let v = &f.innovation_cov;
    let bound = 3.0 / (s.len() as f64).sqrt();
    let mut worst_z = 0.0f64;
    let mut worst_r = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let c = e.column(i).dot(&e.column(j)) / m;
            let se = ((v[(i, i)] * v[(j, j)] + v[(i, j)].powi(2)) / m).sqrt();
            worst_z = worst_z.max((c - v[(i, j)]).abs() / se);
            for lag in 1..=10 {
                let c: f64 = (lag..e.nrows()).map(|k| e[(k, i)] * e[(k - lag, j)]).sum::<f64>() / m;
                worst_r = worst_r.max((c / (v[(i, i)] * v[(j, j)]).sqrt()).abs());
            }
        }
    }
    let ok = worst_z < 5.0 && worst_r <= bound;
    verdict(
        "C4 filter properties",
        ok,
        &format!("max |cov − V|/se {worst_z:.2} (< 5), max |acf| {worst_r:.4} (≤ {bound:.4})"),
    );
    assert!(ok);
}

/// θ13 and the short-run checks of a Table-1 run; returns the failing parts.
fn table_checks(run: &McRun, reference_std: &[f64; 12], t13_mean: f64, t13_std: (f64, f64)) -> (bool, String) {
    let s = &run.summary;
    let k = s.index_of("theta13").unwrap();
    let long_ok = (s.mean[k] - t13_mean).abs() <= 0.01 && (t13_std.0..=t13_std.1).contains(&s.std[k]);
    let mut bad = Vec::new();
    for i in 0..12 {
        let ratio = s.std[i] / reference_std[i];
        if s.bias[i].abs() > 0.1 || !(0.5..=2.0).contains(&ratio) {
            bad.push(format!("{} bias {:.3} std ratio {ratio:.2}", s.names[i], s.bias[i]));
        }
    }
    let detail = format!(
        "theta13 mean {:.4} std {:.4} ({}); short-run {} ({} failures of {} replicates)",
        s.mean[k],
        s.std[k],
        if long_ok { "ok" } else { "off" },
        if bad.is_empty() { "ok".to_string() } else { format!("off: {}", bad.join(", ")) },
        s.failures,
        s.replicates + s.failures,
    );
    (long_ok && bad.is_empty(), detail)
}

#[test]
fn c5_table_brownian() {
    let (ok, detail) = table_checks(brownian_run(), &BROWNIAN_STD, 2.9981, (0.003, 0.015));
    verdict("C5 Table 1 Brownian", ok, &detail);
    assert!(ok);
}

#[test]
fn c5_table_nig() {
    let mut cfg = table_config("canonical2d", 2025);
    cfg.replicates = 100;
    cfg.driver = nig_driver(&Nig::bivariate_reference());
    let run = run_replicates(&cfg).unwrap();
    let (ok, detail) = table_checks(&run, &NIG_STD, 2.9999, (0.003, 0.02));
    verdict("C5 Table 1 NIG", ok, &detail);
    assert!(ok);
}

#[test]
fn c5_qq_short_run() {
    let run = brownian_run();
    let ok_records: Vec<_> = run.records.iter().filter(|r| !r.failed()).collect();
    let worst = (0..12)
        .map(|i| {
            let sample: Vec<f64> = ok_records.iter().map(|r| r.theta[i]).collect();
            (qq_correlation(&sample), i)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    let ok = worst.0 >= 0.98;
    verdict("C5 QQ normality of short-run estimates", ok, &format!("lowest correlation {:.4} (theta{})", worst.0, worst.1 + 1));
    assert!(ok);
}

#[test]
fn c5_three_dimensional_smoke() {
    let mut cfg = table_config("canonical3d", 2026);
    cfg.replicates = 10;
    cfg.estimator.starts = 2;
    cfg.driver = nig_driver(&Nig::trivariate_reference());
    let run = run_replicates(&cfg).unwrap();
    let hits = run
        .records
        .iter()
        .filter(|r| !r.failed() && (r.theta[26] - 1.0).abs() <= 0.05 && (r.theta[27] - 2.0).abs() <= 0.05)
        .count();
    let ok = hits >= 8;
    verdict("C5 3-d smoke", ok, &format!("theta27/theta28 within 0.05 on {hits}/10"));
    assert!(ok);
}

#[test]
fn c6_misspecification_ordering() {
    let mut cfg = table_config("canonical2d", 2027);
    cfg.replicates = 25;
    let study = misspecification_study(&cfg).unwrap();
    let means: Vec<f64> = study.stats.iter().map(|s| s.mean).collect();
    let ordered = means.windows(2).all(|w| w[0] < w[1]);
    let ok = ordered && (4.7..=5.7).contains(&means[0]);
    verdict(
        "C6 misspecification",
        ok,
        &format!("means {} = {means:.4?}", study.labels.join(" < ")),
    );
    assert!(ok);
}

#[test]
fn c7_rates() {
    let mut cfg = table_config("canonical2d", 2028);
    cfg.replicates = 50;
    cfg.scheme = Scheme::ExactGaussian;
    let study = rate_study(&cfg, &[500, 2000, 8000]).unwrap();
    let k = study.names.iter().position(|n| n == "theta13").unwrap();
    let long_ok = study.slopes[k] <= -0.8;
    let off: Vec<String> = (0..12)
        .filter(|&i| !(-0.7..=-0.3).contains(&study.slopes[i]))
        .map(|i| format!("{} {:.2}", study.names[i], study.slopes[i]))
        .collect();
    let ok = long_ok && off.is_empty();
    verdict(
        "C7 rates",
        ok,
        &format!(
            "theta13 slope {:.2}; short-run outside [-0.7, -0.3]: {}",
            study.slopes[k],
            if off.is_empty() { "none".into() } else { off.join(", ") }
        ),
    );
    assert!(ok);
}

#[test]
fn c8_assumption_checks() {
    let mut ok = true;
    let mut detail = Vec::new();
    for name in ["canonical2d", "canonical3d"] {
        let spec = ModelSpec::from_name(name).unwrap();
        let rep = check_assumptions(&spec, spec.truth.as_ref().unwrap(), 1.0, DEFAULT_J_MAX);
        let named = ["A4", "A6", "A9", "A10", "E"].iter().all(|c| rep.passed(c));
        let s2 = spec.short_run().len();
        let f_ok = rep.j0.is_some_and(|j| rep.psi_ranks[j] == s2);
        ok &= named && f_ok;
        detail.push(format!("{name} A4/A6/A9/A10/E {} j0 {:?} rank {:?}/{s2}", if named { "ok" } else { "off" }, rep.j0, rep.j0.map(|j| rep.psi_ranks[j])));
    }
    verdict("C8 assumptions", ok, &detail.join("; "));
    assert!(ok);
}

#[test]
fn c9_determinism_across_workers() {
    let csv = |run: &McRun| {
        let mut out = Vec::new();
        write_replicates_csv(&mut out, &run.records).unwrap();
        out
    };
    let rerun = run_replicates(&brownian_config(3)).unwrap();
    let ok = csv(brownian_run()) == csv(&rerun);
    verdict("C9 determinism", ok, "replicate CSV with 1 and 3 workers");
    assert!(ok);
}

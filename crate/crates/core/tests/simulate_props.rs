use cointssm::levy::LevyConfig;
use cointssm::matfun::{matrix_exponential, noise_covariance_integral};
use cointssm::model::{ModelSpec, Realization};
use cointssm::simulate::{simulate_euler, simulate_exact_gaussian, stationary_covariance, EulerOptions};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn canonical2d() -> (ModelSpec, Realization, LevyConfig) {
    let spec = ModelSpec::from_name("canonical2d").unwrap();
    let r = spec.blocks(spec.truth.as_ref().unwrap()).unwrap();
    let cfg = LevyConfig::Brownian { sigma: r.sigma_l.clone() };
    (spec, r, cfg)
}

/// Autocovariances Γ(j) = Cov(ΔY_{k+j}, ΔY_k), j = 0..=lags, of the sampled
/// process. With Φ = diag(I, Φ₂) the differences are
/// ΔY_k = C₂(Φ₂ − I)X_st,k−1 + Cξ_k, and X_st,k = Φ₂X_st,k−1 + ξ_st,k.
fn difference_autocovariances(r: &Realization, h: f64, lags: usize) -> Vec<DMatrix<f64>> {
    let c = r.c1.ncols();
    let ns = r.a2.nrows();
    let phi = matrix_exponential(&(&r.a * h)).unwrap();
    let sigma = noise_covariance_integral(&r.a, &r.b, &r.sigma_l, h).unwrap();
    let phi2 = phi.view((c, c), (ns, ns)).into_owned();
    let p = stationary_covariance(r, h).unwrap();
    let g = &r.c2 * (&phi2 - DMatrix::identity(ns, ns));
    let cross = sigma.rows(c, ns).into_owned(); // Cov(ξ_st,k, ξ_k)
    let mut out = vec![&g * &p * g.transpose() + &r.c * &sigma * r.c.transpose()];
    let mut pow = DMatrix::identity(ns, ns); // Φ₂^{j−1}
    for _ in 1..=lags {
        let next = &phi2 * &pow;
        out.push(&g * &next * &p * g.transpose() + &g * &pow * &cross * r.c.transpose());
        pow = next;
    }
    out
}

fn differences(y: &DMatrix<f64>) -> DMatrix<f64> {
    y.rows(1, y.nrows() - 1) - y.rows(0, y.nrows() - 1)
}

/// Sample Γ(j) entries with a batch-means standard error.
fn sample_autocov(dy: &DMatrix<f64>, lag: usize, i: usize, j: usize, batches: usize) -> (f64, f64) {
    let n = dy.nrows();
    let mi = dy.column(i).mean();
    let mj = dy.column(j).mean();
    let prods: Vec<f64> = (lag..n).map(|k| (dy[(k, i)] - mi) * (dy[(k - lag, j)] - mj)).collect();
    let est = prods.iter().sum::<f64>() / prods.len() as f64;
    let size = prods.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| prods[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let mb = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mb).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    (est, (var / batches as f64).sqrt())
}

#[test]
fn difference_autocovariances_match_the_augmented_state_oracle() {
    let (_, r, cfg) = canonical2d();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let s = simulate_exact_gaussian(&r, &cfg, 1.0, 200_000, true, &mut rng).unwrap();
    let dy = differences(&s.y);
    let oracle = difference_autocovariances(&r, 1.0, 3);
    for (lag, g) in oracle.iter().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                let (est, se) = sample_autocov(&dy, lag, i, j, 50);
                assert!(
                    (est - g[(i, j)]).abs() < 5.0 * se,
                    "lag {lag} ({i},{j}): {est} vs {} (se {se})",
                    g[(i, j)]
                );
            }
        }
    }
}

#[test]
fn euler_agrees_with_exact_scheme_within_five_percent() {
    let (_, r, cfg) = canonical2d();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let opts = EulerOptions {
        horizon: 50_000.0,
        ..EulerOptions::default()
    };
    let s = simulate_euler(&r, &cfg, &opts, &mut rng).unwrap();
    let dy = differences(&s.y);
    let g0 = &difference_autocovariances(&r, 1.0, 0)[0];
    for i in 0..2 {
        let (est, _) = sample_autocov(&dy, 0, i, i, 50);
        assert!((est / g0[(i, i)] - 1.0).abs() < 0.05, "Var dY{i}: {est} vs {}", g0[(i, i)]);
    }
}

#[test]
fn cointegrating_combination_is_stationary_and_trend_is_not() {
    let (spec, r, cfg) = canonical2d();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let s = simulate_exact_gaussian(&r, &cfg, 1.0, 8000, true, &mut rng).unwrap();
    let (c1, perp) = (&r.c1, &r.c1_perp);
    assert_eq!(spec.dims.c, 1);
    let z: Vec<f64> = s.y.row_iter().map(|y| (y * perp)[(0, 0)]).collect();
    let w: Vec<f64> = s.y.row_iter().map(|y| (y * c1)[(0, 0)]).collect();
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    let (z1, z2) = (var(&z[..4000]), var(&z[4000..]));
    assert!(z2 / z1 < 1.5 && z1 / z2 < 1.5, "C1perp'Y variance drifts: {z1} vs {z2}");
    assert!(var(&w) > 20.0 * var(&z), "C1'Y is not integrated");
    // the combination C1⊥ᵀY carries no random walk: its mean square stays at
    // the stationary level of C1⊥ᵀC₂X_st
    let p = stationary_covariance(&r, 1.0).unwrap();
    let level = (perp.transpose() * &r.c2 * &p * r.c2.transpose() * perp)[(0, 0)];
    let ms = z.iter().map(|x| x * x).sum::<f64>() / z.len() as f64;
    assert!((ms / level - 1.0).abs() < 0.25, "mean square {ms} vs stationary {level}");
}

#[test]
fn euler_scheme_converges_weakly_on_the_ou_process() {
    // dX = −aX dt + dL: the Euler chain has stationary variance
    // σ²/(a(2 − a·dt)), which tends to σ²/(2a)
    let spec = ModelSpec::from_name("car1").unwrap();
    let truth = spec.truth.clone().unwrap();
    let (a, s2) = (truth[0], truth[1]);
    let r = spec.blocks(&truth).unwrap();
    let cfg = LevyConfig::Brownian { sigma: r.sigma_l.clone() };
    let mut errors = Vec::new();
    for (seed, dt) in [(33u64, 0.5), (34, 0.05)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let opts = EulerOptions {
            horizon: 100_000.0,
            euler_dt: dt,
            h: 1.0,
            burn_in: 20,
        };
        let y = simulate_euler(&r, &cfg, &opts, &mut rng).unwrap().y;
        let v = y.iter().map(|x| x * x).sum::<f64>() / y.nrows() as f64;
        let chain = s2 / (a * (2.0 - a * dt));
        // the observations form an AR(1) with coefficient (1 − a·dt)^{1/dt}
        let rho = (1.0 - a * dt).powf(1.0 / dt);
        let se = chain * (2.0 * (1.0 + rho * rho) / (1.0 - rho * rho) / y.nrows() as f64).sqrt();
        assert!((v - chain).abs() < 5.0 * se, "dt {dt}: {v} vs {chain} (se {se})");
        errors.push((v - s2 / (2.0 * a)).abs());
    }
    assert!(errors[1] < errors[0]);
}

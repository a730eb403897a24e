use cointssm::levy::{levy_covariance, levy_mean, sample_increments, LevyConfig, Nig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn column_moments(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = x.row_mean().transpose();
    let mut cov = DMatrix::zeros(x.ncols(), x.ncols());
    for row in x.row_iter() {
        let d = row.transpose() - &mean;
        cov += &d * d.transpose();
    }
    (mean, cov / (n - 1.0))
}

fn excess_kurtosis(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

#[test]
fn small_step_increments_match_mean_and_covariance() {
    let cfg = LevyConfig::Nig(Nig::bivariate_reference());
    let dt = 0.01;
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let x = sample_increments(&cfg, dt, n, &mut rng).unwrap();
    let (mean, cov) = column_moments(&x);
    let sigma = levy_covariance(&cfg).unwrap();
    assert!(levy_mean(&cfg).amax() < 1e-14);
    for i in 0..2 {
        let se = (sigma[(i, i)] * dt / n as f64).sqrt();
        assert!(mean[i].abs() < 5.0 * se, "mean {i}: {} vs se {se}", mean[i]);
    }
    for i in 0..2 {
        for j in 0..2 {
            let target = sigma[(i, j)] * dt;
            // fourth moments are heavy at small dt, so the standard error is
            // taken from the sample itself
            let prods: Vec<f64> = x.row_iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).collect();
            let m = prods.iter().sum::<f64>() / n as f64;
            let sd = (prods.iter().map(|p| (p - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            let se = sd / (n as f64).sqrt();
            assert!((cov[(i, j)] - target).abs() < 5.0 * se, "cov {i}{j}: {} vs {target} (se {se})", cov[(i, j)]);
        }
    }
}

#[test]
fn univariate_kurtosis_matches_closed_form() {
    // NIG(α, β, δ) in one dimension: excess kurtosis 3(1 + 4β²/α²)/(δγ),
    // γ = √(α² − β²), mean μ + δβ/γ, variance δα²/γ³
    let (alpha, beta, delta) = (3.0f64, 1.0f64, 1.0f64);
    let nig = Nig::centered(alpha, DVector::from_element(1, beta), delta, DMatrix::identity(1, 1)).unwrap();
    let cfg = LevyConfig::Nig(nig);
    let gamma = (alpha * alpha - beta * beta).sqrt();
    assert!((levy_covariance(&cfg).unwrap()[(0, 0)] - delta * alpha * alpha / gamma.powi(3)).abs() < 1e-14);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = sample_increments(&cfg, 1.0, 1_000_000, &mut rng).unwrap();
    let v: Vec<f64> = x.column(0).iter().copied().collect();
    let k = excess_kurtosis(&v);
    let expected = 3.0 * (1.0 + 4.0 * beta * beta / (alpha * alpha)) / (delta * gamma);
    assert!((k - expected).abs() < 0.1, "excess kurtosis {k} vs {expected}");
}

#[test]
fn sums_of_small_steps_match_unit_steps() {
    // infinite divisibility: 100 increments over 0.01 against one over 1
    let cfg = LevyConfig::Nig(Nig::bivariate_reference());
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let n = 100_000;
    let fine = sample_increments(&cfg, 0.01, 100 * n, &mut rng).unwrap();
    let summed = DMatrix::from_fn(n, 2, |k, j| fine.rows(100 * k, 100).column(j).sum());
    let unit = sample_increments(&cfg, 1.0, n, &mut rng).unwrap();
    let (_, cs) = column_moments(&summed);
    let (_, cu) = column_moments(&unit);
    for i in 0..2 {
        assert!((cs[(i, i)] / cu[(i, i)] - 1.0).abs() < 0.03);
        let ks = excess_kurtosis(&summed.column(i).iter().copied().collect::<Vec<_>>());
        let ku = excess_kurtosis(&unit.column(i).iter().copied().collect::<Vec<_>>());
        assert!((ks - ku).abs() < 0.25, "kurtosis {ks} vs {ku}");
    }
}

#[test]
fn trivariate_reference_is_centered_and_positive_definite() {
    let nig = Nig::trivariate_reference();
    assert!(nig.mean().amax() < 1e-14);
    let cov = nig.covariance();
    assert!(cov.clone().cholesky().is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nig_covariance_is_symmetric_positive_definite(
        l21 in -0.9f64..0.9,
        b1 in -1.0f64..1.0,
        b2 in -1.0f64..1.0,
        extra in 0.1f64..3.0,
        delta in 0.1f64..3.0,
    ) {
        // Δ = L Lᵀ / det so that det Δ = 1
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, l21, 1.0]);
        let raw = &l * l.transpose();
        let dispersion = &raw / raw.determinant().sqrt();
        let beta = DVector::from_vec(vec![b1, b2]);
        let alpha = (beta.dot(&(&dispersion * &beta))).sqrt() + extra;
        let nig = Nig::centered(alpha, beta, delta, dispersion).unwrap();
        let cov = nig.covariance();
        prop_assert!((&cov - cov.transpose()).amax() < 1e-14);
        prop_assert!(cov.symmetric_eigen().eigenvalues.min() > 0.0);
    }
}

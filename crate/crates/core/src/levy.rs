//! Driving Lévy processes: multivariate Brownian motion and the multivariate
//! normal inverse Gaussian (NIG) process.
//!
//! An NIG increment over a step `dt` is drawn as a normal variance-mean
//! mixture `μ·dt + zΔβ + √z·Δ^{1/2}w` with `w` standard normal and `z`
//! inverse Gaussian with mean `δ·dt/κ` and shape `(δ·dt)²`. This is exact in
//! distribution because the NIG family is closed under convolution in `δ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, InverseGaussian, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfun;

/// Parameters of a multivariate NIG Lévy process (per unit time).
#[derive(Debug, Clone, PartialEq)]
pub struct Nig {
    pub mu: DVector<f64>,
    pub alpha: f64,
    pub beta: DVector<f64>,
    pub delta: f64,
    /// Δ, symmetric positive definite with unit determinant
    pub dispersion: DMatrix<f64>,
}

impl Nig {
    pub fn new(
        mu: DVector<f64>,
        alpha: f64,
        beta: DVector<f64>,
        delta: f64,
        dispersion: DMatrix<f64>,
    ) -> Result<Nig> {
        let m = mu.len();
        if beta.len() != m || dispersion.shape() != (m, m) {
            return Err(Error::Dimension(format!(
                "NIG: mu has {m} entries, beta {}, Delta is {:?}",
                beta.len(),
                dispersion.shape()
            )));
        }
        if !(alpha >= 0.0) || !(delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "NIG needs alpha >= 0 and delta > 0 (alpha = {alpha}, delta = {delta})"
            )));
        }
        if (&dispersion - dispersion.transpose()).amax() > 1e-12 || dispersion.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        let det = dispersion.determinant();
        if (det - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("NIG: det(Delta) = {det}, must be 1")));
        }
        let nig = Nig {
            mu,
            alpha,
            beta,
            delta,
            dispersion,
        };
        let k2 = nig.kappa_squared();
        if !(k2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "NIG: kappa^2 = alpha^2 - beta' Delta beta = {k2} must be positive"
            )));
        }
        Ok(nig)
    }

    /// Sets `μ = −δΔβ/κ` so the process has mean zero.
    pub fn centered(alpha: f64, beta: DVector<f64>, delta: f64, dispersion: DMatrix<f64>) -> Result<Nig> {
        let m = beta.len();
        let mut nig = Nig::new(DVector::zeros(m), alpha, beta, delta, dispersion)?;
        nig.mu = -nig.skew_shift();
        Ok(nig)
    }

    pub fn kappa_squared(&self) -> f64 {
        self.alpha * self.alpha - self.beta.dot(&(&self.dispersion * &self.beta))
    }

    pub fn kappa(&self) -> f64 {
        self.kappa_squared().sqrt()
    }

    /// δΔβ/κ, the mean contributed by the mixing variable.
    fn skew_shift(&self) -> DVector<f64> {
        &self.dispersion * &self.beta * (self.delta / self.kappa())
    }

    pub fn mean(&self) -> DVector<f64> {
        &self.mu + self.skew_shift()
    }

    pub fn is_centered(&self) -> bool {
        self.mean().amax() <= 1e-10
    }

    /// δκ⁻¹(Δ + κ⁻²Δββᵀ Δ).
    pub fn covariance(&self) -> DMatrix<f64> {
        let k2 = self.kappa_squared();
        let db = &self.dispersion * &self.beta;
        (&self.dispersion + &db * db.transpose() / k2) * (self.delta / k2.sqrt())
    }

    /// The bivariate driver of the two-dimensional study, with the location
    /// given explicitly as `−(1/(2√31))·(3, 2)ᵀ`.
    pub fn bivariate_reference() -> Nig {
        let scale = -1.0 / (2.0 * 31f64.sqrt());
        Nig::new(
            DVector::from_vec(vec![3.0 * scale, 2.0 * scale]),
            3.0,
            DVector::from_element(2, 1.0),
            1.0,
            DMatrix::from_row_slice(2, 2, &[1.25, -0.5, -0.5, 1.0]),
        )
        .expect("reference parameters are valid")
    }

    /// The trivariate driver of the three-dimensional study (centered).
    pub fn trivariate_reference() -> Nig {
        let r3 = 3f64.sqrt();
        Nig::centered(
            3.0,
            DVector::from_element(3, 1.0),
            1.0,
            DMatrix::from_row_slice(
                3,
                3,
                &[1.25, -0.5, r3 / 6.0, -0.5, 1.0, -r3 / 3.0, r3 / 6.0, -r3 / 3.0, 4.0 / 3.0],
            ),
        )
        .expect("reference parameters are valid")
    }
}

/// The driving noise of a model.
#[derive(Debug, Clone, PartialEq)]
pub enum LevyConfig {
    /// Brownian motion with covariance Σ_L per unit time (PSD allowed).
    Brownian { sigma: DMatrix<f64> },
    Nig(Nig),
}

impl LevyConfig {
    pub fn dim(&self) -> usize {
        match self {
            LevyConfig::Brownian { sigma } => sigma.nrows(),
            LevyConfig::Nig(n) => n.mu.len(),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, LevyConfig::Brownian { .. })
    }
}

/// Σ_L = Cov L(1).
pub fn levy_covariance(cfg: &LevyConfig) -> Result<DMatrix<f64>> {
    match cfg {
        LevyConfig::Brownian { sigma } => matfun::ensure_psd(sigma),
        LevyConfig::Nig(n) => {
            if !(n.kappa_squared() > 0.0) {
                return Err(Error::InvalidArgument("NIG: kappa^2 must be positive".into()));
            }
            Ok(n.covariance())
        }
    }
}

/// E L(1).
pub fn levy_mean(cfg: &LevyConfig) -> DVector<f64> {
    match cfg {
        LevyConfig::Brownian { sigma } => DVector::zeros(sigma.nrows()),
        LevyConfig::Nig(n) => n.mean(),
    }
}

/// Draws increments `L(t + dt) − L(t)` one at a time.
#[derive(Debug, Clone)]
pub struct IncrementSampler {
    kind: SamplerKind,
    m: usize,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Gaussian {
        factor: DMatrix<f64>,
    },
    Nig {
        drift: DVector<f64>,
        skew: DVector<f64>,
        factor: DMatrix<f64>,
        mixing: InverseGaussian<f64>,
    },
}

impl IncrementSampler {
    pub fn new(cfg: &LevyConfig, dt: f64) -> Result<IncrementSampler> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let m = cfg.dim();
        let kind = match cfg {
            LevyConfig::Brownian { sigma } => {
                let scaled = sigma * dt;
                let factor = match scaled.clone().cholesky() {
                    Some(ch) => ch.l(),
                    None => matfun::psd_sqrt(&scaled)?,
                };
                SamplerKind::Gaussian { factor }
            }
            LevyConfig::Nig(n) => {
                let delta_dt = n.delta * dt;
                let mixing = InverseGaussian::new(delta_dt / n.kappa(), delta_dt * delta_dt)
                    .map_err(|e| Error::InvalidArgument(format!("inverse Gaussian: {e}")))?;
                let factor = n.dispersion.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.l();
                SamplerKind::Nig {
                    drift: &n.mu * dt,
                    skew: &n.dispersion * &n.beta,
                    factor,
                    mixing,
                }
            }
        };
        Ok(IncrementSampler { kind, m })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// Writes one increment into `out` (length m). `w` is scratch of length m.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, w: &mut [f64], out: &mut [f64]) {
        for x in w.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        match &self.kind {
            SamplerKind::Gaussian { factor } => lower_mul(factor, w, 1.0, out),
            SamplerKind::Nig {
                drift,
                skew,
                factor,
                mixing,
            } => {
                let z = mixing.sample(rng);
                lower_mul(factor, w, z.sqrt(), out);
                for i in 0..self.m {
                    out[i] += drift[i] + z * skew[i];
                }
            }
        }
    }
}

/// out = scale · L w for a (lower triangular or full) square factor L.
fn lower_mul(l: &DMatrix<f64>, w: &[f64], scale: f64, out: &mut [f64]) {
    let m = l.nrows();
    for i in 0..m {
        let mut acc = 0.0;
        for j in 0..m {
            acc += l[(i, j)] * w[j];
        }
        out[i] = scale * acc;
    }
}

/// `count` iid increments over step `dt`, one per row.
pub fn sample_increments<R: Rng + ?Sized>(
    cfg: &LevyConfig,
    dt: f64,
    count: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let sampler = IncrementSampler::new(cfg, dt)?;
    let m = sampler.dim();
    let mut out = DMatrix::zeros(count, m);
    let mut w = vec![0.0; m];
    let mut row = vec![0.0; m];
    for k in 0..count {
        sampler.sample_into(rng, &mut w, &mut row);
        for j in 0..m {
            out[(k, j)] = row[j];
        }
    }
    Ok(out)
}

/// Serializable description of a driver, as used in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DriverConfig {
    /// Brownian motion; `sigma` defaults to the model's Σ_L at the truth.
    Brownian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<Vec<Vec<f64>>>,
    },
    Nig {
        alpha: f64,
        beta: Vec<f64>,
        delta: f64,
        dispersion: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<Vec<f64>>,
        /// set μ so the process has mean zero
        #[serde(default)]
        center: bool,
    },
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidConfig("ragged matrix".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl DriverConfig {
    /// Resolves the config; `default_sigma` is used for a Brownian driver
    /// without an explicit covariance.
    pub fn resolve(&self, default_sigma: Option<&DMatrix<f64>>) -> Result<LevyConfig> {
        match self {
            DriverConfig::Brownian { sigma } => {
                let sigma = match (sigma, default_sigma) {
                    (Some(s), _) => matrix_from_rows(s)?,
                    (None, Some(s)) => s.clone(),
                    (None, None) => {
                        return Err(Error::InvalidConfig("brownian driver needs sigma".into()))
                    }
                };
                matfun::ensure_psd(&sigma)?;
                Ok(LevyConfig::Brownian { sigma })
            }
            DriverConfig::Nig {
                alpha,
                beta,
                delta,
                dispersion,
                mu,
                center,
            } => {
                let beta = DVector::from_vec(beta.clone());
                let disp = matrix_from_rows(dispersion)?;
                let nig = match (mu, center) {
                    (_, true) => Nig::centered(*alpha, beta, *delta, disp)?,
                    (Some(mu), false) => Nig::new(DVector::from_vec(mu.clone()), *alpha, beta, *delta, disp)?,
                    (None, false) => {
                        return Err(Error::InvalidConfig("nig driver needs mu or center = true".into()))
                    }
                };
                Ok(LevyConfig::Nig(nig))
            }
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, DriverConfig::Brownian { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::vech;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn brownian_covariance_is_identity_map() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let cfg = LevyConfig::Brownian { sigma: s.clone() };
        assert_eq!(levy_covariance(&cfg).unwrap(), s);
        assert_eq!(levy_mean(&cfg), DVector::zeros(2));
    }

    #[test]
    fn nig_without_skew_has_scaled_dispersion_covariance() {
        let disp = DMatrix::from_row_slice(2, 2, &[1.25, -0.5, -0.5, 1.0]);
        let nig = Nig::new(DVector::zeros(2), 2.0, DVector::zeros(2), 0.7, disp.clone()).unwrap();
        let cov = levy_covariance(&LevyConfig::Nig(nig.clone())).unwrap();
        assert!((cov - disp * (0.7 / 2.0)).amax() < 1e-15);
        assert_eq!(nig.mean(), DVector::zeros(2));
    }

    #[test]
    fn bivariate_reference_covariance_and_mean() {
        let nig = Nig::bivariate_reference();
        assert!((nig.kappa() - 31f64.sqrt() / 2.0).abs() < 1e-14);
        let v = vech(&nig.covariance());
        let expect = [0.47508, -0.16222, 0.37080];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 5e-6, "{v:?}");
        }
        assert!(nig.mean().amax() < 1e-12);
        assert!(nig.is_centered());
    }

    #[test]
    fn trivariate_reference_covariance() {
        let nig = Nig::trivariate_reference();
        let v = vech(&nig.covariance());
        let table = [0.5310, -0.1934, 0.1678, 0.3784, -0.2227, 0.5632];
        for (a, b) in v.iter().zip(table) {
            assert!((a - b).abs() < 5e-5, "{v:?}");
        }
    }

    #[test]
    fn invalid_nig_parameters() {
        let disp = DMatrix::identity(2, 2);
        // kappa^2 = 1 - 2 < 0
        assert!(Nig::new(DVector::zeros(2), 1.0, DVector::from_element(2, 1.0), 1.0, disp.clone()).is_err());
        // det != 1
        let bad = DMatrix::from_row_slice(2, 2, &[1.2, -0.5, -0.5, 1.0]);
        assert!(Nig::new(DVector::zeros(2), 3.0, DVector::from_element(2, 1.0), 1.0, bad).is_err());
        assert!(Nig::new(DVector::zeros(2), 3.0, DVector::zeros(2), 0.0, disp).is_err());
    }

    #[test]
    fn invalid_step_is_rejected() {
        let cfg = LevyConfig::Brownian {
            sigma: DMatrix::identity(1, 1),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_increments(&cfg, 0.0, 3, &mut rng).is_err());
        assert!(sample_increments(&cfg, -1.0, 3, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_increments() {
        let cfg = LevyConfig::Nig(Nig::bivariate_reference());
        let a = sample_increments(&cfg, 0.01, 100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_increments(&cfg, 0.01, 100, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn driver_config_roundtrip() {
        let src = r#"
kind = "nig"
alpha = 3.0
beta = [1.0, 1.0]
delta = 1.0
dispersion = [[1.25, -0.5], [-0.5, 1.0]]
center = true
"#;
        let cfg: DriverConfig = toml::from_str(src).unwrap();
        let levy = cfg.resolve(None).unwrap();
        assert!(levy_mean(&levy).amax() < 1e-12);
        let text = toml::to_string(&cfg).unwrap();
        let again: DriverConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, again);
    }
}

//! Sample paths of the output process observed at `h, 2h, …, nh`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{levy_covariance, IncrementSampler, LevyConfig};
use crate::matfun;
use crate::model::Realization;

/// Tolerance for matching the driver covariance against the model's Σ_L.
const SIGMA_MATCH_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Euler,
    ExactGaussian,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::ExactGaussian => "exact-gaussian",
        })
    }
}

/// Where a series came from; written to the metadata sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub euler_dt: Option<f64>,
}

/// `Y(h), …, Y(nh)`, one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    pub h: f64,
    pub y: DMatrix<f64>,
    pub provenance: Option<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    h: f64,
    n: usize,
    d: usize,
    #[serde(flatten)]
    provenance: Provenance,
}

impl ObservationSeries {
    pub fn new(h: f64, y: DMatrix<f64>) -> Result<ObservationSeries> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument(format!("sampling step must be positive, got {h}")));
        }
        if y.nrows() < 2 {
            return Err(Error::SeriesTooShort { n: y.nrows(), needed: 2 });
        }
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(ObservationSeries { h, y, provenance: None })
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.y.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.y.ncols()
    }

    /// The first `n` observations.
    pub fn truncate(&self, n: usize) -> Result<ObservationSeries> {
        if n > self.len() {
            return Err(Error::InvalidArgument(format!("cannot take {n} of {} observations", self.len())));
        }
        let mut s = ObservationSeries::new(self.h, self.y.rows(0, n).into_owned())?;
        s.provenance = self.provenance.clone();
        Ok(s)
    }

    /// Writes `k,y1,…,yd` rows to `path`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["k".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("y{i}")));
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut rec = vec![(k + 1).to_string()];
            rec.extend(self.y.row(k).iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`ObservationSeries::write_csv`].
    pub fn read_csv(path: &Path, h: f64) -> Result<ObservationSeries> {
        let mut r = csv::Reader::from_path(path)?;
        let d = r.headers()?.len().saturating_sub(1);
        if d == 0 {
            return Err(Error::Empty(format!("{}: no data columns", path.display())));
        }
        let mut data = Vec::new();
        let mut n = 0;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != d + 1 {
                return Err(Error::Dimension(format!("{}: row {} has {} fields", path.display(), n + 1, rec.len())));
            }
            for field in rec.iter().skip(1) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("not a number: `{field}`")))?;
                data.push(v);
            }
            n += 1;
        }
        ObservationSeries::new(h, DMatrix::from_row_slice(n, d, &data))
    }

    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("toml")
    }

    /// Writes the CSV and a TOML sidecar holding `h` and the provenance.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        self.write_csv(csv_path)?;
        let meta = Sidecar {
            h: self.h,
            n: self.len(),
            d: self.dim(),
            provenance: self.provenance.clone().unwrap_or(Provenance {
                seed: None,
                scheme: None,
                euler_dt: None,
            }),
        };
        fs::write(Self::sidecar_path(csv_path), toml::to_string(&meta)?)?;
        Ok(())
    }

    /// Reads a series saved by [`ObservationSeries::save`]. Without a
    /// sidecar, `default_h` is used.
    pub fn load(csv_path: &Path, default_h: Option<f64>) -> Result<ObservationSeries> {
        let side = Self::sidecar_path(csv_path);
        if side.exists() {
            let meta: Sidecar = toml::from_str(&fs::read_to_string(&side)?)?;
            let mut s = Self::read_csv(csv_path, meta.h)?;
            if s.len() != meta.n || s.dim() != meta.d {
                return Err(Error::Dimension(format!(
                    "{}: sidecar says {}x{}, data is {}x{}",
                    csv_path.display(),
                    meta.n,
                    meta.d,
                    s.len(),
                    s.dim()
                )));
            }
            s.provenance = Some(meta.provenance);
            Ok(s)
        } else {
            let h = default_h.ok_or_else(|| {
                Error::InvalidConfig(format!("{} has no sidecar and no h was given", csv_path.display()))
            })?;
            Self::read_csv(csv_path, h)
        }
    }
}

/// Grid of the Euler scheme. `burn_in` counts sampling steps simulated and
/// discarded before the first recorded observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerOptions {
    pub horizon: f64,
    pub euler_dt: f64,
    pub h: f64,
    pub burn_in: usize,
}

impl Default for EulerOptions {
    fn default() -> Self {
        EulerOptions {
            horizon: 2000.0,
            euler_dt: 0.01,
            h: 1.0,
            burn_in: 0,
        }
    }
}

/// `num / den` as an integer, if it is one up to round-off.
fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    if !(num > 0.0) || !(den > 0.0) || !num.is_finite() || !den.is_finite() {
        return None;
    }
    let q = num / den;
    let r = q.round();
    if r >= 1.0 && (q - r).abs() <= 1e-9 * r {
        Some(r as usize)
    } else {
        None
    }
}

fn check_driver(r: &Realization, cfg: &LevyConfig) -> Result<()> {
    if cfg.dim() != r.sigma_l.nrows() {
        return Err(Error::Dimension(format!(
            "driver is {}-dimensional, model expects {}",
            cfg.dim(),
            r.sigma_l.nrows()
        )));
    }
    let cov = levy_covariance(cfg)?;
    let gap = (&cov - &r.sigma_l).amax();
    if gap > SIGMA_MATCH_TOL {
        return Err(Error::InvalidArgument(format!(
            "driver covariance differs from the model's Sigma_L by {gap:.3e}"
        )));
    }
    Ok(())
}

/// Euler scheme `X ← X + A X dt + B ΔL` from `X(0) = 0`, recording
/// `Y = C X` at `h, 2h, …, T`.
pub fn simulate_euler<R: Rng + ?Sized>(
    r: &Realization,
    cfg: &LevyConfig,
    opts: &EulerOptions,
    rng: &mut R,
) -> Result<ObservationSeries> {
    let per_obs = integer_ratio(opts.h, opts.euler_dt).ok_or_else(|| {
        Error::InvalidArgument(format!("euler_dt = {} does not divide h = {}", opts.euler_dt, opts.h))
    })?;
    let n_obs = integer_ratio(opts.horizon, opts.h).ok_or_else(|| {
        Error::InvalidArgument(format!("h = {} does not divide T = {}", opts.h, opts.horizon))
    })?;
    if n_obs < 2 {
        return Err(Error::SeriesTooShort { n: n_obs, needed: 2 });
    }
    check_driver(r, cfg)?;
    let dt = opts.h / per_obs as f64;
    let sampler = IncrementSampler::new(cfg, dt)?;
    let dims = r.dims();
    let (n, m, d) = (dims.n, dims.m, dims.d);
    let step = DMatrix::<f64>::identity(n, n) + &r.a * dt;

    let mut x = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut dl = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut y = DMatrix::zeros(n_obs, d);
    for k in 0..opts.burn_in + n_obs {
        for _ in 0..per_obs {
            sampler.sample_into(rng, &mut w, &mut dl);
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += step[(i, j)] * x[j];
                }
                for j in 0..m {
                    acc += r.b[(i, j)] * dl[j];
                }
                next[i] = acc;
            }
            std::mem::swap(&mut x, &mut next);
        }
        if k >= opts.burn_in {
            let row = k - opts.burn_in;
            for i in 0..d {
                y[(row, i)] = (0..n).map(|j| r.c[(i, j)] * x[j]).sum();
            }
        }
    }
    let mut s = ObservationSeries::new(opts.h, y)?;
    s.provenance = Some(Provenance {
        seed: None,
        scheme: Some(Scheme::Euler),
        euler_dt: Some(dt),
    });
    Ok(s)
}

/// Covariance of the stationary law of the `A₂`-block of the state.
pub fn stationary_covariance(r: &Realization, h: f64) -> Result<DMatrix<f64>> {
    let ns = r.a2.nrows();
    if ns == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let phi2 = matfun::matrix_exponential(&(&r.a2 * h))?;
    let q2 = matfun::noise_covariance_integral(&r.a2, &r.b2, &r.sigma_l, h)?;
    matfun::stein_doubling(&phi2, &q2).ok_or(Error::Assumption {
        name: "A4",
        detail: "A2 is not stable; no stationary law".into(),
    })
}

/// Lower factor `S` with `S Sᵀ = M` for PSD `M`.
fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match m.clone().cholesky() {
        Some(ch) => Ok(ch.l()),
        None => matfun::psd_sqrt(m),
    }
}

fn gaussian_draw<R: Rng + ?Sized>(s: &DMatrix<f64>, rng: &mut R, w: &mut [f64], out: &mut [f64]) {
    for x in w.iter_mut() {
        *x = rng.sample(StandardNormal);
    }
    for i in 0..s.nrows() {
        out[i] = (0..s.ncols()).map(|j| s[(i, j)] * w[j]).sum();
    }
}

/// Exact simulation of the sampled model `X_k = Φ X_{k−1} + ξ_k` with
/// Gaussian `ξ_k ~ N(0, Σ^{(h)})`. The integrated part starts at zero; the
/// stationary part starts at zero or, with `stationary_init`, from its
/// stationary law.
pub fn simulate_exact_gaussian<R: Rng + ?Sized>(
    r: &Realization,
    cfg: &LevyConfig,
    h: f64,
    n_obs: usize,
    stationary_init: bool,
    rng: &mut R,
) -> Result<ObservationSeries> {
    if !cfg.is_gaussian() {
        return Err(Error::InvalidArgument(
            "exact simulation needs a Brownian driver".into(),
        ));
    }
    if n_obs < 2 {
        return Err(Error::SeriesTooShort { n: n_obs, needed: 2 });
    }
    check_driver(r, cfg)?;
    let dims = r.dims();
    let (n, d, c) = (dims.n, dims.d, dims.c);
    let phi = matfun::matrix_exponential(&(&r.a * h))?;
    let sigma_h = matfun::noise_covariance_integral(&r.a, &r.b, &r.sigma_l, h)?;
    let s = psd_factor(&sigma_h)?;

    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut xi = vec![0.0; n];
    if stationary_init && n > c {
        let p2 = stationary_covariance(r, h)?;
        let s2 = psd_factor(&p2)?;
        gaussian_draw(&s2, rng, &mut w[..n - c], &mut xi[..n - c]);
        x[c..].copy_from_slice(&xi[..n - c]);
    }
    let mut next = vec![0.0; n];
    let mut y = DMatrix::zeros(n_obs, d);
    for k in 0..n_obs {
        gaussian_draw(&s, rng, &mut w, &mut xi);
        for i in 0..n {
            next[i] = xi[i] + (0..n).map(|j| phi[(i, j)] * x[j]).sum::<f64>();
        }
        std::mem::swap(&mut x, &mut next);
        for i in 0..d {
            y[(k, i)] = (0..n).map(|j| r.c[(i, j)] * x[j]).sum();
        }
    }
    let mut out = ObservationSeries::new(h, y)?;
    out.provenance = Some(Provenance {
        seed: None,
        scheme: Some(Scheme::ExactGaussian),
        euler_dt: None,
    });
    Ok(out)
}

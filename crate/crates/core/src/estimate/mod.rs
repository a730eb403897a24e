//! Quasi-maximum likelihood estimation over the parameter box and plug-in
//! sandwich covariance for the short-run parameters.

pub mod optim;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{likelihood, quasi_log_likelihood};
use crate::matfun;
use crate::model::ModelSpec;
use crate::simulate::ObservationSeries;

pub use optim::{Method, OptimResult, Status, StopRule};

/// Relative step of the central-difference gradient and scores.
pub const GRADIENT_STEP: f64 = 1e-5;
/// Relative step of the finite-difference Hessian.
pub const HESSIAN_STEP: f64 = 1e-4;
/// Minimal distance of a short-run estimate from its bounds.
pub const BOUNDARY_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorOptions {
    pub method: Method,
    /// number of starting points
    pub starts: usize,
    /// half-width of the uniform perturbation around the reference point
    pub start_spread: f64,
    pub max_iter: usize,
    pub x_tol: f64,
    pub f_tol: f64,
    /// initial simplex edge, relative to `1 + |θ_i|`
    pub simplex_step: f64,
    /// run the starts on the rayon pool
    pub parallel: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            method: Method::NelderMead,
            starts: 5,
            start_spread: 0.1,
            max_iter: 20_000,
            x_tol: 1e-8,
            f_tol: 1e-10,
            simplex_step: 0.05,
            parallel: true,
        }
    }
}

impl EstimatorOptions {
    fn stop_rule(&self) -> StopRule {
        StopRule {
            x_tol: self.x_tol,
            f_tol: self.f_tol,
            max_iter: self.max_iter,
        }
    }
}

/// Where the minimizer starts.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// a single start at this point
    Point(Vec<f64>),
    /// `count` starts: the model's reference point plus uniform noise of
    /// half-width `start_spread` per coordinate, or uniform draws over the
    /// box if the model has no reference point
    Multi(usize),
    /// `count` starts perturbed around a given point
    Around(Vec<f64>, usize),
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub theta: Vec<f64>,
    /// ϑ̂₁, the long-run coordinates
    pub long_run: Vec<f64>,
    /// ϑ̂₂, the short-run coordinates
    pub short_run: Vec<f64>,
    /// L̂_n(ϑ̂)
    pub value: f64,
    pub status: Status,
    pub iterations: usize,
    pub evaluations: usize,
    /// index of the start that produced the estimate
    pub best_start: usize,
    /// final value of every start (`+∞` for infeasible ones)
    pub start_values: Vec<f64>,
    pub trace: Vec<f64>,
    pub covariance: Option<ShortRunCovariance>,
}

fn start_points<R: Rng + ?Sized>(spec: &ModelSpec, init: &Init, spread: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let s = spec.num_params();
    let around = |center: &[f64], count: usize, rng: &mut R| -> Result<Vec<Vec<f64>>> {
        if center.len() != s {
            return Err(Error::Dimension(format!("start has {} entries, model has {s}", center.len())));
        }
        Ok((0..count)
            .map(|_| {
                let mut p: Vec<f64> = center.iter().map(|c| c + rng.random_range(-spread..=spread)).collect();
                spec.project(&mut p);
                p
            })
            .collect())
    };
    match init {
        Init::Point(p) => {
            if p.len() != s {
                return Err(Error::Dimension(format!("start has {} entries, model has {s}", p.len())));
            }
            let mut p = p.clone();
            spec.project(&mut p);
            Ok(vec![p])
        }
        Init::Around(center, count) => around(center, (*count).max(1), rng),
        Init::Multi(count) => match &spec.truth {
            Some(t) => around(t, (*count).max(1), rng),
            None => Ok((0..(*count).max(1))
                .map(|_| {
                    (0..s)
                        .map(|i| rng.random_range(spec.lower[i]..=spec.upper[i]))
                        .collect()
                })
                .collect()),
        },
    }
}

/// Minimizes L̂_n over the parameter box from one or several starts and
/// returns the best local minimum (ties go to the lower start index).
pub fn qml_estimate<R: Rng + ?Sized>(
    spec: &ModelSpec,
    series: &ObservationSeries,
    init: &Init,
    opts: &EstimatorOptions,
    rng: &mut R,
) -> Result<EstimationResult> {
    let s = spec.num_params();
    if series.len() < s {
        return Err(Error::SeriesTooShort { n: series.len(), needed: s });
    }
    if series.dim() != spec.dims.d {
        return Err(Error::Dimension(format!(
            "series has {} columns, model {} has output dimension {}",
            series.dim(),
            spec.name,
            spec.dims.d
        )));
    }
    let mut starts = start_points(spec, init, opts.start_spread, rng)?;
    // random starts that land on an infeasible point are redrawn
    let single = match init {
        Init::Multi(_) => Some(Init::Multi(1)),
        Init::Around(c, _) => Some(Init::Around(c.clone(), 1)),
        Init::Point(_) => None,
    };
    if let Some(single) = &single {
        for p in starts.iter_mut() {
            for _ in 0..1000 {
                if likelihood(spec, p, series).is_finite() {
                    break;
                }
                *p = start_points(spec, single, opts.start_spread, rng)?.swap_remove(0);
            }
        }
    }
    let stop = opts.stop_rule();
    let run = |x0: &Vec<f64>| -> OptimResult {
        let obj = |t: &[f64]| likelihood(spec, t, series);
        let bounds = optim::Bounds {
            lower: &spec.lower,
            upper: &spec.upper,
        };
        match opts.method {
            Method::NelderMead => {
                let step: Vec<f64> = x0.iter().map(|v| opts.simplex_step * (1.0 + v.abs())).collect();
                optim::nelder_mead(obj, x0, &bounds, &step, &stop)
            }
            Method::Bfgs => {
                let h0 = score_outer_product(spec, x0, series).and_then(|m| m.try_inverse());
                optim::bfgs(obj, x0, &bounds, GRADIENT_STEP, &stop, h0)
            }
        }
    };
    let results: Vec<OptimResult> = if opts.parallel && starts.len() > 1 {
        starts.par_iter().map(run).collect()
    } else {
        starts.iter().map(run).collect()
    };
    let best = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.value.is_finite())
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .ok_or(Error::AllStartsInfeasible)?;
    let r = &results[best];
    let (long_run, short_run) = spec.split(&r.x);
    Ok(EstimationResult {
        theta: r.x.clone(),
        long_run,
        short_run,
        value: r.value,
        status: r.status,
        iterations: results.iter().map(|r| r.iterations).sum(),
        evaluations: results.iter().map(|r| r.evaluations).sum(),
        best_start: best,
        start_values: results.iter().map(|r| r.value).collect(),
        trace: r.trace.clone(),
        covariance: None,
    })
}

/// `(1/2n) Σ_k ∇ℓ_k ∇ℓ_kᵀ`, the outer-product approximation to the Hessian
/// of L̂_n, lightly regularized. `None` where a score is unavailable.
fn score_outer_product(spec: &ModelSpec, theta: &[f64], series: &ObservationSeries) -> Option<DMatrix<f64>> {
    let s = theta.len();
    let n = series.len();
    let mut scores = DMatrix::zeros(n, s);
    let mut p = theta.to_vec();
    for i in 0..s {
        let h = GRADIENT_STEP * (1.0 + theta[i].abs());
        let up = (theta[i] + h).min(spec.upper[i]);
        let dn = (theta[i] - h).max(spec.lower[i]);
        p[i] = up;
        let fu = quasi_log_likelihood(spec, &p, series);
        p[i] = dn;
        let fd = quasi_log_likelihood(spec, &p, series);
        p[i] = theta[i];
        if !fu.is_finite() || !fd.is_finite() || up <= dn {
            return None;
        }
        for (k, (a, b)) in fu.contributions().iter().zip(fd.contributions()).enumerate() {
            scores[(k, i)] = (a - b) / (up - dn);
        }
    }
    let mut opg = scores.transpose() * &scores / (2.0 * n as f64);
    let ridge = 1e-10 * opg.trace() / s as f64;
    for i in 0..s {
        opg[(i, i)] += ridge;
    }
    Some(opg)
}

/// Plug-in estimate of `Z⁻¹ I Z⁻¹ / n` for the short-run coordinates.
#[derive(Debug, Clone)]
pub struct ShortRunCovariance {
    /// indices of the short-run coordinates in ϑ
    pub indices: Vec<usize>,
    pub matrix: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    /// Hessian of L̂_n before symmetrization
    pub hessian: DMatrix<f64>,
    /// long-run score covariance Î
    pub score_covariance: DMatrix<f64>,
    pub bandwidth: usize,
}

fn rel_step(rel: f64, x: f64) -> f64 {
    rel * x.abs().max(1.0)
}

/// Sandwich covariance of ϑ̂₂ with a Bartlett-weighted long-run score
/// covariance; `bandwidth` defaults to `⌊n^{1/3}⌋`.
pub fn short_run_covariance(
    spec: &ModelSpec,
    theta: &[f64],
    series: &ObservationSeries,
    bandwidth: Option<usize>,
) -> Result<ShortRunCovariance> {
    spec.check_bounds(theta)?;
    let idx = spec.short_run();
    for &i in &idx {
        if theta[i] - spec.lower[i] < BOUNDARY_MARGIN || spec.upper[i] - theta[i] < BOUNDARY_MARGIN {
            return Err(Error::BoundaryEstimate(i));
        }
    }
    let n = series.len();
    let s2 = idx.len();
    let eval = |t: &[f64]| -> Result<crate::filter::LikelihoodValue> {
        let v = quasi_log_likelihood(spec, t, series);
        match &v.tag {
            Some(tag) => Err(Error::Infeasible(tag.clone())),
            None => Ok(v),
        }
    };

    // gradient of L̂_n by central differences, then its central difference
    let grad = |t: &[f64]| -> Result<Vec<f64>> {
        let mut g = Vec::with_capacity(s2);
        let mut p = t.to_vec();
        for &i in &idx {
            let h = rel_step(GRADIENT_STEP, t[i]);
            p[i] = t[i] + h;
            let fu = eval(&p)?.value;
            p[i] = t[i] - h;
            let fd = eval(&p)?.value;
            p[i] = t[i];
            g.push((fu - fd) / (2.0 * h));
        }
        Ok(g)
    };
    let mut hessian = DMatrix::zeros(s2, s2);
    let mut p = theta.to_vec();
    for (a, &i) in idx.iter().enumerate() {
        let h = rel_step(HESSIAN_STEP, theta[i]);
        p[i] = theta[i] + h;
        let gu = grad(&p)?;
        p[i] = theta[i] - h;
        let gd = grad(&p)?;
        p[i] = theta[i];
        for b in 0..s2 {
            hessian[(a, b)] = (gu[b] - gd[b]) / (2.0 * h);
        }
    }
    let z = matfun::symmetrize(&hessian);
    let eig = nalgebra::SymmetricEigen::new(z.clone()).eigenvalues;
    let emax = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let emin = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(emax > 0.0) || emin <= 1e-10 * emax {
        return Err(Error::SingularHessian);
    }
    let z_inv = z.clone().try_inverse().ok_or(Error::SingularHessian)?;

    // per-observation scores of ℓ_k
    let mut scores = DMatrix::zeros(n, s2);
    for (a, &i) in idx.iter().enumerate() {
        let h = rel_step(GRADIENT_STEP, theta[i]);
        p[i] = theta[i] + h;
        let up = eval(&p)?.contributions();
        p[i] = theta[i] - h;
        let dn = eval(&p)?.contributions();
        p[i] = theta[i];
        for k in 0..n {
            scores[(k, a)] = (up[k] - dn[k]) / (2.0 * h);
        }
    }
    let mean = scores.row_mean();
    for k in 0..n {
        let mut row = scores.row_mut(k);
        row -= &mean;
    }
    let bw = bandwidth.unwrap_or_else(|| (n as f64).cbrt().floor() as usize).min(n - 1);
    let mut info = DMatrix::zeros(s2, s2);
    for lag in 0..=bw {
        let w = 1.0 - lag as f64 / (bw as f64 + 1.0);
        let head = scores.rows(0, n - lag);
        let tail = scores.rows(lag, n - lag);
        let gamma = tail.transpose() * head / n as f64;
        if lag == 0 {
            info += gamma;
        } else {
            info += (&gamma + gamma.transpose()) * w;
        }
    }
    let cov = matfun::symmetrize(&(&z_inv * &info * &z_inv / n as f64));
    let std_errors = cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    Ok(ShortRunCovariance {
        indices: idx,
        matrix: cov,
        std_errors,
        hessian,
        score_covariance: info,
        bandwidth: bw,
    })
}

/// Gradient of L̂_n at ϑ by central differences (one-sided at the bounds).
pub fn likelihood_gradient(spec: &ModelSpec, theta: &[f64], series: &ObservationSeries) -> Result<DVector<f64>> {
    let mut g = DVector::zeros(theta.len());
    let mut p = theta.to_vec();
    for i in 0..theta.len() {
        let h = rel_step(GRADIENT_STEP, theta[i]);
        let up = (theta[i] + h).min(spec.upper[i]);
        let dn = (theta[i] - h).max(spec.lower[i]);
        p[i] = up;
        let fu = likelihood(spec, &p, series);
        p[i] = dn;
        let fd = likelihood(spec, &p, series);
        p[i] = theta[i];
        if !fu.is_finite() || !fd.is_finite() {
            return Err(Error::Infeasible(format!("coordinate {i} near {}", theta[i])));
        }
        g[i] = (fu - fd) / (up - dn);
    }
    Ok(g)
}

//! Pseudo-innovations of the steady-state Kalman filter and the Gaussian
//! quasi-likelihood built from them.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{build_realization, steady_state, DiscreteFilter, ModelSpec};
use crate::simulate::ObservationSeries;

/// Relative eigenvalue floor below which `V` counts as singular.
const V_CONDITION_FLOOR: f64 = 1e-12;

/// ε̂_k and X̂_k for k = 1..n, together with the filter that produced them.
#[derive(Debug, Clone)]
pub struct InnovationSeries {
    pub innovations: DMatrix<f64>,
    pub states: DMatrix<f64>,
    pub filter: DiscreteFilter,
}

fn check_step(f: &DiscreteFilter, series: &ObservationSeries) -> Result<()> {
    if (f.h - series.h).abs() > 1e-12 * f.h.max(series.h) {
        return Err(Error::InvalidArgument(format!(
            "filter built for h = {}, series sampled at h = {}",
            f.h, series.h
        )));
    }
    if series.dim() != f.output_dim() {
        return Err(Error::Dimension(format!(
            "series has {} columns, model output has dimension {}",
            series.dim(),
            f.output_dim()
        )));
    }
    Ok(())
}

/// Runs `X̂_k = F X̂_{k−1} + K Y_{k−1}`, `ε̂_k = Y_k − C X̂_k` from `X̂₁ = x1`
/// (zero when `None`).
pub fn pseudo_innovations(
    f: &DiscreteFilter,
    series: &ObservationSeries,
    x1: Option<&DVector<f64>>,
) -> Result<InnovationSeries> {
    check_step(f, series)?;
    let n_state = f.state_dim();
    let mut x = match x1 {
        Some(v) if v.len() != n_state => {
            return Err(Error::Dimension(format!(
                "initial state has {} entries, state dimension is {n_state}",
                v.len()
            )))
        }
        Some(v) => v.clone(),
        None => DVector::zeros(n_state),
    };
    let n = series.len();
    let mut eps = DMatrix::zeros(n, f.output_dim());
    let mut states = DMatrix::zeros(n, n_state);
    for k in 0..n {
        let yk = series.y.row(k).transpose();
        let e = &yk - &f.c * &x;
        eps.set_row(k, &e.transpose());
        states.set_row(k, &x.transpose());
        x = &f.closed_loop * &x + &f.gain * &yk;
    }
    Ok(InnovationSeries {
        innovations: eps,
        states,
        filter: f.clone(),
    })
}

/// Value of L̂_n(ϑ). Infeasible parameters give `+∞` and a `tag` naming the
/// reason.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodValue {
    pub value: f64,
    pub n: usize,
    /// ε̂_kᵀ V⁻¹ ε̂_k, empty when the value is infinite or was not requested
    pub quad_forms: Vec<f64>,
    /// d·log 2π + log det V
    pub constant: f64,
    pub tag: Option<String>,
}

impl LikelihoodValue {
    fn infeasible(n: usize, tag: String) -> LikelihoodValue {
        LikelihoodValue {
            value: f64::INFINITY,
            n,
            quad_forms: Vec::new(),
            constant: f64::NAN,
            tag: Some(tag),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    /// Per-observation contributions `d·log 2π + log det V + ε̂ᵀV⁻¹ε̂`.
    pub fn contributions(&self) -> Vec<f64> {
        self.quad_forms.iter().map(|q| self.constant + q).collect()
    }
}

/// Cholesky factor of `V` after the conditioning guard.
fn factor_innovation_cov(v: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let eig = nalgebra::SymmetricEigen::new(crate::matfun::symmetrize(v)).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min < V_CONDITION_FLOOR * max {
        return Err(Error::SingularInnovation);
    }
    v.clone().cholesky().ok_or(Error::SingularInnovation)
}

/// Row-major copies of the filter matrices for the likelihood loop.
struct Kernel {
    ns: usize,
    d: usize,
    c: Vec<f64>,
    /// rows of (F, K)
    fk: Vec<f64>,
    l: Vec<f64>,
    inv_diag: Vec<f64>,
}

impl Kernel {
    fn new(f: &DiscreteFilter, l: &DMatrix<f64>) -> Kernel {
        let ns = f.state_dim();
        let d = f.output_dim();
        let fk = (0..ns)
            .flat_map(|i| {
                f.closed_loop
                    .row(i)
                    .iter()
                    .chain(f.gain.row(i).iter())
                    .cloned()
                    .collect::<Vec<_>>()
            })
            .collect();
        Kernel {
            ns,
            d,
            c: f.c.transpose().as_slice().to_vec(),
            fk,
            l: l.transpose().as_slice().to_vec(),
            inv_diag: (0..d).map(|i| 1.0 / l[(i, i)]).collect(),
        }
    }

    /// Sum of ε̂ᵀV⁻¹ε̂ over the observations `ys` (row-major, d per row).
    fn run(&self, ys: &[f64], mut quad: Option<&mut Vec<f64>>) -> f64 {
        let (ns, d) = (self.ns, self.d);
        let mut z = vec![0.0; ns + d];
        let mut next = vec![0.0; ns];
        let mut e = vec![0.0; d];
        let mut total = 0.0;
        for yk in ys.chunks_exact(d) {
            let x = &z[..ns];
            for (i, ei) in e.iter_mut().enumerate() {
                let ci = &self.c[i * ns..(i + 1) * ns];
                *ei = yk[i] - ci.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            // forward substitution L u = e; the quadratic form is |u|²
            let mut q = 0.0;
            for i in 0..d {
                let li = &self.l[i * d..i * d + i];
                let s = e[i] - li.iter().zip(&e[..i]).map(|(a, b)| a * b).sum::<f64>();
                e[i] = s * self.inv_diag[i];
                q += e[i] * e[i];
            }
            total += q;
            if let Some(v) = quad.as_deref_mut() {
                v.push(q);
            }
            z[ns..].copy_from_slice(yk);
            for (i, xi) in next.iter_mut().enumerate() {
                let gi = &self.fk[i * (ns + d)..(i + 1) * (ns + d)];
                *xi = gi.iter().zip(&z).map(|(a, b)| a * b).sum();
            }
            z[..ns].copy_from_slice(&next);
        }
        total
    }

    /// Same as [`Kernel::run`] with the dimensions known at compile time.
    fn run_fixed<const NS: usize, const D: usize>(&self, ys: &[f64], mut quad: Option<&mut Vec<f64>>) -> f64 {
        let mut c = [[0.0; NS]; D];
        let mut f = [[0.0; NS]; NS];
        let mut k = [[0.0; D]; NS];
        let mut l = [[0.0; D]; D];
        let mut inv = [0.0; D];
        for i in 0..D {
            c[i].copy_from_slice(&self.c[i * NS..(i + 1) * NS]);
            l[i].copy_from_slice(&self.l[i * D..(i + 1) * D]);
            inv[i] = self.inv_diag[i];
        }
        for i in 0..NS {
            let row = &self.fk[i * (NS + D)..(i + 1) * (NS + D)];
            f[i].copy_from_slice(&row[..NS]);
            k[i].copy_from_slice(&row[NS..]);
        }
        let mut x = [0.0; NS];
        let mut total = 0.0;
        for yk in ys.chunks_exact(D) {
            let mut e = [0.0; D];
            for i in 0..D {
                let mut s = yk[i];
                for j in 0..NS {
                    s -= c[i][j] * x[j];
                }
                e[i] = s;
            }
            let mut q = 0.0;
            for i in 0..D {
                let mut s = e[i];
                for j in 0..i {
                    s -= l[i][j] * e[j];
                }
                e[i] = s * inv[i];
                q += e[i] * e[i];
            }
            total += q;
            if let Some(v) = quad.as_deref_mut() {
                v.push(q);
            }
            let mut next = [0.0; NS];
            for i in 0..NS {
                let mut s = 0.0;
                for j in 0..NS {
                    s += f[i][j] * x[j];
                }
                for j in 0..D {
                    s += k[i][j] * yk[j];
                }
                next[i] = s;
            }
            x = next;
        }
        total
    }
}

fn evaluate(spec: &ModelSpec, theta: &[f64], series: &ObservationSeries, keep: bool) -> Result<LikelihoodValue> {
    let r = build_realization(spec, theta)?;
    let f = steady_state(&r, series.h)?;
    check_step(&f, series)?;
    let chol = factor_innovation_cov(&f.innovation_cov)?;
    let l = chol.l();
    let d = f.output_dim();
    let ns = f.state_dim();
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>();
    let constant = d as f64 * (2.0 * PI).ln() + log_det;

    let n = series.len();
    let mut quad_forms = if keep { Vec::with_capacity(n) } else { Vec::new() };
    let kernel = Kernel::new(&f, &l);
    let ys = series.y.transpose();
    let total = match (ns, d) {
        (1, 1) => kernel.run_fixed::<1, 1>(ys.as_slice(), keep.then_some(&mut quad_forms)),
        (3, 2) => kernel.run_fixed::<3, 2>(ys.as_slice(), keep.then_some(&mut quad_forms)),
        (4, 2) => kernel.run_fixed::<4, 2>(ys.as_slice(), keep.then_some(&mut quad_forms)),
        (6, 3) => kernel.run_fixed::<6, 3>(ys.as_slice(), keep.then_some(&mut quad_forms)),
        _ => kernel.run(ys.as_slice(), keep.then_some(&mut quad_forms)),
    };
    let value = constant + total / n as f64;
    if !value.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(LikelihoodValue {
        value,
        n,
        quad_forms,
        constant,
        tag: None,
    })
}

/// L̂_n(ϑ) = (1/n) Σ [d·log 2π + log det V + ε̂_kᵀ V⁻¹ ε̂_k], with the
/// per-observation quadratic forms.
pub fn quasi_log_likelihood(spec: &ModelSpec, theta: &[f64], series: &ObservationSeries) -> LikelihoodValue {
    evaluate(spec, theta, series, true).unwrap_or_else(|e| LikelihoodValue::infeasible(series.len(), e.to_string()))
}

/// The scalar L̂_n(ϑ) only; `+∞` where infeasible.
pub fn likelihood(spec: &ModelSpec, theta: &[f64], series: &ObservationSeries) -> f64 {
    evaluate(spec, theta, series, false)
        .map(|v| v.value)
        .unwrap_or(f64::INFINITY)
}

/// Splits L_n(ϑ) into `L_{n,1} = L_n(ϑ₁, ϑ₂) − L_n(ϑ₁_ref, ϑ₂)` and
/// `L_{n,2} = L_n(ϑ₁_ref, ϑ₂)`, with ϑ₂ taken from `theta`.
pub fn likelihood_decomposition(
    spec: &ModelSpec,
    theta: &[f64],
    theta_ref: &[f64],
    series: &ObservationSeries,
) -> Result<(f64, f64)> {
    if theta_ref.len() != theta.len() {
        return Err(Error::Dimension("reference parameter has the wrong length".into()));
    }
    let mut mixed = theta.to_vec();
    for &i in &spec.long_run {
        mixed[i] = theta_ref[i];
    }
    let full = quasi_log_likelihood(spec, theta, series);
    let short = quasi_log_likelihood(spec, &mixed, series);
    for v in [&full, &short] {
        if let Some(tag) = &v.tag {
            return Err(Error::Infeasible(tag.clone()));
        }
    }
    Ok((full.value - short.value, short.value))
}

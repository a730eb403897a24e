//! Sampling at distance `h`: the discrete-time state space model and its
//! steady-state Kalman filter in innovation form.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::Realization;
use crate::error::{Error, Result};
use crate::matfun::{self, RiccatiSolution};

/// Below this distance two eigenvalues of `A` count as aliased.
const ALIASING_TOL: f64 = 1e-8;
const COEFF_TOL: f64 = 1e-12;
const COEFF_MAX: usize = 100_000;

/// Everything the sampled model and its steady-state filter need.
#[derive(Debug, Clone)]
pub struct DiscreteFilter {
    pub h: f64,
    /// Φ = e^{Ah}
    pub phi: DMatrix<f64>,
    /// Σ^{(h)}, covariance of the noise accumulated over one step
    pub sigma_h: DMatrix<f64>,
    /// Ω, steady-state prediction covariance of the state
    pub omega: DMatrix<f64>,
    /// K, steady-state Kalman gain
    pub gain: DMatrix<f64>,
    /// V = CΩCᵀ
    pub innovation_cov: DMatrix<f64>,
    /// F = Φ − KC
    pub closed_loop: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub spectral_radius: f64,
    pub dare_residual: f64,
    /// Π = C(I − F)⁻¹K − I
    pub pi: DMatrix<f64>,
    /// k_j = C F^j (I − F)⁻¹ K for j = 1..J, truncated once ‖k_J‖ ≤ 1e-12.
    /// Empty for filters built for likelihood evaluation only.
    pub coefficients: Vec<DMatrix<f64>>,
}

impl DiscreteFilter {
    pub fn state_dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }
}

/// Smallest distance between a difference of eigenvalues of `A` and a
/// nonzero multiple of `2πi/h`; zero means the sampled model aliases.
pub fn kalman_bertram_gap(a: &DMatrix<f64>, h: f64) -> f64 {
    let mut eig: Vec<nalgebra::Complex<f64>> = a.complex_eigenvalues().iter().cloned().collect();
    eig.push(nalgebra::Complex::new(0.0, 0.0));
    let period = 2.0 * PI / h;
    let mut gap = f64::INFINITY;
    for (i, l1) in eig.iter().enumerate() {
        for l2 in eig.iter().skip(i + 1) {
            let diff = l1 - l2;
            let k = (diff.im / period).round();
            let candidates = if k == 0.0 { [1.0, -1.0] } else { [k, k] };
            for kk in candidates {
                let dist = nalgebra::Complex::new(diff.re, diff.im - kk * period).norm();
                gap = gap.min(dist);
            }
        }
    }
    gap
}

pub(crate) fn steady_state(r: &Realization, h: f64) -> Result<DiscreteFilter> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    let gap = kalman_bertram_gap(&r.a, h);
    if gap < ALIASING_TOL {
        return Err(Error::Assumption {
            name: "A10",
            detail: format!("eigenvalues of A alias at step h = {h} (gap {gap:.3e})"),
        });
    }
    let phi = matfun::matrix_exponential(&(&r.a * h))?;
    let sigma_h = matfun::noise_covariance_integral(&r.a, &r.b, &r.sigma_l, h)?;
    let RiccatiSolution {
        omega,
        gain,
        innovation_cov,
        closed_loop,
        spectral_radius,
        residual,
        ..
    } = matfun::solve_dare(&phi, &r.c, &sigma_h)?;
    let n = phi.nrows();
    let d = r.c.nrows();
    let resolvent = (DMatrix::<f64>::identity(n, n) - &closed_loop)
        .try_inverse()
        .ok_or(Error::UnstableFilter { spectral_radius })?;
    let pi = &r.c * resolvent * &gain - DMatrix::<f64>::identity(d, d);
    Ok(DiscreteFilter {
        h,
        phi,
        sigma_h,
        omega,
        gain,
        innovation_cov,
        closed_loop,
        c: r.c.clone(),
        spectral_radius,
        dare_residual: residual,
        pi,
        coefficients: Vec::new(),
    })
}

/// Samples the model at step `h` and computes the steady-state filter,
/// `Π` and the truncated filter coefficients `k_j`.
pub fn discretize(r: &Realization, h: f64) -> Result<DiscreteFilter> {
    let mut f = steady_state(r, h)?;
    let n = f.state_dim();
    let resolvent = (DMatrix::<f64>::identity(n, n) - &f.closed_loop)
        .try_inverse()
        .ok_or(Error::UnstableFilter {
            spectral_radius: f.spectral_radius,
        })?;
    let mut t = resolvent * &f.gain;
    let mut coeffs = Vec::new();
    for _ in 0..COEFF_MAX {
        t = &f.closed_loop * t;
        let k = &f.c * &t;
        let small = k.norm() <= COEFF_TOL;
        coeffs.push(k);
        if small {
            break;
        }
    }
    f.coefficients = coeffs;
    Ok(f)
}

//! Parametric families of cointegrated state space models, their sampled
//! (discrete-time) filters, and numeric checks of the structural and
//! identifiability assumptions.
//!
//! A model is written as
//!
//! ```text
//! dX(t) = A X(t) dt + B dL(t),   Y(t) = C X(t),
//! A = diag(0_{c×c}, A₂),  B = (B₁; B₂),  C = (C₁, C₂)
//! ```
//!
//! where the first `c` states are the common stochastic trends. The
//! long-run parameters enter `C₁` only; every other block depends on the
//! short-run parameters.

mod assumptions;
mod catalog;
pub mod expr;
mod discrete;
mod template;

pub use assumptions::{check_assumptions, AssumptionCheck, AssumptionReport, DEFAULT_J_MAX};
pub use catalog::{Restriction, CATALOG};
pub use discrete::{discretize, kalman_bertram_gap, DiscreteFilter};
pub(crate) use discrete::steady_state;
pub use template::{Entry, TemplateConfig};

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matfun::{self, RANK_TOLERANCE};

/// Dimensions of a cointegrated state space model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// output dimension
    pub d: usize,
    /// number of common stochastic trends
    pub c: usize,
    /// state dimension
    pub n: usize,
    /// driving noise dimension
    pub m: usize,
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        if self.c > self.d.min(self.m) || self.d.min(self.m) > self.n || self.c > self.n {
            return Err(Error::InvalidArgument(format!(
                "dimensions must satisfy c <= min(d, m) <= N, got d={} c={} N={} m={}",
                self.d, self.c, self.n, self.m
            )));
        }
        if self.d == 0 || self.m == 0 {
            return Err(Error::InvalidArgument("d and m must be positive".into()));
        }
        Ok(())
    }
}

/// Concrete matrices of one member of the family.
#[derive(Debug, Clone)]
pub struct Realization {
    pub a2: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub sigma_l: DMatrix<f64>,
    /// diag(0, A₂)
    pub a: DMatrix<f64>,
    /// (B₁; B₂)
    pub b: DMatrix<f64>,
    /// (C₁, C₂)
    pub c: DMatrix<f64>,
    /// lower-triangular orthonormal complement of C₁
    pub c1_perp: DMatrix<f64>,
}

impl Realization {
    /// Assembles `A`, `B`, `C` and `C₁⊥` from the blocks. Only shapes (and
    /// the rank of `C₁` needed for the complement) are checked here; see
    /// [`Realization::validate`] for the model assumptions.
    pub fn from_blocks(
        a2: DMatrix<f64>,
        b1: DMatrix<f64>,
        b2: DMatrix<f64>,
        c1: DMatrix<f64>,
        c2: DMatrix<f64>,
        sigma_l: DMatrix<f64>,
    ) -> Result<Self> {
        let c = c1.ncols();
        let ns = a2.nrows();
        let d = c1.nrows();
        let m = sigma_l.nrows();
        let shape_ok = a2.is_square()
            && b1.shape() == (c, m)
            && b2.shape() == (ns, m)
            && c2.shape() == (d, ns)
            && sigma_l.is_square();
        if !shape_ok {
            return Err(Error::Dimension(format!(
                "inconsistent blocks: A2 {:?}, B1 {:?}, B2 {:?}, C1 {:?}, C2 {:?}, Sigma_L {:?}",
                a2.shape(),
                b1.shape(),
                b2.shape(),
                c1.shape(),
                c2.shape(),
                sigma_l.shape()
            )));
        }
        let n = c + ns;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((c, c), (ns, ns)).copy_from(&a2);
        let mut b = DMatrix::zeros(n, m);
        b.view_mut((0, 0), (c, m)).copy_from(&b1);
        b.view_mut((c, 0), (ns, m)).copy_from(&b2);
        let mut cm = DMatrix::zeros(d, n);
        cm.view_mut((0, 0), (d, c)).copy_from(&c1);
        cm.view_mut((0, c), (d, ns)).copy_from(&c2);
        let c1_perp = matfun::lower_triangular_orthocomplement(&c1)?;
        Ok(Realization {
            a2,
            b1,
            b2,
            c1,
            c2,
            sigma_l,
            a,
            b,
            c: cm,
            c1_perp,
        })
    }

    pub fn dims(&self) -> Dims {
        Dims {
            d: self.c.nrows(),
            c: self.c1.ncols(),
            n: self.a.nrows(),
            m: self.sigma_l.nrows(),
        }
    }

    /// Checks the structural assumptions that a single parameter point can
    /// violate: Σ_L positive definite, stable `A₂`, full rank `B₁`, `C₁`, `C`.
    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        let sig = matfun::symmetrize(&self.sigma_l);
        if sig.clone().cholesky().is_none() || (&self.sigma_l - &self.sigma_l.transpose()).amax() > 1e-9 {
            return Err(Error::Assumption {
                name: "A3",
                detail: "Sigma_L is not symmetric positive definite".into(),
            });
        }
        if let Some(re) = self
            .a2
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .reduce(f64::max)
        {
            if !(re < 0.0) {
                return Err(Error::Assumption {
                    name: "A4",
                    detail: format!("A2 has an eigenvalue with real part {re:.4}"),
                });
            }
        }
        let (rb1, _) = matfun::numerical_rank(&self.b1, RANK_TOLERANCE);
        let (rc1, _) = matfun::numerical_rank(&self.c1, RANK_TOLERANCE);
        if rb1 != dims.c || rc1 != dims.c {
            return Err(Error::Assumption {
                name: "A6",
                detail: format!("rank B1 = {rb1}, rank C1 = {rc1}, expected {}", dims.c),
            });
        }
        let (rc, _) = matfun::numerical_rank(&self.c, RANK_TOLERANCE);
        if rc != dims.d {
            return Err(Error::Assumption {
                name: "A9",
                detail: format!("rank C = {rc}, expected {}", dims.d),
            });
        }
        Ok(())
    }
}

/// How a parameter vector is turned into matrices.
#[derive(Clone)]
pub enum Family {
    /// two-dimensional canonical family, possibly restricted
    Canonical2d(Restriction),
    /// three-dimensional canonical family with two common trends
    Canonical3d,
    /// scalar stationary CAR(1): `dX = −a X dt + dL`, `Y = X`, Var L(1) = σ²
    Car1,
    /// user-defined expression templates
    Template(Arc<template::TemplateModel>),
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Canonical2d(r) => write!(f, "Canonical2d({r:?})"),
            Family::Canonical3d => write!(f, "Canonical3d"),
            Family::Car1 => write!(f, "Car1"),
            Family::Template(t) => write!(f, "Template({})", t.config.name),
        }
    }
}

/// A parametrization: dimensions, box, long/short split and the matrix map.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub family: Family,
    pub dims: Dims,
    pub param_names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// indices of the long-run coordinates ϑ₁ (they parameterize C₁ only)
    pub long_run: Vec<usize>,
    /// data-generating parameter, when the family ships one
    pub truth: Option<Vec<f64>>,
    /// indices holding vech(Σ_L) (column-wise lower triangle), when Σ_L is
    /// parameterized entry by entry
    pub sigma_vech: Option<Vec<usize>>,
}

impl ModelSpec {
    /// Looks up a model from the built-in catalog.
    pub fn from_name(name: &str) -> Result<ModelSpec> {
        catalog::lookup(name)
    }

    /// Builds a model from a user-defined template.
    pub fn from_template(cfg: &TemplateConfig) -> Result<ModelSpec> {
        template::compile(cfg)
    }

    pub fn num_params(&self) -> usize {
        self.param_names.len()
    }

    /// Indices of the short-run coordinates ϑ₂.
    pub fn short_run(&self) -> Vec<usize> {
        (0..self.num_params()).filter(|i| !self.long_run.contains(i)).collect()
    }

    /// Splits ϑ into (ϑ₁, ϑ₂).
    pub fn split(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let long = self.long_run.iter().map(|&i| theta[i]).collect();
        let short = self.short_run().iter().map(|&i| theta[i]).collect();
        (long, short)
    }

    pub fn check_bounds(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "model {} has {} parameters, got {}",
                self.name,
                self.num_params(),
                theta.len()
            )));
        }
        for (i, &v) in theta.iter().enumerate() {
            if !(v >= self.lower[i] && v <= self.upper[i]) {
                return Err(Error::OutOfBounds {
                    index: i,
                    value: v,
                    lower: self.lower[i],
                    upper: self.upper[i],
                });
            }
        }
        Ok(())
    }

    pub fn in_bounds(&self, theta: &[f64]) -> bool {
        self.check_bounds(theta).is_ok()
    }

    /// Clamps ϑ into the box.
    pub fn project(&self, theta: &mut [f64]) {
        for (i, v) in theta.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Matrices at ϑ without any assumption or box check.
    pub fn blocks(&self, theta: &[f64]) -> Result<Realization> {
        if theta.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "model {} has {} parameters, got {}",
                self.name,
                self.num_params(),
                theta.len()
            )));
        }
        match &self.family {
            Family::Canonical2d(r) => catalog::canonical2d(theta, *r),
            Family::Canonical3d => catalog::canonical3d(theta),
            Family::Car1 => catalog::car1(theta),
            Family::Template(t) => t.realize(theta),
        }
    }

    /// Overwrites the vech(Σ_L) coordinates of ϑ with `sigma`.
    pub fn set_sigma_l(&self, theta: &mut [f64], sigma: &DMatrix<f64>) -> Result<()> {
        let idx = self.sigma_vech.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("model {} does not expose vech(Sigma_L)", self.name))
        })?;
        let m = self.dims.m;
        if sigma.shape() != (m, m) {
            return Err(Error::Dimension(format!("Sigma_L must be {m}x{m}")));
        }
        let mut k = 0;
        for j in 0..m {
            for i in j..m {
                theta[idx[k]] = sigma[(i, j)];
                k += 1;
            }
        }
        Ok(())
    }
}

/// Matrices at ϑ after checking the box and the structural assumptions.
pub fn build_realization(spec: &ModelSpec, theta: &[f64]) -> Result<Realization> {
    spec.check_bounds(theta)?;
    let r = spec.blocks(theta)?;
    r.validate()?;
    Ok(r)
}

/// vech of a square matrix (column-wise lower triangle).
pub fn vech(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in j..n {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Inverse of [`vech`].
pub fn unvech(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    m
}

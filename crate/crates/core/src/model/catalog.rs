//! The shipped parametric families.

use nalgebra::DMatrix;

use super::{Dims, Family, ModelSpec, Realization};
use crate::error::{Error, Result};

/// Names accepted by [`ModelSpec::from_name`].
pub const CATALOG: &[&str] = &[
    "canonical2d",
    "canonical2d-integrated",
    "canonical2d-wrong-coint",
    "canonical2d-stationary",
    "canonical3d",
    "car1",
];

/// Restricted parameter spaces of the two-dimensional family used in the
/// misspecification study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restriction {
    /// the full 13-parameter family
    Full,
    /// free entries of B₂ (θ₆, θ₇) fixed at zero
    Integrated,
    /// C₁ fixed at (0, 1)ᵀ, a wrong cointegration space
    WrongCoint,
    /// no common trend: Y coincides with its stationary part
    Stationary,
}

impl Restriction {
    /// Which of θ₁..θ₁₃ (0-based) stay free.
    fn free(self) -> Vec<usize> {
        match self {
            Restriction::Full => (0..13).collect(),
            Restriction::Integrated => (0..13).filter(|i| *i != 5 && *i != 6).collect(),
            Restriction::WrongCoint => (0..12).collect(),
            Restriction::Stationary => (0..13).filter(|i| ![7, 8, 12].contains(i)).collect(),
        }
    }
}

const TRUTH_2D: [f64; 13] = [
    -1.0, -2.0, 1.0, -2.0, -3.0, 1.0, 2.0, 1.0, 1.0, 0.4751, -0.1622, 0.3708, 3.0,
];

const TRUTH_3D: [f64; 28] = [
    -2.0, -3.0, -3.0, 1.0, 1.0, -1.0, 2.0, -1.0, -3.0, -3.0, -1.0, -1.0, 2.0, 1.0, 1.0, 0.0, 1.0, 1.0,
    -2.0, 0.0, 0.5310, -0.1934, 0.1678, 0.3784, -0.2227, 0.5632, 1.0, 2.0,
];

fn theta_names(idx: &[usize]) -> Vec<String> {
    idx.iter().map(|i| format!("theta{}", i + 1)).collect()
}

fn bounds_2d(i: usize) -> (f64, f64) {
    match i {
        9 | 11 => (0.01, 5.0),
        10 => (-5.0, 5.0),
        12 => (0.5, 10.0),
        _ => (-10.0, 10.0),
    }
}

fn bounds_3d(i: usize) -> (f64, f64) {
    match i {
        20 | 23 | 25 => (0.01, 5.0),
        21 | 22 | 24 => (-5.0, 5.0),
        26 | 27 => (0.1, 5.0),
        _ => (-10.0, 10.0),
    }
}

pub(super) fn lookup(name: &str) -> Result<ModelSpec> {
    match name {
        "canonical2d" => Ok(spec_2d(Restriction::Full)),
        "canonical2d-integrated" => Ok(spec_2d(Restriction::Integrated)),
        "canonical2d-wrong-coint" => Ok(spec_2d(Restriction::WrongCoint)),
        "canonical2d-stationary" => Ok(spec_2d(Restriction::Stationary)),
        "canonical3d" => Ok(spec_3d()),
        "car1" => Ok(spec_car1()),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

fn spec_2d(r: Restriction) -> ModelSpec {
    let free = r.free();
    let (lower, upper): (Vec<f64>, Vec<f64>) = free.iter().map(|&i| bounds_2d(i)).unzip();
    let position = |full: usize| free.iter().position(|&i| i == full);
    let long_run = position(12).into_iter().collect();
    let sigma_vech = [9, 10, 11].iter().map(|&i| position(i)).collect::<Option<Vec<_>>>();
    let (name, c, n) = match r {
        Restriction::Full => ("canonical2d", 1, 4),
        Restriction::Integrated => ("canonical2d-integrated", 1, 4),
        Restriction::WrongCoint => ("canonical2d-wrong-coint", 1, 4),
        Restriction::Stationary => ("canonical2d-stationary", 0, 3),
    };
    ModelSpec {
        name: name.into(),
        family: Family::Canonical2d(r),
        dims: Dims { d: 2, c, n, m: 2 },
        param_names: theta_names(&free),
        lower,
        upper,
        long_run,
        truth: Some(free.iter().map(|&i| TRUTH_2D[i]).collect()),
        sigma_vech,
    }
}

fn spec_3d() -> ModelSpec {
    let idx: Vec<usize> = (0..28).collect();
    let (lower, upper) = idx.iter().map(|&i| bounds_3d(i)).unzip();
    ModelSpec {
        name: "canonical3d".into(),
        family: Family::Canonical3d,
        dims: Dims { d: 3, c: 2, n: 6, m: 3 },
        param_names: theta_names(&idx),
        lower,
        upper,
        long_run: vec![26, 27],
        truth: Some(TRUTH_3D.to_vec()),
        sigma_vech: Some((20..26).collect()),
    }
}

fn spec_car1() -> ModelSpec {
    ModelSpec {
        name: "car1".into(),
        family: Family::Car1,
        dims: Dims { d: 1, c: 0, n: 1, m: 1 },
        param_names: vec!["a".into(), "sigma2".into()],
        lower: vec![0.01, 0.01],
        upper: vec![20.0, 20.0],
        long_run: vec![],
        truth: Some(vec![0.5, 1.0]),
        sigma_vech: Some(vec![1]),
    }
}

fn rows(r: usize, c: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, data)
}

/// C₁ of the two-dimensional family: a rational parametrization of the unit
/// circle, `((θ²−1)/(θ²+1), 2θ/(θ²+1))ᵀ`.
pub fn c1_2d(t13: f64) -> DMatrix<f64> {
    let den = t13 * t13 + 1.0;
    rows(2, 1, &[(t13 * t13 - 1.0) / den, 2.0 * t13 / den])
}

pub(super) fn canonical2d(theta: &[f64], r: Restriction) -> Result<Realization> {
    let mut t = TRUTH_2D;
    let free = r.free();
    for (k, &i) in free.iter().enumerate() {
        t[i] = theta[k];
    }
    if r == Restriction::Integrated {
        t[5] = 0.0;
        t[6] = 0.0;
    }
    let a2 = rows(3, 3, &[t[0], t[1], 0.0, 0.0, 0.0, 1.0, t[2], t[3], t[4]]);
    let b2 = rows(
        3,
        2,
        &[t[0], t[1], t[5], t[6], t[2] + t[4] * t[5], t[3] + t[4] * t[6]],
    );
    let c2 = rows(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let sigma_l = rows(2, 2, &[t[9], t[10], t[10], t[11]]);
    let (b1, c1) = match r {
        Restriction::Stationary => (DMatrix::zeros(0, 2), DMatrix::zeros(2, 0)),
        Restriction::WrongCoint => (rows(1, 2, &[t[7], t[8]]), rows(2, 1, &[0.0, 1.0])),
        _ => (rows(1, 2, &[t[7], t[8]]), c1_2d(t[12])),
    };
    Realization::from_blocks(a2, b1, b2, c1, c2, sigma_l)
}

/// C₁ of the three-dimensional family: lower triangular with orthonormal
/// columns.
pub fn c1_3d(t27: f64, t28: f64) -> DMatrix<f64> {
    let q = t27 * t27 + t28 * t28;
    let den = q + 1.0;
    let r = q.sqrt();
    rows(
        3,
        2,
        &[
            (q - 1.0) / den,
            0.0,
            2.0 * t27 / den,
            t28 / r,
            2.0 * t28 / den,
            -t27 / r,
        ],
    )
}

pub(super) fn canonical3d(t: &[f64]) -> Result<Realization> {
    let a2 = rows(
        4,
        4,
        &[
            t[0], t[1], 0.0, t[2], //
            0.0, 0.0, 1.0, 0.0, //
            t[3], t[4], t[5], t[6], //
            t[7], t[8], t[9], t[10],
        ],
    );
    let b2 = rows(
        4,
        3,
        &[
            t[0],
            t[1],
            t[2],
            t[11],
            t[12],
            t[13],
            t[3] + t[5] * t[11],
            t[4] + t[5] * t[12],
            t[6] + t[5] * t[13],
            t[7] + t[9] * t[11],
            t[8] + t[9] * t[12],
            t[10] + t[9] * t[13],
        ],
    );
    let c2 = rows(3, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let b1 = rows(2, 3, &t[14..20]);
    let sigma_l = super::unvech(&t[20..26], 3);
    let c1 = c1_3d(t[26], t[27]);
    Realization::from_blocks(a2, b1, b2, c1, c2, sigma_l)
}

pub(super) fn car1(t: &[f64]) -> Result<Realization> {
    Realization::from_blocks(
        DMatrix::from_element(1, 1, -t[0]),
        DMatrix::zeros(0, 1),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::zeros(1, 0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, t[1]),
    )
}

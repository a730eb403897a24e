//! Numeric verification of the model assumptions at one parameter point.

use std::fmt;

use nalgebra::DMatrix;

use super::{steady_state, ModelSpec};
use crate::matfun::{self, RANK_TOLERANCE};

pub const DEFAULT_J_MAX: usize = 20;

/// One assumption, the measured quantities behind the verdict, and the
/// tolerance used.
#[derive(Debug, Clone)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub model: String,
    pub theta: Vec<f64>,
    pub h: f64,
    /// relative singular-value cutoff for every rank below
    pub rank_tolerance: f64,
    pub checks: Vec<AssumptionCheck>,
    /// measured rank of ∇ψ_j for j = 0..=j_max
    pub psi_ranks: Vec<usize>,
    /// smallest j with rank ∇ψ_j = s₂
    pub j0: Option<usize>,
}

impl AssumptionReport {
    pub fn get(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn passed(&self, name: &str) -> bool {
        self.get(name).map(|c| c.passed).unwrap_or(false)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model {} at h = {} (rank tolerance {:e})", self.model, self.h, self.rank_tolerance)?;
        for c in &self.checks {
            let vals: Vec<String> = c.values.iter().map(|v| format!("{v:.6e}")).collect();
            writeln!(
                f,
                "  {:<4} {}  {}  [{}]",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.detail,
                vals.join(", ")
            )?;
        }
        Ok(())
    }
}

fn check(name: &str, passed: bool, detail: String, values: Vec<f64>) -> AssumptionCheck {
    AssumptionCheck {
        name: name.into(),
        passed,
        detail,
        values,
    }
}

fn fd_step(x: f64) -> f64 {
    1e-6 * (1.0 + x.abs())
}

/// Central-difference Jacobian of `f` with respect to the coordinates `idx`
/// of `theta`. Rows are the outputs of `f`.
fn jacobian<F>(theta: &[f64], idx: &[usize], f: F) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let mut cols = Vec::with_capacity(idx.len());
    for &i in idx {
        let h = fd_step(theta[i]);
        let mut up = theta.to_vec();
        let mut dn = theta.to_vec();
        up[i] += h;
        dn[i] -= h;
        let fu = f(&up)?;
        let fd = f(&dn)?;
        cols.push(fu.iter().zip(&fd).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    let rows = cols.first().map(|c| c.len()).unwrap_or(0);
    Some(DMatrix::from_fn(rows, idx.len(), |r, c| cols[c][r]))
}

/// ψ_j: vec(C F^i K) for i = 0..=j stacked above vec(V).
fn psi(spec: &ModelSpec, theta: &[f64], h: f64, j_max: usize) -> Option<Vec<f64>> {
    let r = spec.blocks(theta).ok()?;
    let f = steady_state(&r, h).ok()?;
    let mut out = Vec::new();
    let mut t = f.gain.clone();
    for _ in 0..=j_max {
        out.extend((&f.c * &t).iter());
        t = &f.closed_loop * t;
    }
    out.extend(f.innovation_cov.iter());
    Some(out)
}

/// Runs every numeric assumption check at ϑ. Failures are reported, never
/// raised.
pub fn check_assumptions(spec: &ModelSpec, theta: &[f64], h: f64, j_max: usize) -> AssumptionReport {
    let mut report = AssumptionReport {
        model: spec.name.clone(),
        theta: theta.to_vec(),
        h,
        rank_tolerance: RANK_TOLERANCE,
        checks: Vec::new(),
        psi_ranks: Vec::new(),
        j0: None,
    };
    if let Err(e) = spec.check_bounds(theta) {
        report.checks.push(check("box", false, e.to_string(), vec![]));
    }
    let r = match spec.blocks(theta) {
        Ok(r) => r,
        Err(e) => {
            report.checks.push(check("build", false, e.to_string(), vec![]));
            return report;
        }
    };
    let dims = r.dims();

    let sig_eig = if dims.m > 0 {
        nalgebra::SymmetricEigen::new(matfun::symmetrize(&r.sigma_l))
            .eigenvalues
            .iter()
            .cloned()
            .collect::<Vec<_>>()
    } else {
        vec![]
    };
    let sig_min = sig_eig.iter().cloned().fold(f64::INFINITY, f64::min);
    report.checks.push(check(
        "A3",
        sig_min > 0.0,
        format!("min eigenvalue of Sigma_L = {sig_min:.4e}"),
        sig_eig,
    ));

    let re: Vec<f64> = r.a2.complex_eigenvalues().iter().map(|z| z.re).collect();
    let re_max = re.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    report.checks.push(check(
        "A4",
        re.is_empty() || re_max < 0.0,
        format!("max real part of eig(A2) = {re_max:.4}"),
        re,
    ));

    let (rb1, sb1) = matfun::numerical_rank(&r.b1, RANK_TOLERANCE);
    let (rc1, sc1) = matfun::numerical_rank(&r.c1, RANK_TOLERANCE);
    let mut sv = sb1;
    sv.extend(sc1);
    report.checks.push(check(
        "A6",
        rb1 == dims.c && rc1 == dims.c,
        format!("rank B1 = {rb1}, rank C1 = {rc1}, c = {}", dims.c),
        sv,
    ));

    let (rc, sc) = matfun::numerical_rank(&r.c, RANK_TOLERANCE);
    report.checks.push(check(
        "A9",
        rc == dims.d,
        format!("rank C = {rc}, d = {}", dims.d),
        sc,
    ));

    let gap = super::kalman_bertram_gap(&r.a, h);
    report.checks.push(check(
        "A10",
        gap >= 1e-8,
        format!("min distance of eigenvalue differences to 2*pi*k/h = {gap:.4e}"),
        vec![gap],
    ));

    // Assumption E: ϑ₁ ↦ vec(C₁⊥(ϑ₁)ᵀ C₁(ϑ₁⁰)) has full column rank s₁.
    let s1 = spec.long_run.len();
    if s1 == 0 {
        report.checks.push(check("E", true, "no long-run parameters".into(), vec![]));
    } else {
        let c1_ref = r.c1.clone();
        let jac = jacobian(theta, &spec.long_run, |t| {
            let rr = spec.blocks(t).ok()?;
            Some((rr.c1_perp.transpose() * &c1_ref).iter().cloned().collect())
        });
        match jac {
            Some(j) => {
                let (rank, sv) = matfun::numerical_rank(&j, RANK_TOLERANCE);
                report.checks.push(check(
                    "E",
                    rank == s1,
                    format!("rank of long-run Jacobian = {rank}, s1 = {s1}"),
                    sv,
                ));
            }
            None => report.checks.push(check(
                "E",
                false,
                "could not evaluate C1 perp near theta".into(),
                vec![],
            )),
        }
    }

    // Assumption F: ∇_{ϑ₂} ψ_{ϑ,j} has rank s₂ for some j.
    let short = spec.short_run();
    let s2 = short.len();
    let d2 = dims.d * dims.d;
    match jacobian(theta, &short, |t| psi(spec, t, h, j_max)) {
        Some(jac) => {
            let mut last_sv = Vec::new();
            for j in 0..=j_max {
                let rows: Vec<usize> = (0..(j + 1) * d2)
                    .chain((j_max + 1) * d2..(j_max + 2) * d2)
                    .collect();
                let sub = jac.select_rows(rows.iter());
                let (rank, sv) = matfun::numerical_rank(&sub, RANK_TOLERANCE);
                report.psi_ranks.push(rank);
                last_sv = sv;
                if rank == s2 && report.j0.is_none() {
                    report.j0 = Some(j);
                }
            }
            let detail = match report.j0 {
                Some(j0) => format!("rank s2 = {s2} reached at j0 = {j0}"),
                None => format!(
                    "rank s2 = {s2} not reached for j <= {j_max} (ranks {:?})",
                    report.psi_ranks
                ),
            };
            report.checks.push(check("F", report.j0.is_some(), detail, last_sv));
        }
        None => report.checks.push(check(
            "F",
            false,
            "steady-state filter unavailable near theta".into(),
            vec![],
        )),
    }
    report
}

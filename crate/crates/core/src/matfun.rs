//! Dense matrix kernels: matrix exponential, the sampled noise covariance
//! integral, the filtering Riccati equation and the lower-triangular
//! orthogonal complement.
//!
//! Everything here is a pure function of its arguments. Sizes in this crate
//! are tiny (a handful of states), so the kernels favour clarity over
//! blocking or in-place tricks.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Default relative singular-value cutoff used by [`numerical_rank`] callers
/// that check structural assumptions.
pub const RANK_TOLERANCE: f64 = 1e-7;

const DARE_MAX_ITER: usize = 100_000;
const DARE_STEP_TOL: f64 = 1e-13;
const DARE_RESIDUAL_TOL: f64 = 1e-10;
/// Plain fixed-point sweeps before switching to Newton (Hewer) steps.
const DARE_WARMUP: usize = 8;

fn ensure_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn ensure_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Checks that `m` is symmetric positive semi-definite up to round-off and
/// returns its symmetrized copy.
pub fn ensure_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(m, "covariance")?;
    ensure_finite(m)?;
    let sym = symmetrize(m);
    let scale = sym.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-9 * scale {
        return Err(Error::NotPsd {
            min_eigenvalue: f64::NAN,
        });
    }
    let min_eig = min_symmetric_eigenvalue(&sym);
    if min_eig < -1e-12 * scale {
        return Err(Error::NotPsd {
            min_eigenvalue: min_eig,
        });
    }
    Ok(sym)
}

/// Symmetric square root `S` with `S Sᵀ = M` for a PSD matrix; small negative
/// eigenvalues from round-off are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = ensure_psd(m)?;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// Singular values (descending) and the number exceeding `rel_tol · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> (usize, Vec<f64>) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0, Vec::new());
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let smax = sv[0];
    if smax == 0.0 {
        return (0, sv);
    }
    let rank = sv.iter().filter(|&&s| s > rel_tol * smax).count();
    (rank, sv)
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// `e^M` via scaling and squaring with a Padé approximant (nalgebra's
/// implementation), guarded against non-finite input and overflow.
pub fn matrix_exponential(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(m, "matrix_exponential input")?;
    ensure_finite(m)?;
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    let norm = m.iter().map(|x| x.abs()).sum::<f64>();
    // ‖e^M‖ ≤ e^{‖M‖}; anything near f64::MAX will not come back finite.
    if norm > 700.0 {
        return Err(Error::Overflow { norm });
    }
    let e = m.exp();
    if e.iter().all(|x| x.is_finite()) {
        Ok(e)
    } else {
        Err(Error::Overflow { norm })
    }
}

/// `∫₀^h e^{Au} B Σ_L Bᵀ e^{Aᵀu} du` by the block-exponential identity of
/// van Loan: with `M = [[-A, BΣ_LBᵀ], [0, Aᵀ]]·h`, `e^M = [[·, E₁₂], [0, E₂₂]]`
/// and the integral is `E₂₂ᵀ E₁₂`.
pub fn noise_covariance_integral(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    sigma_l: &DMatrix<f64>,
    h: f64,
) -> Result<DMatrix<f64>> {
    ensure_square(a, "A")?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    let n = a.nrows();
    if b.nrows() != n || sigma_l.nrows() != b.ncols() {
        return Err(Error::Dimension(format!(
            "A is {n}x{n}, B is {}x{}, Sigma_L is {}x{}",
            b.nrows(),
            b.ncols(),
            sigma_l.nrows(),
            sigma_l.ncols()
        )));
    }
    let sigma_l = ensure_psd(sigma_l)?;
    let q = b * sigma_l * b.transpose();
    let mut block = DMatrix::<f64>::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-a * h));
    block.view_mut((0, n), (n, n)).copy_from(&(q * h));
    block.view_mut((n, n), (n, n)).copy_from(&(a.transpose() * h));
    let e = matrix_exponential(&block)?;
    let e12 = e.view((0, n), (n, n)).into_owned();
    let e22 = e.view((n, n), (n, n)).into_owned();
    Ok(symmetrize(&(e22.transpose() * e12)))
}

/// Solution of the filtering Riccati equation together with the
/// steady-state quantities derived from it.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    /// Ω, the steady-state one-step prediction covariance of the state.
    pub omega: DMatrix<f64>,
    /// K = ΦΩCᵀ(CΩCᵀ)⁻¹.
    pub gain: DMatrix<f64>,
    /// V = CΩCᵀ.
    pub innovation_cov: DMatrix<f64>,
    /// F = Φ − KC.
    pub closed_loop: DMatrix<f64>,
    pub spectral_radius: f64,
    pub residual: f64,
    pub iterations: usize,
}

struct Gain {
    gain: DMatrix<f64>,
    innovation_cov: DMatrix<f64>,
}

fn gain_of(phi: &DMatrix<f64>, c: &DMatrix<f64>, omega: &DMatrix<f64>) -> Result<Gain> {
    let v = symmetrize(&(c * omega * c.transpose()));
    let vmax = v.diagonal().amax();
    let chol = v.clone().cholesky().ok_or(Error::SingularInnovation)?;
    let l = chol.l();
    let dmin = l.diagonal().iter().map(|x| x * x).fold(f64::INFINITY, f64::min);
    if !(vmax > 0.0) || dmin < 1e-14 * vmax {
        return Err(Error::SingularInnovation);
    }
    // K = ΦΩCᵀ V⁻¹  ⇔  V Kᵀ = CΩΦᵀ
    let rhs = c * omega * phi.transpose();
    let gain = chol.solve(&rhs).transpose();
    Ok(Gain {
        gain,
        innovation_cov: v,
    })
}

fn riccati_map(
    phi: &DMatrix<f64>,
    c: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    omega: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let g = gain_of(phi, c, omega)?;
    let cross = phi * omega * c.transpose();
    let next = phi * omega * phi.transpose() - &g.gain * cross.transpose() + sigma;
    Ok(symmetrize(&next))
}

/// Frobenius norm of the Riccati residual at `omega`.
pub fn dare_residual(
    phi: &DMatrix<f64>,
    c: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    omega: &DMatrix<f64>,
) -> Result<f64> {
    Ok((riccati_map(phi, c, sigma, omega)? - omega).norm())
}

/// Solves `P = F P Fᵀ + Q` for stable `F` by Smith doubling. Returns `None`
/// when the doubled powers of `F` fail to decay (F not stable).
pub fn stein_doubling(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut p = q.clone();
    let mut a = f.clone();
    for _ in 0..64 {
        let inc = &a * &p * a.transpose();
        p += &inc;
        if inc.norm() <= 1e-17 * (1.0 + p.norm()) {
            return Some(symmetrize(&p));
        }
        a = &a * &a;
        let an = a.norm();
        if !an.is_finite() || an > 1e8 {
            return None;
        }
    }
    None
}

/// Solves `Ω = ΦΩΦᵀ − ΦΩCᵀ(CΩCᵀ)⁻¹CΩΦᵀ + Σ` for the stabilizing solution.
///
/// The iteration starts at Ω₀ = Σ with a few plain fixed-point sweeps, then
/// switches to Newton steps (Hewer's iteration: fix the gain, solve the Stein
/// equation for the closed loop) whenever the current gain is stabilizing.
/// A non-stabilizing gain drops back to fixed-point sweeps. Convergence is
/// declared when successive iterates differ by at most 1e-13·(1 + ‖Ω‖).
pub fn solve_dare(phi: &DMatrix<f64>, c: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<RiccatiSolution> {
    ensure_square(phi, "Phi")?;
    let n = phi.nrows();
    if c.ncols() != n || sigma.nrows() != n || sigma.ncols() != n {
        return Err(Error::Dimension(format!(
            "Phi {n}x{n}, C {}x{}, Sigma {}x{}",
            c.nrows(),
            c.ncols(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if c.nrows() > n {
        return Err(Error::Dimension("C has more rows than states".into()));
    }
    ensure_finite(phi)?;
    ensure_finite(c)?;
    let sigma = ensure_psd(sigma)?;

    let mut omega = sigma.clone();
    let mut iterations = 0usize;
    let mut last_change = f64::INFINITY;
    let mut converged = false;
    let mut newton_ok = true;
    while iterations < DARE_MAX_ITER {
        let use_newton = newton_ok && iterations >= DARE_WARMUP;
        let next = if use_newton {
            let g = gain_of(phi, c, &omega)?;
            let f = phi - &g.gain * c;
            match stein_doubling(&f, &sigma) {
                Some(p) => p,
                None => {
                    newton_ok = false;
                    riccati_map(phi, c, &sigma, &omega)?
                }
            }
        } else {
            riccati_map(phi, c, &sigma, &omega)?
        };
        iterations += 1;
        if !next.iter().all(|x| x.is_finite()) {
            return Err(Error::DareNoConvergence {
                iterations,
                residual: f64::INFINITY,
            });
        }
        last_change = (&next - &omega).norm();
        omega = next;
        if last_change <= DARE_STEP_TOL * (1.0 + omega.norm()) {
            converged = true;
            break;
        }
        // Re-enable Newton steps periodically after a fallback.
        if !newton_ok && iterations.is_multiple_of(200) {
            newton_ok = true;
        }
    }
    let residual = dare_residual(phi, c, &sigma, &omega).unwrap_or(last_change);
    if !converged || residual > DARE_RESIDUAL_TOL * (1.0 + omega.norm()) {
        return Err(Error::DareNoConvergence { iterations, residual });
    }
    let g = gain_of(phi, c, &omega)?;
    let closed_loop = phi - &g.gain * c;
    let rho = spectral_radius(&closed_loop);
    if !(rho < 1.0) {
        return Err(Error::UnstableFilter { spectral_radius: rho });
    }
    Ok(RiccatiSolution {
        omega,
        gain: g.gain,
        innovation_cov: g.innovation_cov,
        closed_loop,
        spectral_radius: rho,
        residual,
        iterations,
    })
}

/// The unique lower-triangular `d × (d−c)` matrix `C₁⊥` with orthonormal
/// columns orthogonal to the columns of `C₁`. Each column's first nonzero
/// entry is positive. For `c = 0` this is the identity.
pub fn lower_triangular_orthocomplement(c1: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_finite(c1)?;
    let d = c1.nrows();
    let c = c1.ncols();
    if c > d {
        return Err(Error::Dimension(format!("C1 is {d}x{c} with more columns than rows")));
    }
    if c == 0 {
        return Ok(DMatrix::identity(d, d));
    }
    let (rank, _) = numerical_rank(c1, 1e-10);
    if rank < c {
        return Err(Error::RankDeficient { expected: c, found: rank });
    }
    let r = d - c;
    if r == 0 {
        return Ok(DMatrix::zeros(d, 0));
    }
    let gram = c1.transpose() * c1;
    let gram_inv = gram.try_inverse().ok_or(Error::RankDeficient { expected: c, found: rank })?;
    let proj = DMatrix::<f64>::identity(d, d) - c1 * gram_inv * c1.transpose();

    // Row echelon form of the projector: row i vanishes left of its pivot,
    // and pivots move strictly right.
    let mut rows: Vec<Vec<f64>> = (0..d).map(|i| proj.row(i).iter().cloned().collect()).collect();
    let mut echelon: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut top = 0usize;
    for col in 0..d {
        if echelon.len() == r {
            break;
        }
        let (best, best_abs) = (top..d)
            .map(|i| (i, rows[i][col].abs()))
            .fold((top, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_abs <= 1e-10 {
            continue;
        }
        rows.swap(top, best);
        let pivot = rows[top].clone();
        for row in rows.iter_mut().skip(top + 1) {
            let factor = row[col] / pivot[col];
            for (x, p) in row.iter_mut().zip(&pivot) {
                *x -= factor * p;
            }
            row[col] = 0.0;
        }
        echelon.push(pivot);
        top += 1;
    }
    if echelon.len() != r {
        return Err(Error::RankDeficient {
            expected: r,
            found: echelon.len(),
        });
    }

    // Gram–Schmidt from the sparsest row upwards keeps the leading zeros.
    let mut basis: Vec<Vec<f64>> = vec![Vec::new(); r];
    for i in (0..r).rev() {
        let mut v = echelon[i].clone();
        for _ in 0..2 {
            for q in basis.iter().skip(i + 1) {
                let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                for (x, qk) in v.iter_mut().zip(q) {
                    *x -= dot * qk;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            return Err(Error::RankDeficient { expected: r, found: r - 1 });
        }
        v.iter_mut().for_each(|x| *x /= norm);
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        basis[i] = v;
    }
    let mut out = DMatrix::<f64>::zeros(d, r);
    for (j, col) in basis.iter().enumerate() {
        for (i, x) in col.iter().enumerate() {
            // exact zeros above the diagonal band
            out[(i, j)] = if i < j { 0.0 } else { *x };
        }
    }
    Ok(out)
}

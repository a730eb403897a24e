//! Box-constrained minimizers for objectives that may return `+∞`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    NelderMead,
    Bfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxIter,
    InfeasibleStart,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::MaxIter => "max-iter",
            Status::InfeasibleStart => "infeasible-start",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    /// scaled parameter change, `|Δx_i| / (1 + |x_i|)`
    pub x_tol: f64,
    pub f_tol: f64,
    pub max_iter: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            x_tol: 1e-8,
            f_tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub status: Status,
    pub iterations: usize,
    pub evaluations: usize,
    /// objective value after each iteration
    pub trace: Vec<f64>,
}

pub struct Bounds<'a> {
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

impl Bounds<'_> {
    fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn scaled_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / (1.0 + y.abs()))
        .fold(0.0, f64::max)
}

fn infeasible(x0: &[f64], evals: usize) -> OptimResult {
    OptimResult {
        x: x0.to_vec(),
        value: f64::INFINITY,
        status: Status::InfeasibleStart,
        iterations: 0,
        evaluations: evals,
        trace: Vec::new(),
    }
}

/// Nelder–Mead with dimension-adaptive coefficients. Trial points are
/// projected into the box; points with value `+∞` are never accepted as
/// improvements. After convergence the simplex is rebuilt around the best
/// point and the search repeated until a restart brings no improvement.
pub fn nelder_mead<F>(f: F, x0: &[f64], bounds: &Bounds, step: &[f64], stop: &StopRule) -> OptimResult
where
    F: FnMut(&[f64]) -> f64,
{
    let mut obj = Counted { f, evals: 0 };
    let n = x0.len();
    let mut x_best = x0.to_vec();
    bounds.project(&mut x_best);
    let mut f_best = obj.call(&x_best);
    if !f_best.is_finite() {
        return infeasible(&x_best, obj.evals);
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };
    let mut trace = vec![f_best];
    let mut iterations = 0;
    let mut status = Status::MaxIter;

    'restart: for _ in 0..10 {
        // initial simplex around the current best point
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x_best.clone(), f_best)];
        for i in 0..n {
            let mut v = x_best.clone();
            let mut s = step[i];
            if v[i] + s > bounds.upper[i] {
                s = -s;
            }
            v[i] += s;
            bounds.project(&mut v);
            let fv = obj.call(&v);
            simplex.push((v, fv));
        }
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let f_lo = simplex[0].1;
            let f_hi = simplex[n].1;
            let spread = simplex[1..]
                .iter()
                .map(|(v, _)| scaled_change(v, &simplex[0].0))
                .fold(0.0, f64::max);
            if spread <= stop.x_tol && (f_hi - f_lo).abs() <= stop.f_tol {
                break;
            }
            if iterations >= stop.max_iter {
                x_best = simplex[0].0.clone();
                f_best = simplex[0].1;
                break 'restart;
            }
            iterations += 1;

            let mut centroid = vec![0.0; n];
            for (v, _) in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / nf;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                let mut p: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect();
                bounds.project(&mut p);
                p
            };
            let xr = along(alpha);
            let fr = obj.call(&xr);
            if fr < simplex[0].1 {
                let xe = along(alpha * beta);
                let fe = obj.call(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(alpha * gamma);
                    let fc = obj.call(&xc);
                    (xc, fc)
                } else {
                    let xc = along(-gamma);
                    let fc = obj.call(&xc);
                    (xc, fc)
                };
                if fc < fr.min(simplex[n].1) {
                    simplex[n] = (xc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for (v, fv) in simplex.iter_mut().skip(1) {
                        for (x, b) in v.iter_mut().zip(&best) {
                            *x = b + delta * (*x - b);
                        }
                        *fv = obj.call(v);
                    }
                }
            }
            let cur = simplex.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
            trace.push(cur.min(*trace.last().unwrap()));
        }
        let improved = f_best - simplex[0].1 > stop.f_tol;
        let moved = scaled_change(&simplex[0].0, &x_best) > stop.x_tol;
        if simplex[0].1 <= f_best {
            x_best = simplex[0].0.clone();
            f_best = simplex[0].1;
        }
        if !improved && !moved {
            status = Status::Converged;
            break;
        }
    }
    OptimResult {
        x: x_best,
        value: f_best,
        status,
        iterations,
        evaluations: obj.evals,
        trace,
    }
}

fn gradient<F: FnMut(&[f64]) -> f64>(
    obj: &mut Counted<F>,
    x: &[f64],
    fx: f64,
    bounds: &Bounds,
    rel_step: f64,
) -> Option<Vec<f64>> {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut p = x.to_vec();
    for i in 0..n {
        let h = rel_step * (1.0 + x[i].abs());
        let up_ok = x[i] + h <= bounds.upper[i];
        let dn_ok = x[i] - h >= bounds.lower[i];
        let (fu, fd, width) = match (up_ok, dn_ok) {
            (true, true) => {
                p[i] = x[i] + h;
                let fu = obj.call(&p);
                p[i] = x[i] - h;
                let fd = obj.call(&p);
                (fu, fd, 2.0 * h)
            }
            (true, false) => {
                p[i] = x[i] + h;
                (obj.call(&p), fx, h)
            }
            (false, true) => {
                p[i] = x[i] - h;
                (fx, obj.call(&p), h)
            }
            (false, false) => (fx, fx, 1.0),
        };
        p[i] = x[i];
        if !fu.is_finite() || !fd.is_finite() {
            return None;
        }
        g[i] = (fu - fd) / width;
    }
    Some(g)
}

/// Projected BFGS with central-difference gradients and a backtracking
/// Armijo search along the projected path. `h0` is the initial inverse
/// Hessian; without one, a scaled identity is used.
pub fn bfgs<F>(
    f: F,
    x0: &[f64],
    bounds: &Bounds,
    rel_step: f64,
    stop: &StopRule,
    h0: Option<nalgebra::DMatrix<f64>>,
) -> OptimResult
where
    F: FnMut(&[f64]) -> f64,
{
    let mut obj = Counted { f, evals: 0 };
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut fx = obj.call(&x);
    if !fx.is_finite() {
        return infeasible(&x, obj.evals);
    }
    let mut trace = vec![fx];
    let scale_first = h0.is_none();
    let base = h0.unwrap_or_else(|| nalgebra::DMatrix::<f64>::identity(n, n));
    let mut hinv = base.clone();
    let mut g = match gradient(&mut obj, &x, fx, bounds, rel_step) {
        Some(g) => g,
        None => {
            return OptimResult {
                x,
                value: fx,
                status: Status::MaxIter,
                iterations: 0,
                evaluations: obj.evals,
                trace,
            }
        }
    };
    let mut status = Status::MaxIter;
    let mut iterations = 0;
    let mut stalls = 0;
    let mut reset = false;
    while iterations < stop.max_iter {
        iterations += 1;
        let gv = nalgebra::DVector::from_column_slice(&g);
        let mut dir = -(&hinv * &gv);
        if dir.dot(&gv) >= 0.0 {
            hinv.copy_from(&base);
            reset = true;
            dir = -gv.clone();
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
            bounds.project(&mut xn);
            let fnew = obj.call(&xn);
            let step_dot: f64 = xn.iter().zip(&x).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
            if fnew.is_finite() && fnew <= fx + 1e-4 * step_dot.min(0.0) && fnew <= fx {
                accepted = Some((xn, fnew));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            // no descent along the quasi-Newton direction: retry once from a
            // steepest-descent model, then stop
            if stalls == 0 && !reset {
                hinv.copy_from(&base);
                reset = true;
                stalls += 1;
                continue;
            }
            status = Status::Converged;
            break;
        };
        stalls = 0;
        let dx = scaled_change(&xn, &x);
        let df = fx - fnew;
        let gn = match gradient(&mut obj, &xn, fnew, bounds, rel_step) {
            Some(g) => g,
            None => {
                x = xn;
                fx = fnew;
                trace.push(fx);
                break;
            }
        };
        let s = nalgebra::DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
        let y = nalgebra::DVector::from_iterator(n, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if scale_first && (iterations == 1 || reset) {
                // scale the identity to the observed curvature before the
                // first update
                hinv.fill_with_identity();
                hinv *= sy / y.dot(&y);
            }
            reset = false;
            let rho = 1.0 / sy;
            let eye = nalgebra::DMatrix::<f64>::identity(n, n);
            let left = &eye - &s * y.transpose() * rho;
            let right = &eye - &y * s.transpose() * rho;
            hinv = &left * &hinv * &right + &s * s.transpose() * rho;
        }
        x = xn;
        fx = fnew;
        g = gn;
        trace.push(fx);
        if dx <= stop.x_tol && df <= stop.f_tol {
            status = Status::Converged;
            break;
        }
    }
    OptimResult {
        x,
        value: fx,
        status,
        iterations,
        evaluations: obj.evals,
        trace,
    }
}

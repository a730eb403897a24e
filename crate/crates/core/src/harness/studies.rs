use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::ModelSpec;

use super::{estimate_at_stage, run_pool, simulate_replicate, stage, ExperimentConfig};

/// The four parameter spaces of the misspecification study: the true
/// family, B₂ = 0 on its free entries, C₁ = (0, 1)ᵀ, and no common trend.
pub const MISSPEC_SPACES: [(&str, &str); 4] = [
    ("Theta", "canonical2d"),
    ("Theta_I", "canonical2d-integrated"),
    ("Theta_W", "canonical2d-wrong-coint"),
    ("Theta_S", "canonical2d-stationary"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub failures: usize,
}

impl SpaceStats {
    fn from_values(values: &[f64]) -> Result<SpaceStats> {
        let ok: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if ok.is_empty() {
            return Err(Error::Empty("every replicate failed in this space".into()));
        }
        let r = ok.len() as f64;
        let mean = ok.iter().sum::<f64>() / r;
        let std = if ok.len() > 1 {
            (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(SpaceStats {
            mean,
            std,
            min: ok.iter().copied().fold(f64::INFINITY, f64::min),
            max: ok.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            failures: values.len() - ok.len(),
        })
    }
}

/// Minimized L̂_n per replicate and space, with column statistics.
#[derive(Debug, Clone)]
pub struct MisspecStudy {
    pub labels: Vec<String>,
    /// `minima[r][j]`: replicate `r + 1`, space `j` (NaN when it failed)
    pub minima: Vec<Vec<f64>>,
    pub stats: Vec<SpaceStats>,
}

impl MisspecStudy {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<6}", "");
        for l in &self.labels {
            let _ = write!(out, " {l:>10}");
        }
        out.push('\n');
        let rows: [(&str, fn(&SpaceStats) -> f64); 4] =
            [("Mean", |s| s.mean), ("Std", |s| s.std), ("Min", |s| s.min), ("Max", |s| s.max)];
        for (name, get) in rows {
            let _ = write!(out, "{name:<6}");
            for s in &self.stats {
                let _ = write!(out, " {:>10.4}", get(s));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "R = {}", self.minima.len());
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["replicate".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (r, row) in self.minima.iter().enumerate() {
            let mut rec = vec![(r + 1).to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates from the two-dimensional Brownian model of `cfg` and minimizes
/// the quasi-likelihood over each of the four spaces on the same data.
pub fn misspecification_study(cfg: &ExperimentConfig) -> Result<MisspecStudy> {
    let exp = cfg.resolve()?;
    if exp.spec.name != "canonical2d" || !exp.driver.is_gaussian() {
        return Err(Error::InvalidConfig(
            "the misspecification study needs model canonical2d with a brownian driver".into(),
        ));
    }
    let specs = MISSPEC_SPACES
        .iter()
        .map(|(_, name)| ModelSpec::from_name(name))
        .collect::<Result<Vec<_>>>()?;
    let minima = run_pool(cfg.workers, cfg.replicates, |r| {
        let Ok(series) = simulate_replicate(&exp, r) else {
            return vec![f64::NAN; specs.len()];
        };
        specs
            .iter()
            .enumerate()
            .map(|(j, spec)| {
                let tag = stage::ESTIMATE + 16 * j as u64;
                match estimate_at_stage(&exp, spec, &series, r, tag) {
                    Ok(e) if e.value.is_finite() => e.value,
                    _ => f64::NAN,
                }
            })
            .collect::<Vec<f64>>()
    })?;
    let stats = (0..specs.len())
        .map(|j| SpaceStats::from_values(&minima.iter().map(|m| m[j]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(MisspecStudy {
        labels: MISSPEC_SPACES.iter().map(|(l, _)| l.to_string()).collect(),
        minima,
        stats,
    })
}

/// Standard deviations of the estimates per sample size and the slopes of
/// log std against log n.
#[derive(Debug, Clone)]
pub struct RateStudy {
    pub sizes: Vec<usize>,
    pub names: Vec<String>,
    pub long_run: Vec<usize>,
    /// `std[k][i]`: size `sizes[k]`, coordinate `i`
    pub std: Vec<Vec<f64>>,
    pub slopes: Vec<f64>,
    pub failures: Vec<usize>,
}

impl RateStudy {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<10}", "n");
        for n in &self.sizes {
            let _ = write!(out, " {:>10}", n);
        }
        let _ = writeln!(out, " {:>10}", "slope");
        for i in 0..self.names.len() {
            let tag = if self.long_run.contains(&i) { "*" } else { "" };
            let _ = write!(out, "{:<10}", format!("{}{tag}", self.names[i]));
            for k in 0..self.sizes.len() {
                let _ = write!(out, " {:>10.5}", self.std[k][i]);
            }
            let _ = writeln!(out, " {:>10.3}", self.slopes[i]);
        }
        let _ = writeln!(out, "* long-run coordinate; failures per n: {:?}", self.failures);
        out
    }
}

/// Least-squares slope of `y` on `x`.
pub(crate) fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Runs `cfg.replicates` replicates at the largest size and estimates on the
/// leading `n` observations for every `n` in `sizes`.
pub fn rate_study(cfg: &ExperimentConfig, sizes: &[usize]) -> Result<RateStudy> {
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 || sizes[0] == 0 || sizes[sizes.len() - 1] < 8 * sizes[0] {
        return Err(Error::InvalidConfig(format!(
            "rate study needs at least 3 sample sizes spanning a factor 8, got {sizes:?}"
        )));
    }
    if cfg.replicates < 2 {
        return Err(Error::InvalidConfig("rate study needs at least 2 replicates".into()));
    }
    let mut full = cfg.clone();
    full.n = sizes[sizes.len() - 1];
    let exp = full.resolve()?;
    let per_rep = run_pool(cfg.workers, cfg.replicates, |r| {
        let series = simulate_replicate(&exp, r);
        sizes
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let s = series.as_ref().ok()?.truncate(n).ok()?;
                estimate_at_stage(&exp, &exp.spec, &s, r, stage::ESTIMATE + 16 * k as u64)
                    .ok()
                    .filter(|e| e.value.is_finite())
                    .map(|e| e.theta)
            })
            .collect::<Vec<Option<Vec<f64>>>>()
    })?;
    let p = exp.spec.num_params();
    let mut std = Vec::new();
    let mut failures = Vec::new();
    for k in 0..sizes.len() {
        let ok: Vec<&Vec<f64>> = per_rep.iter().filter_map(|v| v[k].as_ref()).collect();
        failures.push(per_rep.len() - ok.len());
        if ok.len() < 2 {
            return Err(Error::Empty(format!("fewer than 2 successful replicates at n = {}", sizes[k])));
        }
        let r = ok.len() as f64;
        std.push(
            (0..p)
                .map(|i| {
                    let m = ok.iter().map(|t| t[i]).sum::<f64>() / r;
                    (ok.iter().map(|t| (t[i] - m).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
                })
                .collect::<Vec<f64>>(),
        );
    }
    let ln_n: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let slopes = (0..p)
        .map(|i| ols_slope(&ln_n, &std.iter().map(|s| s[i].ln()).collect::<Vec<_>>()))
        .collect();
    Ok(RateStudy {
        sizes,
        names: exp.spec.param_names.clone(),
        long_run: exp.spec.long_run.clone(),
        std,
        slopes,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_power_law() {
        let x: Vec<f64> = [100.0f64, 400.0, 1600.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [100.0f64, 400.0, 1600.0].iter().map(|v| (3.0 * v.powf(-0.5)).ln()).collect();
        assert!((ols_slope(&x, &y) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn space_stats_skip_failures() {
        let s = SpaceStats::from_values(&[1.0, f64::NAN, 3.0]).unwrap();
        assert_eq!((s.mean, s.min, s.max, s.failures), (2.0, 1.0, 3.0, 1));
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        assert!(SpaceStats::from_values(&[f64::NAN]).is_err());
    }

    #[test]
    fn preconditions() {
        let cfg = ExperimentConfig::for_model("car1");
        assert!(rate_study(&cfg, &[100, 200, 400]).is_err());
        assert!(rate_study(&cfg, &[100, 800]).is_err());
        assert!(misspecification_study(&cfg).is_err());
    }
}

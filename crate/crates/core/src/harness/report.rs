use std::path::{Path, PathBuf};

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

use super::{read_replicates_csv, ExperimentConfig, MonteCarloSummary};

/// Blom plotting positions mapped through the standard normal quantile.
pub fn blom_quantiles(n: usize) -> Vec<f64> {
    let z = Normal::standard();
    (1..=n)
        .map(|i| z.inverse_cdf((i as f64 - 0.375) / (n as f64 + 0.25)))
        .collect()
}

/// Pearson correlation between the sorted sample and its normal quantiles.
pub fn qq_correlation(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let q = blom_quantiles(s.len());
    let n = s.len() as f64;
    let (ms, mq) = (s.iter().sum::<f64>() / n, q.iter().sum::<f64>() / n);
    let sq: f64 = s.iter().zip(&q).map(|(a, b)| (a - ms) * (b - mq)).sum();
    let ss: f64 = s.iter().map(|a| (a - ms).powi(2)).sum();
    let qq: f64 = q.iter().map(|b| (b - mq).powi(2)).sum();
    sq / (ss * qq).sqrt()
}

/// Normal QQ data of one coordinate: standardized order statistics against
/// normal quantiles.
#[derive(Debug, Clone)]
pub struct QqData {
    pub name: String,
    pub quantiles: Vec<f64>,
    pub standardized: Vec<f64>,
    pub correlation: f64,
}

impl QqData {
    pub fn new(name: &str, sample: &[f64]) -> QqData {
        let n = sample.len() as f64;
        let m = sample.iter().sum::<f64>() / n;
        let sd = (sample.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let mut z: Vec<f64> = sample.iter().map(|v| (v - m) / sd).collect();
        z.sort_by(f64::total_cmp);
        QqData {
            name: name.to_string(),
            quantiles: blom_quantiles(sample.len()),
            standardized: z,
            correlation: qq_correlation(sample),
        }
    }
}

/// What [`report`] wrote.
#[derive(Debug, Clone)]
pub struct Report {
    pub summary: MonteCarloSummary,
    pub table: String,
    pub qq: Vec<QqData>,
    pub files: Vec<PathBuf>,
}

/// Reads `config.toml` and `replicates.csv` from a run directory and writes
/// `table.txt`, `summary.csv`, `qq.csv` (name, quantile, standardized) and
/// `hist.csv` (name, bin_left, bin_right, count) next to them.
pub fn report(dir: &Path) -> Result<Report> {
    let cfg_path = dir.join("config.toml");
    let rep_path = dir.join("replicates.csv");
    for p in [&cfg_path, &rep_path] {
        if !p.is_file() {
            return Err(Error::InvalidArgument(format!("missing {}", p.display())));
        }
    }
    let cfg = ExperimentConfig::load(&cfg_path)?;
    let spec = cfg.model.resolve()?;
    let truth = cfg
        .truth
        .clone()
        .or_else(|| spec.truth.clone())
        .ok_or_else(|| Error::InvalidConfig("run directory has no truth".into()))?;
    let records = read_replicates_csv(&rep_path)?;
    let summary = MonteCarloSummary::from_records(&spec.param_names, &truth, &records)?;
    let ok: Vec<&Vec<f64>> = records.iter().filter(|r| !r.failed()).map(|r| &r.theta).collect();
    let qq: Vec<QqData> = if ok.len() >= 3 {
        (0..spec.num_params())
            .filter(|i| summary.std[*i] > 0.0)
            .map(|i| QqData::new(&spec.param_names[i], &ok.iter().map(|t| t[i]).collect::<Vec<_>>()))
            .collect()
    } else {
        Vec::new()
    };
    let table = summary.table();
    let mut files = vec![dir.join("table.txt"), dir.join("summary.csv")];
    std::fs::write(&files[0], &table)?;
    summary.write_csv(&files[1])?;
    if !qq.is_empty() {
        let p = dir.join("qq.csv");
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(["name", "quantile", "standardized"])?;
        for d in &qq {
            for (q, z) in d.quantiles.iter().zip(&d.standardized) {
                w.write_record([d.name.clone(), q.to_string(), z.to_string()])?;
            }
        }
        w.flush()?;
        files.push(p);

        let p = dir.join("hist.csv");
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(["name", "bin_left", "bin_right", "count"])?;
        let bins = ((ok.len() as f64).sqrt().ceil() as usize).max(1);
        for d in &qq {
            let (lo, hi) = (d.standardized[0], d.standardized[d.standardized.len() - 1]);
            let width = (hi - lo) / bins as f64;
            let mut counts = vec![0usize; bins];
            for z in &d.standardized {
                let b = (((z - lo) / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
            for (b, c) in counts.iter().enumerate() {
                let left = lo + b as f64 * width;
                w.write_record([d.name.clone(), left.to_string(), (left + width).to_string(), c.to_string()])?;
            }
        }
        w.flush()?;
        files.push(p);
    }
    Ok(Report { summary, table, qq, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blom_quantiles_are_symmetric() {
        let q = blom_quantiles(7);
        assert!(q[3].abs() < 1e-12);
        for i in 0..7 {
            assert!((q[i] + q[6 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn qq_correlation_of_exact_quantiles_is_one() {
        let q = blom_quantiles(50);
        let mut s: Vec<f64> = q.iter().map(|v| 2.0 + 3.0 * v).collect();
        s.reverse();
        assert!((qq_correlation(&s) - 1.0).abs() < 1e-12);
        // a strongly skewed sample is far from a line
        let e: Vec<f64> = (1..=50).map(|i| (i as f64 / 5.0).exp()).collect();
        assert!(qq_correlation(&e) < 0.9);
    }

    #[test]
    fn missing_files_are_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(report(dir.path()).is_err());
    }
}

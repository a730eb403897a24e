use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::ReplicateRecord;

/// Per-coordinate moments of the estimates over the successful replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub names: Vec<String>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    /// true − mean
    pub bias: Vec<f64>,
    /// sample standard deviation with denominator R − 1 (zero when R = 1)
    pub std: Vec<f64>,
    /// replicates entering the moments
    pub replicates: usize,
    pub failures: usize,
}

impl MonteCarloSummary {
    /// Moments of the rows of `estimates`.
    pub fn from_estimates(names: &[String], truth: &[f64], estimates: &[Vec<f64>], failures: usize) -> Result<Self> {
        let s = truth.len();
        if names.len() != s {
            return Err(Error::Dimension(format!("{} names for {s} parameters", names.len())));
        }
        if estimates.is_empty() {
            return Err(Error::Empty("no successful replicate to summarize".into()));
        }
        if let Some(e) = estimates.iter().find(|e| e.len() != s) {
            return Err(Error::Dimension(format!("estimate has {} entries, expected {s}", e.len())));
        }
        let r = estimates.len() as f64;
        let mean: Vec<f64> = (0..s).map(|i| estimates.iter().map(|e| e[i]).sum::<f64>() / r).collect();
        let std = (0..s)
            .map(|i| {
                if estimates.len() < 2 {
                    return 0.0;
                }
                let ss: f64 = estimates.iter().map(|e| (e[i] - mean[i]).powi(2)).sum();
                (ss / (r - 1.0)).sqrt()
            })
            .collect();
        let bias = truth.iter().zip(&mean).map(|(t, m)| t - m).collect();
        Ok(MonteCarloSummary {
            names: names.to_vec(),
            truth: truth.to_vec(),
            mean,
            bias,
            std,
            replicates: estimates.len(),
            failures,
        })
    }

    pub fn from_records(names: &[String], truth: &[f64], records: &[ReplicateRecord]) -> Result<Self> {
        let ok: Vec<Vec<f64>> = records.iter().filter(|r| !r.failed()).map(|r| r.theta.clone()).collect();
        Self::from_estimates(names, truth, &ok, records.len() - ok.len())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// One row per parameter with columns True, Mean, Bias, Std.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>10} {:>10} {:>10} {:>10}", "", "True", "Mean", "Bias", "Std");
        for i in 0..self.names.len() {
            let _ = writeln!(
                out,
                "{:<10} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                self.names[i], self.truth[i], self.mean[i], self.bias[i], self.std[i]
            );
        }
        let _ = writeln!(out, "R = {}, failures = {}", self.replicates, self.failures);
        out
    }

    /// `name,true,mean,bias,std` rows plus `#R` and `#failures` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["name", "true", "mean", "bias", "std"])?;
        for i in 0..self.names.len() {
            w.write_record([
                self.names[i].clone(),
                self.truth[i].to_string(),
                self.mean[i].to_string(),
                self.bias[i].to_string(),
                self.std[i].to_string(),
            ])?;
        }
        w.write_record(["#R", &self.replicates.to_string(), "", "", ""])?;
        w.write_record(["#failures", &self.failures.to_string(), "", "", ""])?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let bad = |what: &str| Error::InvalidArgument(format!("{}: bad {what}", path.display()));
        let mut rd = csv::Reader::from_path(path)?;
        let mut out = MonteCarloSummary {
            names: vec![],
            truth: vec![],
            mean: vec![],
            bias: vec![],
            std: vec![],
            replicates: 0,
            failures: 0,
        };
        for row in rd.records() {
            let row = row?;
            match &row[0] {
                "#R" => out.replicates = row[1].parse().map_err(|_| bad("R"))?,
                "#failures" => out.failures = row[1].parse().map_err(|_| bad("failures"))?,
                name => {
                    let num = |i: usize| row[i].parse::<f64>().map_err(|_| bad("number"));
                    out.names.push(name.to_string());
                    out.truth.push(num(1)?);
                    out.mean.push(num(2)?);
                    out.bias.push(num(3)?);
                    out.std.push(num(4)?);
                }
            }
        }
        if out.names.is_empty() {
            return Err(Error::Empty(format!("{} holds no parameters", path.display())));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (1..=k).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn moments_by_hand() {
        let est = vec![vec![1.0, 10.0], vec![2.0, 10.0], vec![4.0, 10.0]];
        let s = MonteCarloSummary::from_estimates(&names(2), &[2.0, 9.0], &est, 1).unwrap();
        assert_eq!(s.mean, vec![7.0 / 3.0, 10.0]);
        assert_eq!(s.bias[1], -1.0);
        // deviations -4/3, -1/3, 5/3: sum of squares 42/9, over R - 1 = 2
        assert!((s.std[0] - (42.0f64 / 18.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.std[1], 0.0);
        assert_eq!((s.replicates, s.failures), (3, 1));
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(MonteCarloSummary::from_estimates(&names(1), &[0.0], &[], 0).is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let est = vec![vec![0.1, 1.0 / 3.0], vec![0.7, -2.0e-17]];
        let s = MonteCarloSummary::from_estimates(&names(2), &[0.3, 0.0], &est, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        s.write_csv(&p).unwrap();
        assert_eq!(MonteCarloSummary::read_csv(&p).unwrap(), s);
    }

    #[test]
    fn table_has_one_row_per_parameter() {
        let s = MonteCarloSummary::from_estimates(&names(3), &[0.0; 3], &[vec![1.0; 3]], 0).unwrap();
        let t = s.table();
        assert!(t.lines().next().unwrap().contains("True"));
        assert_eq!(t.lines().filter(|l| l.starts_with('p')).count(), 3);
    }
}

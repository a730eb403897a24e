//! Monte Carlo experiments: replicated simulation and estimation, summaries,
//! the misspecification and rate studies, and report files.

mod config;
mod report;
mod studies;
mod summary;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::{qml_estimate, EstimationResult, Init};
use crate::model::ModelSpec;
use crate::simulate::{simulate_euler, simulate_exact_gaussian, EulerOptions, ObservationSeries, Provenance, Scheme};

pub use config::{Experiment, ExperimentConfig, ModelRef};
pub use report::{blom_quantiles, qq_correlation, report, QqData, Report};
pub use studies::{misspecification_study, rate_study, MisspecStudy, RateStudy, SpaceStats, MISSPEC_SPACES};
pub use summary::MonteCarloSummary;

/// Stage tags mixed into child seeds.
pub mod stage {
    pub const SIMULATE: u64 = 0;
    pub const ESTIMATE: u64 = 1;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for `(master, replicate, stage)`, independent of scheduling.
pub fn child_seed(master: u64, replicate: u64, stage: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ replicate) ^ stage.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn child_rng(master: u64, replicate: u64, stage: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(master, replicate, stage))
}

/// Simulates the data of replicate `r` (1-based).
pub fn simulate_replicate(exp: &Experiment, r: usize) -> Result<ObservationSeries> {
    let cfg = &exp.config;
    let seed = child_seed(cfg.seed, r as u64, stage::SIMULATE);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut series = match cfg.scheme {
        Scheme::Euler => {
            let opts = EulerOptions {
                horizon: cfg.n as f64 * cfg.h,
                euler_dt: cfg.euler_dt,
                h: cfg.h,
                burn_in: cfg.burn_in,
            };
            simulate_euler(&exp.realization, &exp.driver, &opts, &mut rng)?
        }
        Scheme::ExactGaussian => {
            let total = cfg.n + cfg.burn_in;
            let s = simulate_exact_gaussian(&exp.realization, &exp.driver, cfg.h, total, cfg.stationary_init, &mut rng)?;
            if cfg.burn_in == 0 {
                s
            } else {
                let mut t = ObservationSeries::new(cfg.h, s.y.rows(cfg.burn_in, cfg.n).into_owned())?;
                t.provenance = s.provenance;
                t
            }
        }
    };
    let prov = series.provenance.get_or_insert(Provenance {
        seed: None,
        scheme: Some(cfg.scheme),
        euler_dt: None,
    });
    prov.seed = Some(seed);
    Ok(series)
}

/// Estimates `spec` on `series` with the replicate's estimation stream.
pub fn estimate_replicate(exp: &Experiment, spec: &ModelSpec, series: &ObservationSeries, r: usize) -> Result<EstimationResult> {
    estimate_at_stage(exp, spec, series, r, stage::ESTIMATE)
}

pub(crate) fn estimate_at_stage(
    exp: &Experiment,
    spec: &ModelSpec,
    series: &ObservationSeries,
    r: usize,
    tag: u64,
) -> Result<EstimationResult> {
    let mut rng = child_rng(exp.config.seed, r as u64, tag);
    let starts = exp.config.estimator.starts;
    // starts scatter around the data-generating point, matched by name
    let center: Option<Vec<f64>> = spec
        .param_names
        .iter()
        .map(|n| exp.spec.param_names.iter().position(|m| m == n).map(|i| exp.truth[i]))
        .collect();
    let init = match center {
        Some(c) => Init::Around(c, starts),
        None => Init::Multi(starts),
    };
    qml_estimate(spec, series, &init, &exp.config.estimator, &mut rng)
}

/// One line of the per-replicate CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    /// 1-based replicate index
    pub replicate: usize,
    /// seed of the simulation stream
    pub seed: u64,
    /// `converged`, `max-iter`, or `failed: <reason>`
    pub status: String,
    pub iterations: usize,
    /// L̂_n at the estimate
    pub loglik: f64,
    pub theta: Vec<f64>,
}

impl ReplicateRecord {
    pub fn failed(&self) -> bool {
        self.status.starts_with("failed")
    }
}

/// Everything a Monte Carlo run produced.
#[derive(Debug, Clone)]
pub struct McRun {
    pub param_names: Vec<String>,
    pub truth: Vec<f64>,
    pub records: Vec<ReplicateRecord>,
    pub summary: MonteCarloSummary,
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

/// Runs `f(r)` for `r = 1..=count` on a pool of `workers` threads and
/// returns the results in replicate order.
pub(crate) fn run_pool<T, F>(workers: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(|| (1..=count).into_par_iter().map(&f).collect()))
}

/// Runs `f`, turning an error or a panic into a failed record.
fn guarded<F>(r: usize, seed: u64, s: usize, f: F) -> ReplicateRecord
where
    F: FnOnce() -> Result<EstimationResult>,
{
    let fail = |msg: String| ReplicateRecord {
        replicate: r,
        seed,
        status: format!("failed: {}", msg.replace(['\n', ','], " ")),
        iterations: 0,
        loglik: f64::NAN,
        theta: vec![f64::NAN; s],
    };
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(est)) => ReplicateRecord {
            replicate: r,
            seed,
            status: est.status.to_string(),
            iterations: est.iterations,
            loglik: est.value,
            theta: est.theta,
        },
        Ok(Err(e)) => fail(e.to_string()),
        Err(p) => fail(panic_message(p)),
    }
}

fn one_replicate(exp: &Experiment, r: usize) -> ReplicateRecord {
    let seed = child_seed(exp.config.seed, r as u64, stage::SIMULATE);
    guarded(r, seed, exp.spec.num_params(), || {
        let series = simulate_replicate(exp, r)?;
        estimate_replicate(exp, &exp.spec, &series, r)
    })
}

/// Simulates and estimates every replicate of `cfg`. Failed replicates are
/// recorded and left out of the summary; the run errors only if all fail.
pub fn run_replicates(cfg: &ExperimentConfig) -> Result<McRun> {
    let exp = cfg.resolve()?;
    let records = run_pool(cfg.workers, cfg.replicates, |r| one_replicate(&exp, r))?;
    if records.iter().all(|r| r.failed()) {
        return Err(Error::InvalidArgument(format!(
            "all {} replicates failed; first: {}",
            records.len(),
            records[0].status
        )));
    }
    let summary = MonteCarloSummary::from_records(&exp.spec.param_names, &exp.truth, &records)?;
    Ok(McRun {
        param_names: exp.spec.param_names.clone(),
        truth: exp.truth.clone(),
        records,
        summary,
    })
}

/// Header of the per-replicate CSV for `s` parameters.
pub fn replicate_header(s: usize) -> Vec<String> {
    let mut h: Vec<String> = ["replicate", "seed", "status", "iters", "loglik"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=s).map(|i| format!("theta_{i}")));
    h
}

/// Writes the per-replicate CSV. Floats use the shortest text that parses
/// back to the same value, so the file is a faithful record.
pub fn write_replicates_csv<W: Write>(out: W, records: &[ReplicateRecord]) -> Result<()> {
    let s = records.first().map_or(0, |r| r.theta.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(replicate_header(s))?;
    for r in records {
        let mut row = vec![
            r.replicate.to_string(),
            r.seed.to_string(),
            r.status.clone(),
            r.iterations.to_string(),
            r.loglik.to_string(),
        ];
        row.extend(r.theta.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_replicates_csv(path: &Path) -> Result<Vec<ReplicateRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header = rd.headers()?.clone();
    let s = header.len().saturating_sub(5);
    if header.iter().take(5).ne(["replicate", "seed", "status", "iters", "loglik"]) {
        return Err(Error::InvalidArgument(format!("{} is not a replicate file", path.display())));
    }
    let bad = |what: &str| Error::InvalidArgument(format!("{}: bad {what}", path.display()));
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let num = |i: usize| row[i].parse::<f64>().map_err(|_| bad("number"));
        out.push(ReplicateRecord {
            replicate: row[0].parse().map_err(|_| bad("replicate"))?,
            seed: row[1].parse().map_err(|_| bad("seed"))?,
            status: row[2].to_string(),
            iterations: row[3].parse().map_err(|_| bad("iters"))?,
            loglik: num(4)?,
            theta: (5..5 + s).map(num).collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

/// Writes `config.toml`, `replicates.csv`, `summary.csv` and `table.txt`
/// into `dir`. The stored config carries the resolved truth.
pub fn save_run(dir: &Path, cfg: &ExperimentConfig, run: &McRun) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut stored = cfg.clone();
    stored.truth = Some(run.truth.clone());
    std::fs::write(dir.join("config.toml"), stored.to_toml()?)?;
    write_replicates_csv(std::fs::File::create(dir.join("replicates.csv"))?, &run.records)?;
    run.summary.write_csv(&dir.join("summary.csv"))?;
    std::fs::write(dir.join("table.txt"), run.summary.table())?;
    Ok(())
}

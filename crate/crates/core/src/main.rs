use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cointssm::estimate::{qml_estimate, short_run_covariance, Init};
use cointssm::harness::{
    self, misspecification_study, rate_study, report, run_replicates, save_run, ExperimentConfig, ModelRef,
};
use cointssm::model::{check_assumptions, DEFAULT_J_MAX};
use cointssm::simulate::ObservationSeries;

#[derive(Parser)]
#[command(name = "cointssm", version, about = "Cointegrated continuous-time state space models: simulation, QML estimation and Monte Carlo studies")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// experiment config (TOML)
    #[arg(long)]
    config: Option<PathBuf>,
    /// master seed, overrides the config
    #[arg(long)]
    seed: Option<u64>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads, overrides the config
    #[arg(long)]
    workers: Option<usize>,
    /// catalog model, overrides the config
    #[arg(long)]
    model: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one series and write `series.csv` with a metadata sidecar
    Simulate {
        #[command(flatten)]
        common: Common,
        /// number of observations, overrides the config
        #[arg(long)]
        n: Option<usize>,
    },
    /// Estimate a model on a CSV series
    Estimate {
        #[command(flatten)]
        common: Common,
        /// series written by `simulate` (columns k,y1,..,yd)
        #[arg(long)]
        data: PathBuf,
        /// sampling step when the series has no sidecar
        #[arg(long)]
        h: Option<f64>,
    },
    /// Monte Carlo bias/std table
    Mc {
        #[command(flatten)]
        common: Common,
    },
    /// Minimized likelihood over the four restricted spaces
    Misspec {
        #[command(flatten)]
        common: Common,
    },
    /// Standard deviation against sample size with log-log slopes
    Rates {
        #[command(flatten)]
        common: Common,
        /// comma-separated sample sizes
        #[arg(long, value_delimiter = ',', default_value = "500,2000,8000")]
        sizes: Vec<usize>,
    },
    /// Numeric assumption report at the data-generating point
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
    },
    /// Tables and QQ/histogram files for a run directory written by `mc`
    Report {
        #[command(flatten)]
        common: Common,
        /// run directory (defaults to --out)
        dir: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&c.config, &c.model) {
        (Some(p), _) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        (None, Some(m)) => ExperimentConfig::for_model(m),
        (None, None) => bail!("give --config or --model"),
    };
    if let (Some(_), Some(m)) = (&c.config, &c.model) {
        cfg.model = ModelRef::Name(m.clone());
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(o) = &c.out {
        cfg.output = Some(o.clone());
    }
    cfg.resolve()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| {
        let name = if cfg.name.is_empty() { "run" } else { &cfg.name };
        Path::new("out").join(name)
    })
}

fn write(dir: &Path, file: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(file), text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate { common, n } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = n {
                cfg.n = n;
            }
            let exp = cfg.resolve()?;
            let series = harness::simulate_replicate(&exp, 1)?;
            let dir = out_dir(&cfg);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("series.csv");
            series.save(&path)?;
            println!("wrote {} observations to {}", series.len(), path.display());
        }
        Cmd::Estimate { common, data, h } => {
            let cfg = load_config(&common)?;
            let exp = cfg.resolve()?;
            let series = ObservationSeries::load(&data, h.or(Some(cfg.h)))?;
            let mut rng = harness::child_rng(cfg.seed, 0, harness::stage::ESTIMATE);
            let init = Init::Around(exp.truth.clone(), cfg.estimator.starts);
            let est = qml_estimate(&exp.spec, &series, &init, &cfg.estimator, &mut rng)?;
            let cov = short_run_covariance(&exp.spec, &est.theta, &series, None);
            println!("model {}  n = {}  L = {:.8}  status {}", exp.spec.name, series.len(), est.value, est.status);
            for (i, name) in exp.spec.param_names.iter().enumerate() {
                let se = cov
                    .as_ref()
                    .ok()
                    .and_then(|c| c.indices.iter().position(|&j| j == i).map(|k| c.std_errors[k]));
                let kind = if exp.spec.long_run.contains(&i) { "long-run" } else { "" };
                match se {
                    Some(se) => println!("{name:<10} {:>12.6}  se {se:.6} {kind}", est.theta[i]),
                    None => println!("{name:<10} {:>12.6}  {kind}", est.theta[i]),
                }
            }
            if let Err(e) = cov {
                eprintln!("no standard errors: {e}");
            }
        }
        Cmd::Mc { common } => {
            let cfg = load_config(&common)?;
            let run = run_replicates(&cfg)?;
            let dir = out_dir(&cfg);
            save_run(&dir, &cfg, &run)?;
            print!("{}", run.summary.table());
            println!("results in {}", dir.display());
        }
        Cmd::Misspec { common } => {
            let cfg = load_config(&common)?;
            let study = misspecification_study(&cfg)?;
            let dir = out_dir(&cfg);
            write(&dir, "misspec.txt", &study.table())?;
            study.write_csv(&dir.join("misspec.csv"))?;
            print!("{}", study.table());
        }
        Cmd::Rates { common, sizes } => {
            let cfg = load_config(&common)?;
            let study = rate_study(&cfg, &sizes)?;
            write(&out_dir(&cfg), "rates.txt", &study.table())?;
            print!("{}", study.table());
        }
        Cmd::Check { common, h } => {
            let cfg = load_config(&common)?;
            let exp = cfg.resolve()?;
            let rep = check_assumptions(&exp.spec, &exp.truth, h, DEFAULT_J_MAX);
            print!("{rep}");
            match rep.j0 {
                Some(j) => println!("  j0 = {j} (ranks {:?})", rep.psi_ranks),
                None => println!("  no j0 up to {DEFAULT_J_MAX} (ranks {:?})", rep.psi_ranks),
            }
            if !rep.all_passed() {
                bail!("assumption check failed");
            }
        }
        Cmd::Report { common, dir } => {
            let dir = dir.or(common.out).context("give the run directory")?;
            let rep = report(&dir)?;
            print!("{}", rep.table);
            for q in &rep.qq {
                println!("qq {:<10} r = {:.4}", q.name, q.correlation);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! Experiment configuration files.
//!
//! ```toml
//! name = "brownian-2d"
//! model = "canonical2d"
//! replicates = 100
//! n = 2000
//! h = 1.0
//! euler_dt = 0.01
//! scheme = "euler"
//! seed = 1
//! workers = 4
//!
//! [driver]
//! kind = "brownian"
//!
//! [estimator]
//! method = "bfgs"
//! starts = 5
//! ```
//!
//! `model` is either a catalog name or an inline template table.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::EstimatorOptions;
use crate::levy::{levy_covariance, DriverConfig, LevyConfig};
use crate::model::{build_realization, ModelSpec, Realization, TemplateConfig};
use crate::simulate::Scheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Name(String),
    Template(Box<TemplateConfig>),
}

impl ModelRef {
    pub fn resolve(&self) -> Result<ModelSpec> {
        match self {
            ModelRef::Name(n) => ModelSpec::from_name(n),
            ModelRef::Template(t) => ModelSpec::from_template(t),
        }
    }
}

fn default_h() -> f64 {
    1.0
}
fn default_euler_dt() -> f64 {
    0.01
}
fn default_n() -> usize {
    2000
}
fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_scheme() -> Scheme {
    Scheme::Euler
}
fn default_driver() -> DriverConfig {
    DriverConfig::Brownian { sigma: None }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub model: ModelRef,
    /// data-generating parameter; defaults to the model's reference point
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
    #[serde(default = "default_one")]
    pub replicates: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_euler_dt")]
    pub euler_dt: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// sampling steps simulated and dropped before the first observation
    #[serde(default)]
    pub burn_in: usize,
    /// exact scheme only: start the stationary state from its stationary law
    #[serde(default = "default_true")]
    pub stationary_init: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default = "default_driver")]
    pub driver: DriverConfig,
    #[serde(default)]
    pub estimator: EstimatorOptions,
}

impl ExperimentConfig {
    /// Defaults for a catalog model driven by Brownian motion.
    pub fn for_model(name: &str) -> ExperimentConfig {
        ExperimentConfig {
            name: name.to_string(),
            model: ModelRef::Name(name.to_string()),
            truth: None,
            replicates: 1,
            n: default_n(),
            h: default_h(),
            euler_dt: default_euler_dt(),
            scheme: Scheme::Euler,
            burn_in: 0,
            stationary_init: true,
            seed: 0,
            workers: 1,
            output: None,
            driver: default_driver(),
            estimator: EstimatorOptions::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        Ok(toml::from_str(text)?)
    }

    /// Canonical text form: parsing it back gives an equal config.
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Resolves the model, the driver and the data-generating parameter and
    /// checks that they fit together.
    pub fn resolve(&self) -> Result<Experiment> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig("n must be at least 2".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidConfig(format!("h must be positive, got {}", self.h)));
        }
        if self.scheme == Scheme::Euler {
            let q = self.h / self.euler_dt;
            if !(self.euler_dt > 0.0) || (q - q.round()).abs() > 1e-9 * q || q.round() < 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "euler_dt = {} must divide h = {}",
                    self.euler_dt, self.h
                )));
            }
        }
        if self.scheme == Scheme::ExactGaussian && !self.driver.is_gaussian() {
            return Err(Error::InvalidConfig("the exact scheme needs a brownian driver".into()));
        }
        let o = &self.estimator;
        if o.starts == 0 || o.max_iter == 0 || !(o.x_tol > 0.0) || !(o.f_tol > 0.0) || !(o.start_spread >= 0.0) {
            return Err(Error::InvalidConfig("estimator options out of range".into()));
        }
        let spec = self.model.resolve()?;
        let mut truth = match (&self.truth, &spec.truth) {
            (Some(t), _) => t.clone(),
            (None, Some(t)) => t.clone(),
            (None, None) => {
                return Err(Error::InvalidConfig(format!("model {} has no reference point; set truth", spec.name)))
            }
        };
        if truth.len() != spec.num_params() {
            return Err(Error::InvalidConfig(format!(
                "truth has {} entries, model {} has {} parameters",
                truth.len(),
                spec.name,
                spec.num_params()
            )));
        }
        let blocks = spec.blocks(&truth)?;
        let driver = self.driver.resolve(Some(&blocks.sigma_l))?;
        if driver.dim() != spec.dims.m {
            return Err(Error::InvalidConfig(format!(
                "driver dimension {} does not match the model's {}",
                driver.dim(),
                spec.dims.m
            )));
        }
        // the data-generating Σ_L is the driver's covariance
        let sigma = levy_covariance(&driver)?;
        if spec.sigma_vech.is_some() {
            spec.set_sigma_l(&mut truth, &sigma)?;
        } else if (&sigma - &blocks.sigma_l).amax() > 1e-8 {
            return Err(Error::InvalidConfig(
                "driver covariance differs from the model's Sigma_L at the truth".into(),
            ));
        }
        let realization = build_realization(&spec, &truth)?;
        Ok(Experiment {
            config: self.clone(),
            spec,
            truth,
            realization,
            driver,
        })
    }
}

/// A validated config with everything resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub spec: ModelSpec,
    pub truth: Vec<f64>,
    pub realization: Realization,
    pub driver: LevyConfig,
}

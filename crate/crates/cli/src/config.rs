//! The serializable record of a run.

use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use stare_core::inference::{AssignMode, EmConfig};
use stare_core::model::{ComponentFamily, Dataset};
use stare_core::selection::{
    Estimator, EstimatorConfig, SelectConfig, StabilityRule, SweepOptions, DEFAULT_K_MAX, DEFAULT_LAMBDA,
    DEFAULT_WIDTH_FRACTION,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum FamilyName {
    #[serde(rename = "gaussian1d")]
    #[value(name = "gaussian1d")]
    Gaussian1d,
    #[serde(rename = "gaussianNd")]
    #[value(name = "gaussianNd")]
    GaussianNd,
    #[serde(rename = "poisson")]
    #[value(name = "poisson")]
    Poisson,
}

impl FamilyName {
    pub fn resolve(self, dim: usize) -> CliResult<ComponentFamily> {
        match self {
            FamilyName::GaussianNd => Ok(ComponentFamily::GaussianMultivariate { dim }),
            FamilyName::Gaussian1d | FamilyName::Poisson if dim != 1 => Err(CliError::usage(format!(
                "family {} needs one-dimensional data, got dimension {dim}",
                self.to_possible_value().unwrap().get_name()
            ))),
            FamilyName::Gaussian1d => Ok(ComponentFamily::Gaussian1d),
            FamilyName::Poisson => Ok(ComponentFamily::Poisson),
        }
    }

    fn default_for(dim: usize) -> Self {
        if dim == 1 {
            FamilyName::Gaussian1d
        } else {
            FamilyName::GaussianNd
        }
    }
}

/// Everything besides the input files that determines a run's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub family: Option<FamilyName>,
    pub k_max: usize,
    pub lambda: f64,
    pub rho: Option<f64>,
    pub rho_max: Option<f64>,
    pub width_fraction: f64,
    pub stability_rule: StabilityRule,
    pub grid_points: usize,
    pub estimator: Option<EstimatorConfig>,
    pub em: EmConfig,
    pub z_mode: AssignMode,
    pub z_replicates: usize,
    pub seed: u64,
    pub inputs: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            family: None,
            k_max: DEFAULT_K_MAX,
            lambda: DEFAULT_LAMBDA,
            rho: None,
            rho_max: None,
            width_fraction: DEFAULT_WIDTH_FRACTION,
            stability_rule: StabilityRule::default(),
            grid_points: 200,
            estimator: None,
            em: EmConfig::default(),
            z_mode: AssignMode::default(),
            z_replicates: 1,
            seed: 0,
            inputs: Vec::new(),
        }
    }
}

/// Command-line overrides; `None` keeps the config file's value.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// Base random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-component penalty.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Misspecification tolerance.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Upper end of the rho range for sweeps and calibration.
    #[arg(long)]
    pub rho_max: Option<f64>,
    /// Largest number of components tried.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// knn-adaptive, knn-fixed:K, knn-corrected:K, plugin, mmd or knn-independent.
    #[arg(long, value_parser = parse_estimator)]
    pub estimator: Option<Estimator>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyName>,
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    s.parse().map_err(|e: stare_core::Error| e.to_string())
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read(path)?;
        serde_json::from_slice(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }

    /// Config file (if any) with the flags applied on top.
    pub fn from_args(args: &CommonArgs) -> CliResult<Self> {
        let mut cfg = match &args.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        if let Some(l) = args.lambda {
            cfg.lambda = l;
        }
        if args.rho.is_some() {
            cfg.rho = args.rho;
        }
        if args.rho_max.is_some() {
            cfg.rho_max = args.rho_max;
        }
        if let Some(k) = args.k_max {
            cfg.k_max = k;
        }
        if let Some(e) = args.estimator {
            let mut est = cfg.estimator.unwrap_or_default();
            est.estimator = e;
            cfg.estimator = Some(est);
        }
        if args.family.is_some() {
            cfg.family = args.family;
        }
        Ok(cfg)
    }

    /// Fill in the family and estimator from the data so the recorded
    /// config is complete.
    pub fn resolve(&mut self, data: &Dataset) -> CliResult<SelectConfig> {
        let name = *self.family.get_or_insert(FamilyName::default_for(data.dim()));
        let family = name.resolve(data.dim())?;
        let estimator = *self.estimator.get_or_insert(EstimatorConfig::default_for(family));
        let cfg = SelectConfig {
            family,
            k_max: self.k_max,
            lambda: self.lambda,
            em: self.em.clone(),
            estimator,
            z_mode: self.z_mode,
            z_replicates: self.z_replicates,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            rho_max: self.rho_max,
            width_fraction: self.width_fraction,
            rule: self.stability_rule,
        }
    }
}

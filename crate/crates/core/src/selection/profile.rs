//! Per-component divergences of a fitted model under a set of assignments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::divergence::{
    kl_knn_independent, kl_knn_with_log_q, kl_plugin_discrete, mmd_estimate, Bandwidth, Correction,
    KernelConfig, KnnConfig, DEFAULT_MIN_RADIUS,
};
use crate::error::{Error, Result};
use crate::inference::FittedModel;
use crate::model::{Assignments, ComponentFamily, ComponentParams, Dataset, PreparedComponent};
use crate::rng;

/// Divergence estimator choice, written as `knn-adaptive`, `knn-fixed:5`,
/// `knn-corrected:5`, `plugin`, `mmd` or `knn-independent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Estimator {
    KnnAdaptive,
    KnnFixed(usize),
    KnnCorrected(usize),
    Plugin,
    Mmd,
    KnnIndependent,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::KnnAdaptive => write!(f, "knn-adaptive"),
            Estimator::KnnFixed(k) => write!(f, "knn-fixed:{k}"),
            Estimator::KnnCorrected(k) => write!(f, "knn-corrected:{k}"),
            Estimator::Plugin => write!(f, "plugin"),
            Estimator::Mmd => write!(f, "mmd"),
            Estimator::KnnIndependent => write!(f, "knn-independent"),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fixed = |rest: &str| -> Result<usize> {
            match rest.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(k),
                _ => Err(Error::invalid(format!("bad neighbour count in estimator {s:?}"))),
            }
        };
        match s {
            "knn-adaptive" => Ok(Estimator::KnnAdaptive),
            "plugin" => Ok(Estimator::Plugin),
            "mmd" => Ok(Estimator::Mmd),
            "knn-independent" => Ok(Estimator::KnnIndependent),
            _ => {
                if let Some(rest) = s.strip_prefix("knn-fixed:") {
                    Ok(Estimator::KnnFixed(fixed(rest)?))
                } else if let Some(rest) = s.strip_prefix("knn-corrected:") {
                    Ok(Estimator::KnnCorrected(fixed(rest)?))
                } else {
                    Err(Error::invalid(format!("unknown estimator {s:?}")))
                }
            }
        }
    }
}

impl TryFrom<String> for Estimator {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Estimator> for String {
    fn from(e: Estimator) -> String {
        e.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub estimator: Estimator,
    pub min_radius: f64,
    pub bandwidth: Bandwidth,
    pub model_sample_size: Option<usize>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self::new(Estimator::KnnAdaptive)
    }
}

impl EstimatorConfig {
    pub fn new(estimator: Estimator) -> Self {
        Self {
            estimator,
            min_radius: DEFAULT_MIN_RADIUS,
            bandwidth: Bandwidth::Median,
            model_sample_size: None,
        }
    }

    /// Estimator suited to a family when none is requested.
    pub fn default_for(family: ComponentFamily) -> Self {
        Self::new(match family {
            ComponentFamily::Poisson => Estimator::Plugin,
            _ => Estimator::KnnAdaptive,
        })
    }

    fn knn(&self) -> KnnConfig {
        let mut c = match self.estimator {
            Estimator::KnnFixed(k) => KnnConfig::fixed(k, Correction::Biased),
            Estimator::KnnCorrected(k) => KnnConfig::fixed(k, Correction::BiasCorrected),
            _ => KnnConfig::adaptive(),
        };
        c.min_radius = self.min_radius;
        c
    }

    /// Smallest component size the estimator can handle.
    pub fn min_samples(&self) -> usize {
        match self.estimator {
            Estimator::Plugin => 1,
            Estimator::Mmd => 2,
            _ => self.knn().min_samples(),
        }
    }

    pub fn check_family(&self, family: ComponentFamily) -> Result<()> {
        let ok = match self.estimator {
            Estimator::Plugin => family.is_discrete(),
            Estimator::Mmd => true,
            _ => !family.is_discrete(),
        };
        if ok {
            self.knn().validate()?;
            KernelConfig {
                bandwidth: self.bandwidth,
                model_sample_size: self.model_sample_size,
                seed: 0,
            }
            .validate()
        } else {
            Err(Error::UnsupportedEstimator {
                estimator: self.estimator.to_string(),
                family: family.name().to_string(),
            })
        }
    }

    /// Divergence between `samples` (row-major) and one fitted component.
    pub fn estimate(&self, samples: &[f64], params: &ComponentParams, seed: u64) -> Result<f64> {
        let family = params.family();
        self.check_family(family)?;
        let dim = family.dim();
        let prepared = params.prepare()?;
        let value = match self.estimator {
            Estimator::Plugin => {
                kl_plugin_discrete(samples, |x| prepared.log_density(&[x]).unwrap_or(f64::NAN))?.value
            }
            Estimator::Mmd => {
                let cfg = KernelConfig {
                    bandwidth: self.bandwidth,
                    model_sample_size: self.model_sample_size,
                    seed,
                };
                mmd_estimate(samples, dim, &prepared, &cfg)?.value
            }
            Estimator::KnnIndependent => {
                let marginals = marginals(params)?;
                kl_knn_independent(samples, dim, |d, x| marginals[d].log_density(&[x]).unwrap_or(f64::NAN), &self.knn())?
                    .value
            }
            _ => {
                let log_q = prepared.log_density_rows(samples)?;
                kl_knn_with_log_q(samples, dim, &log_q, &self.knn())?.value
            }
        };
        Ok(value)
    }
}

/// One-dimensional marginals of a gaussian component.
fn marginals(params: &ComponentParams) -> Result<Vec<PreparedComponent>> {
    match params {
        ComponentParams::Gaussian1d { .. } => Ok(vec![params.prepare()?]),
        ComponentParams::GaussianMultivariate { mean, cov } => mean
            .iter()
            .enumerate()
            .map(|(d, &m)| {
                ComponentParams::Gaussian1d {
                    mean: m,
                    sd: cov[(d, d)].sqrt(),
                }
                .prepare()
            })
            .collect(),
        ComponentParams::Poisson { .. } => Err(Error::UnsupportedEstimator {
            estimator: Estimator::KnnIndependent.to_string(),
            family: "poisson".into(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceStatus {
    Estimated,
    /// No observations assigned; contributes nothing to the loss.
    Empty,
    /// Fewer observations than the estimator needs; divergence set to `+inf`.
    BelowMinimum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentDivergence {
    pub component_index: usize,
    pub n_k: usize,
    #[serde(with = "crate::serde_ext")]
    pub divergence: f64,
    pub status: DivergenceStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDivergenceProfile {
    pub k: usize,
    pub per_component: Vec<ComponentDivergence>,
    pub total_n: usize,
}

impl ComponentDivergenceProfile {
    /// Build a profile from `(n_k, divergence)` pairs; infinite divergences
    /// on nonempty components are marked below-minimum.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Self {
        let per_component = pairs
            .iter()
            .enumerate()
            .map(|(j, &(n_k, d))| {
                let status = if n_k == 0 {
                    DivergenceStatus::Empty
                } else if d.is_infinite() {
                    DivergenceStatus::BelowMinimum
                } else {
                    DivergenceStatus::Estimated
                };
                ComponentDivergence {
                    component_index: j,
                    n_k,
                    divergence: if n_k == 0 { 0.0 } else { d },
                    status,
                }
            })
            .collect();
        Self {
            k: pairs.len(),
            per_component,
            total_n: pairs.iter().map(|p| p.0).sum(),
        }
    }

    /// True when some nonempty component has an infinite divergence.
    pub fn has_infinite(&self) -> bool {
        self.per_component
            .iter()
            .any(|c| c.n_k > 0 && c.divergence.is_infinite())
    }

    /// Largest finite divergence over nonempty components.
    pub fn max_finite_divergence(&self) -> Option<f64> {
        self.per_component
            .iter()
            .filter(|c| c.n_k > 0 && c.divergence.is_finite())
            .map(|c| c.divergence)
            .reduce(f64::max)
    }
}

/// Estimate every component's divergence from the observations assigned to
/// it. `seed` only feeds the MMD model sample.
pub fn component_divergences(
    model: &FittedModel,
    z: &Assignments,
    data: &Dataset,
    config: &EstimatorConfig,
    seed: u64,
) -> Result<ComponentDivergenceProfile> {
    let k = model.k;
    if z.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: z.len(),
        });
    }
    if let Some(&bad) = z.as_slice().iter().find(|&&j| j >= k) {
        return Err(Error::invalid(format!("assignment {bad} out of range for K = {k}")));
    }
    config.check_family(model.params.family)?;
    let groups = z.groups(k);
    let one = |j: usize| -> Result<(usize, f64)> {
        let idx = &groups[j];
        let n_k = idx.len();
        if n_k == 0 {
            return Ok((0, 0.0));
        }
        if n_k < config.min_samples() {
            return Ok((n_k, f64::INFINITY));
        }
        let samples = data.gather(idx);
        let s = rng::derive_seed(seed, &[rng::tag::MMD, k as u64, j as u64]);
        config
            .estimate(&samples, &model.params.components[j], s)
            .map(|d| (n_k, d))
            .map_err(|e| Error::Component {
                component: j,
                source: Box::new(e),
            })
    };
    #[cfg(feature = "parallel")]
    let pairs: Vec<Result<(usize, f64)>> = {
        use rayon::prelude::*;
        (0..k).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let pairs: Vec<Result<(usize, f64)>> = (0..k).map(one).collect();
    let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ComponentDivergenceProfile::from_pairs(&pairs))
}

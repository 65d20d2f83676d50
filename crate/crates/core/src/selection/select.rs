//! Fit every candidate `K`, assign, estimate divergences, and pick the `K`
//! with the smallest penalized loss.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::loss::{penalized_loss, LossCurve};
use super::profile::{component_divergences, ComponentDivergenceProfile, EstimatorConfig};
use super::stable::{
    default_rho_max, stable_region_select_with, StabilityRule, StableRegion, DEFAULT_WIDTH_FRACTION,
};
use crate::error::{Error, Result};
use crate::inference::{bic, fit_em, sample_assignments, AssignMode, EmConfig, FittedModel};
use crate::model::{ComponentFamily, Dataset};
use crate::rng;

pub const DEFAULT_LAMBDA: f64 = 0.01;
pub const DEFAULT_K_MAX: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub family: ComponentFamily,
    pub k_max: usize,
    pub lambda: f64,
    pub em: EmConfig,
    pub estimator: EstimatorConfig,
    pub z_mode: AssignMode,
    /// Number of assignment draws whose losses are averaged. A single draw
    /// is the plain algorithm; more than one is an extension.
    pub z_replicates: usize,
    pub seed: u64,
}

impl SelectConfig {
    pub fn new(family: ComponentFamily) -> Self {
        Self {
            family,
            k_max: DEFAULT_K_MAX,
            lambda: DEFAULT_LAMBDA,
            em: EmConfig::default(),
            estimator: EstimatorConfig::default_for(family),
            z_mode: AssignMode::Sample,
            z_replicates: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::invalid("k_max must be at least 1"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be positive"));
        }
        if self.z_replicates == 0 {
            return Err(Error::invalid("z_replicates must be at least 1"));
        }
        self.em.validate()?;
        self.estimator.check_family(self.family)
    }

    /// The EM settings actually used: the run seed replaces the EM seed.
    pub fn effective_em(&self) -> EmConfig {
        EmConfig {
            seed: self.seed,
            ..self.em.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub family: ComponentFamily,
    pub estimator: String,
    pub em_config_digest: String,
    pub data_digest: String,
    pub z_mode: AssignMode,
    pub z_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub k: usize,
    pub model: FittedModel,
    /// One profile per assignment draw.
    pub profiles: Vec<ComponentDivergenceProfile>,
    pub bic: f64,
}

impl Candidate {
    /// Penalized loss averaged over the assignment draws.
    pub fn loss(&self, rho: f64, lambda: f64) -> Result<f64> {
        let mut total = 0.0;
        for p in &self.profiles {
            total += penalized_loss(p, rho, lambda)?;
        }
        Ok(total / self.profiles.len() as f64)
    }

    /// Sample standard deviation of the loss across assignment draws; `None`
    /// with a single draw or an infinite loss.
    pub fn loss_sd(&self, rho: f64, lambda: f64) -> Result<Option<f64>> {
        let losses = self
            .profiles
            .iter()
            .map(|p| penalized_loss(p, rho, lambda))
            .collect::<Result<Vec<_>>>()?;
        let n = losses.len();
        if n < 2 || losses.iter().any(|l| !l.is_finite()) {
            return Ok(None);
        }
        let mean = losses.iter().sum::<f64>() / n as f64;
        let ss: f64 = losses.iter().map(|l| (l - mean).powi(2)).sum();
        Ok(Some((ss / (n - 1) as f64).sqrt()))
    }

    pub fn curve(&self, lambda: f64) -> Result<LossCurve> {
        let curves = self
            .profiles
            .iter()
            .map(|p| LossCurve::new(p, lambda))
            .collect::<Result<Vec<_>>>()?;
        LossCurve::average(&curves)
    }
}

/// A candidate `K` whose fit failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFailure {
    pub k: usize,
    pub error: String,
}

/// Fitted candidates `K = 1..k_max`, reusable across values of `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub lambda: f64,
    pub candidates: Vec<Candidate>,
    pub failures: Vec<CandidateFailure>,
    pub provenance: Provenance,
}

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn fit_candidate(data: &Dataset, config: &SelectConfig, em: &EmConfig, k: usize) -> Result<Candidate> {
    let model = fit_em(data, config.family, k, em)?;
    let draws = match config.z_mode {
        AssignMode::Map => 1,
        AssignMode::Sample => config.z_replicates,
    };
    let mut profiles = Vec::with_capacity(draws);
    for r in 0..draws {
        let z_seed = rng::derive_seed(config.seed, &[rng::tag::ASSIGN, r as u64]);
        let z = sample_assignments(&model, data, config.z_mode, z_seed)?;
        let est_seed = rng::derive_seed(config.seed, &[rng::tag::MMD, r as u64]);
        profiles.push(component_divergences(&model, &z, data, &config.estimator, est_seed)?);
    }
    let bic = bic(&model, data.len());
    Ok(Candidate { k, model, profiles, bic })
}

impl CandidateSet {
    pub fn fit(data: &Dataset, config: &SelectConfig) -> Result<Self> {
        config.validate()?;
        let em = config.effective_em();
        let run = |k: usize| fit_candidate(data, config, &em, k);
        #[cfg(feature = "parallel")]
        let results: Vec<Result<Candidate>> = {
            use rayon::prelude::*;
            (1..=config.k_max).into_par_iter().map(run).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let results: Vec<Result<Candidate>> = (1..=config.k_max).map(run).collect();

        let mut candidates = Vec::new();
        let mut failures = Vec::new();
        for (k, r) in (1..=config.k_max).zip(results) {
            match r {
                Ok(c) => candidates.push(c),
                Err(e @ (Error::DegenerateFit { .. } | Error::TooFewObservations { .. })) => {
                    failures.push(CandidateFailure { k, error: e.to_string() })
                }
                Err(e) => return Err(e),
            }
        }
        if candidates.is_empty() {
            return Err(Error::NoCandidates);
        }
        let em_json = serde_json::to_vec(&em)?;
        Ok(Self {
            lambda: config.lambda,
            candidates,
            failures,
            provenance: Provenance {
                seed: config.seed,
                family: config.family,
                estimator: config.estimator.estimator.to_string(),
                em_config_digest: hex_sha256(&em_json),
                data_digest: data.digest(),
                z_mode: config.z_mode,
                z_replicates: config.z_replicates,
            },
        })
    }

    pub fn candidate(&self, k: usize) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.k == k)
    }

    /// Argmin of the penalized loss at `rho`, smallest `K` on ties.
    pub fn choose(&self, rho: f64) -> Result<usize> {
        let mut best: Option<(usize, f64)> = None;
        for c in &self.candidates {
            let loss = c.loss(rho, self.lambda)?;
            if best.is_none_or(|(_, b)| loss < b) {
                best = Some((c.k, loss));
            }
        }
        best.map(|b| b.0).ok_or(Error::NoCandidates)
    }

    /// [`CandidateSet::choose`] with the full per-`K` report.
    pub fn select(&self, rho: f64) -> Result<SelectionResult> {
        let mut per_k = Vec::with_capacity(self.candidates.len());
        let mut best: Option<(usize, f64)> = None;
        for c in &self.candidates {
            let loss = c.loss(rho, self.lambda)?;
            if best.is_none_or(|(_, b)| loss < b) {
                best = Some((c.k, loss));
            }
            per_k.push(CandidateReport {
                k: c.k,
                model: c.model.clone(),
                profiles: c.profiles.clone(),
                loss,
                loss_sd: c.loss_sd(rho, self.lambda)?,
                bic: c.bic,
            });
        }
        let (chosen_k, _) = best.ok_or(Error::NoCandidates)?;
        Ok(SelectionResult {
            chosen_k,
            rho,
            lambda: self.lambda,
            bic_k: self.bic_choice(),
            per_k,
            failures: self.failures.clone(),
            provenance: self.provenance.clone(),
        })
    }

    /// `K` with the smallest BIC, smallest `K` on ties.
    pub fn bic_choice(&self) -> usize {
        let mut best = &self.candidates[0];
        for c in &self.candidates[1..] {
            if c.bic < best.bic {
                best = c;
            }
        }
        best.k
    }

    pub fn curves(&self) -> Result<Vec<LossCurve>> {
        self.candidates.iter().map(|c| c.curve(self.lambda)).collect()
    }

    /// Exact loss curves plus the stable-region verdict.
    pub fn sweep(&self, options: &SweepOptions) -> Result<Sweep> {
        let curves = self.curves()?;
        let rho_max = options.rho_max.unwrap_or_else(|| default_rho_max(&curves));
        let verdict = stable_region_select_with(&curves, rho_max, options.width_fraction, options.rule)?;
        Ok(Sweep {
            lambda: self.lambda,
            curves,
            verdict,
            bic_k: self.bic_choice(),
            failures: self.failures.clone(),
            provenance: self.provenance.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub k: usize,
    pub model: FittedModel,
    pub profiles: Vec<ComponentDivergenceProfile>,
    /// Penalized loss at the selection `rho`.
    #[serde(with = "crate::serde_ext")]
    pub loss: f64,
    /// Spread of the loss across assignment draws, see [`Candidate::loss_sd`].
    pub loss_sd: Option<f64>,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen_k: usize,
    pub rho: f64,
    pub lambda: f64,
    /// Argmin-BIC `K` over the same fits, for comparison.
    pub bic_k: usize,
    pub per_k: Vec<CandidateReport>,
    pub failures: Vec<CandidateFailure>,
    pub provenance: Provenance,
}

impl SelectionResult {
    pub fn model(&self, k: usize) -> Option<&FittedModel> {
        self.per_k.iter().find(|c| c.k == k).map(|c| &c.model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    /// Defaults to `1.5 x` the largest finite divergence.
    pub rho_max: Option<f64>,
    pub width_fraction: f64,
    pub rule: StabilityRule,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            rho_max: None,
            width_fraction: DEFAULT_WIDTH_FRACTION,
            rule: StabilityRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub lambda: f64,
    pub curves: Vec<LossCurve>,
    pub verdict: StableRegion,
    pub bic_k: usize,
    pub failures: Vec<CandidateFailure>,
    pub provenance: Provenance,
}

/// Fit `K = 1..k_max` and return the penalized-loss argmin at `rho`.
pub fn select_k(data: &Dataset, config: &SelectConfig, rho: f64) -> Result<SelectionResult> {
    CandidateSet::fit(data, config)?.select(rho)
}

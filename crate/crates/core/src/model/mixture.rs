use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Assignments, Dataset};
use super::family::{ComponentFamily, ComponentParams, PreparedComponent};
use crate::error::{Error, Result};
use crate::rng;

/// Mixture weights and component parameters for one candidate `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub family: ComponentFamily,
    pub weights: Vec<f64>,
    pub components: Vec<ComponentParams>,
}

impl MixtureParams {
    pub fn new(
        family: ComponentFamily,
        weights: Vec<f64>,
        components: Vec<ComponentParams>,
    ) -> Result<Self> {
        let m = Self {
            family,
            weights,
            components,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::invalid("a mixture needs at least one component"));
        }
        if self.weights.len() != self.components.len() {
            return Err(Error::invalid(format!(
                "{} weights for {} components",
                self.weights.len(),
                self.components.len()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be nonnegative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        for c in &self.components {
            if c.family() != self.family {
                return Err(Error::invalid(format!(
                    "component family {} does not match mixture family {}",
                    c.family().name(),
                    self.family.name()
                )));
            }
            c.validate()?;
        }
        Ok(())
    }

    pub fn prepare(&self) -> Result<PreparedMixture> {
        Ok(PreparedMixture {
            log_weights: self.weights.iter().map(|w| w.ln()).collect(),
            components: self
                .components
                .iter()
                .map(|c| c.prepare())
                .collect::<Result<_>>()?,
        })
    }

    /// `log sum_k pi_k f_k(x)`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.prepare()?.log_density(x)
    }

    /// Draw `n` observations through the latent-variable form: `z ~ Cat(pi)`,
    /// then `x | z ~ F_z`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(Dataset, Assignments)> {
        if n == 0 {
            return Err(Error::invalid("sample size must be at least 1"));
        }
        let prepared = self.prepare()?;
        let mut rng = rng::stream(seed, &[rng::tag::SAMPLE]);
        let mut values = Vec::with_capacity(n * self.family.dim());
        let mut z = Vec::with_capacity(n);
        for _ in 0..n {
            let k = sample_categorical(&self.weights, &mut rng);
            values.extend(prepared.components[k].sample(&mut rng));
            z.push(k);
        }
        let z = Assignments(z);
        let data = Dataset::new("mixture-sample", self.family.dim(), values, Some(z.to_labels()))?;
        Ok((data, z))
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding can leave `u` just above the last partial sum.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Mixture with factorized components, for hot loops.
#[derive(Debug, Clone)]
pub struct PreparedMixture {
    pub log_weights: Vec<f64>,
    pub components: Vec<PreparedComponent>,
}

impl PreparedMixture {
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let terms = self
            .components
            .iter()
            .zip(&self.log_weights)
            .map(|(c, lw)| Ok(lw + c.log_density(x)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(log_sum_exp(&terms))
    }
}

/// Max-shifted `log sum exp`.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

pub fn mixture_log_density(params: &MixtureParams, x: &[f64]) -> Result<f64> {
    params.log_density(x)
}

pub fn sample_mixture(params: &MixtureParams, n: usize, seed: u64) -> Result<(Dataset, Assignments)> {
    params.sample(n, seed)
}

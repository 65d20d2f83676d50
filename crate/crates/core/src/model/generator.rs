//! Data generators for the simulation scenarios.
//!
//! Skew-normal variates use the location-scale construction
//! `Z = delta |U0| + sqrt(1 - delta^2) U1` with `delta = gamma / sqrt(1 + gamma^2)`,
//! whose density is `(2/sigma) phi((x-mu)/sigma) Phi(gamma (x-mu)/sigma)`.
//! The multivariate version applies a shape vector `gamma` against the
//! correlation matrix `Sigma_ij = exp(-(i-j)^2 / s^2)`.
//! Negative binomial counts are drawn as a gamma-Poisson mixture.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{Assignments, Dataset};
use super::family::check_spd;
use super::mixture::sample_categorical;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    SkewNormalMixture,
    NegbinMixture,
    MultivariateSkewNormalMixture,
    GaussianMixture,
}

/// A per-component value that is either one number (broadcast over
/// coordinates) or a full vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ScalarOrVec {
    fn expand(&self, dim: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            ScalarOrVec::Scalar(v) => Ok(vec![*v; dim]),
            ScalarOrVec::Vector(v) if v.len() == dim => Ok(v.clone()),
            ScalarOrVec::Vector(v) => Err(Error::invalid(format!(
                "{what} has length {}, expected {dim}",
                v.len()
            ))),
        }
    }
}

impl From<f64> for ScalarOrVec {
    fn from(v: f64) -> Self {
        ScalarOrVec::Scalar(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub scenario: Scenario,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locations: Option<Vec<ScalarOrVec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<ScalarOrVec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skewness: Option<Vec<ScalarOrVec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negbin_m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negbin_p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corr_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub n: usize,
    pub seed: u64,
}

/// Names accepted by [`GeneratorSpec::alias`].
pub const SCENARIO_ALIASES: &[&str] = &[
    "skewnorm-same",
    "skewnorm-different",
    "skewnorm-large-small",
    "skewnorm-small-large",
    "skewnorm-large-large",
    "negbin3",
    "mvskewnorm-d50",
];

fn scalars(v: &[f64]) -> Vec<ScalarOrVec> {
    v.iter().map(|&x| ScalarOrVec::Scalar(x)).collect()
}

impl GeneratorSpec {
    fn skew_normal(weights: [f64; 2], gamma: [f64; 2], n: usize) -> Self {
        Self {
            scenario: Scenario::SkewNormalMixture,
            weights: weights.to_vec(),
            locations: Some(scalars(&[-3.0, 3.0])),
            scales: Some(scalars(&[1.0, 1.0])),
            skewness: Some(scalars(&gamma)),
            negbin_m: None,
            negbin_p: None,
            corr_sigma: None,
            dim: None,
            n,
            seed: 0,
        }
    }

    /// Built-in scenario by name; see [`SCENARIO_ALIASES`].
    pub fn alias(name: &str) -> Option<Self> {
        Some(match name {
            "skewnorm-same" => Self::skew_normal([0.5, 0.5], [-10.0, -10.0], 10_000),
            "skewnorm-different" => Self::skew_normal([0.5, 0.5], [-10.0, -1.0], 10_000),
            "skewnorm-large-small" => Self::skew_normal([0.95, 0.05], [-10.0, -1.0], 5_000),
            "skewnorm-small-large" => Self::skew_normal([0.95, 0.05], [-1.0, -10.0], 5_000),
            "skewnorm-large-large" => Self::skew_normal([0.95, 0.05], [-10.0, -10.0], 5_000),
            "negbin3" => Self {
                scenario: Scenario::NegbinMixture,
                weights: vec![0.3, 0.3, 0.4],
                locations: None,
                scales: None,
                skewness: None,
                negbin_m: Some(vec![55.0, 75.0, 100.0]),
                negbin_p: Some(vec![0.5, 0.3, 0.5]),
                corr_sigma: None,
                dim: None,
                n: 20_000,
                seed: 0,
            },
            "mvskewnorm-d50" => Self {
                scenario: Scenario::MultivariateSkewNormalMixture,
                weights: vec![0.3, 0.3, 0.4],
                locations: Some(scalars(&[-3.0, 0.0, 3.0])),
                scales: Some(scalars(&[1.0, 1.0, 1.0])),
                skewness: Some(scalars(&[-10.0, -10.0, -10.0])),
                negbin_m: None,
                negbin_p: None,
                corr_sigma: Some(0.6),
                dim: Some(50),
                n: 10_000,
                seed: 0,
            },
            _ => return None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        match self.scenario {
            Scenario::SkewNormalMixture | Scenario::NegbinMixture => 1,
            _ => self.dim.unwrap_or(1),
        }
    }

    fn per_component<'a, T>(&self, v: &'a Option<Vec<T>>, what: &str) -> Result<&'a [T]> {
        let v = v
            .as_deref()
            .ok_or_else(|| Error::invalid(format!("scenario needs `{what}`")))?;
        if v.len() != self.k() {
            return Err(Error::invalid(format!(
                "`{what}` has {} entries for {} components",
                v.len(),
                self.k()
            )));
        }
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty()
            || self.weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::invalid("weights must form a probability vector"));
        }
        if self.n == 0 {
            return Err(Error::invalid("n must be at least 1"));
        }
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::invalid("dim must be at least 1"));
        }
        match self.scenario {
            Scenario::NegbinMixture => {
                let m = self.per_component(&self.negbin_m, "negbin_m")?;
                let p = self.per_component(&self.negbin_p, "negbin_p")?;
                if m.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::invalid("negbin_m must be positive"));
                }
                if p.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                    return Err(Error::invalid("negbin_p must lie in (0, 1)"));
                }
            }
            _ => {
                for loc in self.per_component(&self.locations, "locations")? {
                    if loc.expand(dim, "location")?.iter().any(|v| !v.is_finite()) {
                        return Err(Error::invalid("locations must be finite"));
                    }
                }
                for s in self.per_component(&self.scales, "scales")? {
                    if s.expand(dim, "scale")?.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                        return Err(Error::invalid("scales must be positive"));
                    }
                }
                if matches!(
                    self.scenario,
                    Scenario::SkewNormalMixture | Scenario::MultivariateSkewNormalMixture
                ) {
                    for g in self.per_component(&self.skewness, "skewness")? {
                        if g.expand(dim, "skewness")?.iter().any(|v| !v.is_finite()) {
                            return Err(Error::invalid("skewness must be finite"));
                        }
                    }
                }
                if let Some(s) = self.corr_sigma {
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(Error::invalid("corr_sigma must be positive"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        let s = match self.scenario {
            Scenario::SkewNormalMixture => "skew-normal-mixture",
            Scenario::NegbinMixture => "negbin-mixture",
            Scenario::MultivariateSkewNormalMixture => "multivariate-skew-normal-mixture",
            Scenario::GaussianMixture => "gaussian-mixture",
        };
        format!("{s}-seed{}", self.seed)
    }

    /// Draw the dataset; labels are the true component indices.
    pub fn sample(&self) -> Result<(Dataset, Assignments)> {
        self.validate()?;
        let dim = self.dim();
        let k = self.k();
        let mut rng = rng::stream(self.seed, &[rng::tag::SAMPLE]);
        let samplers: Vec<ComponentSampler> = (0..k)
            .map(|j| self.component_sampler(j))
            .collect::<Result<_>>()?;
        let mut values = Vec::with_capacity(self.n * dim);
        let mut z = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let j = sample_categorical(&self.weights, &mut rng);
            samplers[j].draw(&mut rng, &mut values);
            z.push(j);
        }
        let z = Assignments(z);
        let data = Dataset::new(self.name(), dim, values, Some(z.to_labels()))?;
        Ok((data, z))
    }

    fn component_sampler(&self, j: usize) -> Result<ComponentSampler> {
        let dim = self.dim();
        match self.scenario {
            Scenario::NegbinMixture => {
                let m = self.negbin_m.as_ref().unwrap()[j];
                let p = self.negbin_p.as_ref().unwrap()[j];
                Ok(ComponentSampler::NegBin {
                    gamma: Gamma::new(m, (1.0 - p) / p)
                        .map_err(|e| Error::invalid(format!("negbin: {e}")))?,
                })
            }
            Scenario::SkewNormalMixture => {
                let loc = self.locations.as_ref().unwrap()[j].expand(1, "location")?[0];
                let scale = self.scales.as_ref().unwrap()[j].expand(1, "scale")?[0];
                let g = self.skewness.as_ref().unwrap()[j].expand(1, "skewness")?[0];
                let delta = g / (1.0 + g * g).sqrt();
                Ok(ComponentSampler::SkewNormal1d {
                    loc,
                    scale,
                    delta,
                    resid: (1.0 - delta * delta).sqrt(),
                })
            }
            Scenario::MultivariateSkewNormalMixture | Scenario::GaussianMixture => {
                let loc = self.locations.as_ref().unwrap()[j].expand(dim, "location")?;
                let scale = self.scales.as_ref().unwrap()[j].expand(dim, "scale")?;
                let corr = match self.corr_sigma {
                    Some(s) => correlation_matrix(dim, s)?,
                    None => DMatrix::identity(dim, dim),
                };
                let (delta, resid_cov) = if self.scenario == Scenario::GaussianMixture {
                    (DVector::zeros(dim), corr)
                } else {
                    let alpha =
                        DVector::from_vec(self.skewness.as_ref().unwrap()[j].expand(dim, "skewness")?);
                    let oa = &corr * &alpha;
                    let delta = &oa / (1.0 + alpha.dot(&oa)).sqrt();
                    let resid = &corr - &delta * delta.transpose();
                    (delta, resid)
                };
                let chol = resid_cov
                    .cholesky()
                    .ok_or(Error::NotPositiveDefinite)?
                    .unpack();
                Ok(ComponentSampler::SkewNormalNd {
                    loc: DVector::from_vec(loc),
                    scale: DVector::from_vec(scale),
                    delta,
                    chol,
                })
            }
        }
    }
}

/// `Sigma_ij = exp(-(i-j)^2 / sigma^2)`, verified positive definite.
pub fn correlation_matrix(dim: usize, sigma: f64) -> Result<DMatrix<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("correlation length must be positive"));
    }
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        let d = i as f64 - j as f64;
        (-(d * d) / (sigma * sigma)).exp()
    });
    check_spd(&m)?;
    Ok(m)
}

enum ComponentSampler {
    SkewNormal1d {
        loc: f64,
        scale: f64,
        delta: f64,
        resid: f64,
    },
    SkewNormalNd {
        loc: DVector<f64>,
        scale: DVector<f64>,
        delta: DVector<f64>,
        chol: DMatrix<f64>,
    },
    NegBin {
        gamma: Gamma<f64>,
    },
}

impl ComponentSampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            ComponentSampler::SkewNormal1d {
                loc,
                scale,
                delta,
                resid,
            } => {
                let u0: f64 = rng.sample(StandardNormal);
                let u1: f64 = rng.sample(StandardNormal);
                out.push(loc + scale * (delta * u0.abs() + resid * u1));
            }
            ComponentSampler::SkewNormalNd {
                loc,
                scale,
                delta,
                chol,
            } => {
                let u0: f64 = rng.sample::<f64, _>(StandardNormal).abs();
                let w = DVector::from_fn(loc.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                let z = delta * u0 + chol * w;
                out.extend(loc.iter().zip(scale.iter()).zip(z.iter()).map(|((l, s), z)| l + s * z));
            }
            ComponentSampler::NegBin { gamma } => {
                let lambda = gamma.sample(rng).max(f64::MIN_POSITIVE);
                let x: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
                out.push(x);
            }
        }
    }
}

pub fn sample_generator(spec: &GeneratorSpec) -> Result<(Dataset, Assignments)> {
    spec.sample()
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::erf::erfc;

    fn normal_cdf(z: f64) -> f64 {
        0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }

    fn mean_var(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
    }

    fn single(scenario: Scenario, gamma: f64, n: usize, seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            scenario,
            weights: vec![1.0],
            locations: Some(scalars(&[1.5])),
            scales: Some(scalars(&[2.0])),
            skewness: Some(scalars(&[gamma])),
            negbin_m: None,
            negbin_p: None,
            corr_sigma: None,
            dim: None,
            n,
            seed,
        }
    }

    #[test]
    fn zero_skew_is_gaussian_by_ks() {
        let (d, _) = single(Scenario::SkewNormalMixture, 0.0, 10_000, 5).sample().unwrap();
        let mut x = d.values().to_vec();
        x.sort_by(f64::total_cmp);
        let n = x.len() as f64;
        let ks = x
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let f = normal_cdf((v - 1.5) / 2.0);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        // 5% critical value 1.358 / sqrt(n).
        assert!(ks < 1.358 / n.sqrt(), "ks = {ks}");
    }

    #[test]
    fn skew_normal_moments() {
        let gamma = -10.0_f64;
        let (d, _) = single(Scenario::SkewNormalMixture, gamma, 200_000, 8).sample().unwrap();
        let delta = gamma / (1.0 + gamma * gamma).sqrt();
        let b = (2.0 / std::f64::consts::PI).sqrt();
        let (m, v) = mean_var(d.values());
        assert!((m - (1.5 + 2.0 * delta * b)).abs() < 0.01);
        assert!((v - 4.0 * (1.0 - b * b * delta * delta)).abs() < 0.02);
    }

    #[test]
    fn negbin_moments_and_alias() {
        let spec = GeneratorSpec::alias("negbin3").unwrap();
        assert_eq!(spec.n, 20_000);
        assert_eq!(spec.negbin_m.as_deref(), Some(&[55.0, 75.0, 100.0][..]));
        assert_eq!(spec.negbin_p.as_deref(), Some(&[0.5, 0.3, 0.5][..]));
        assert_eq!(spec.weights, vec![0.3, 0.3, 0.4]);

        let one = GeneratorSpec {
            weights: vec![1.0],
            negbin_m: Some(vec![75.0]),
            negbin_p: Some(vec![0.3]),
            n: 100_000,
            seed: 2,
            ..spec
        };
        let (d, _) = one.sample().unwrap();
        assert!(d.values().iter().all(|v| v.fract() == 0.0 && *v >= 0.0));
        let (m, v) = mean_var(d.values());
        // mean m(1-p)/p = 175, variance m(1-p)/p^2 = 583.3
        assert!((m - 175.0).abs() < 0.5, "{m}");
        assert!((v / 583.333 - 1.0).abs() < 0.03, "{v}");
    }

    #[test]
    fn high_dimensional_alias() {
        let spec = GeneratorSpec::alias("mvskewnorm-d50").unwrap();
        assert_eq!(spec.dim(), 50);
        assert_eq!(spec.corr_sigma, Some(0.6));
        let s = correlation_matrix(50, 0.6).unwrap();
        assert!((s[(0, 1)] - (-1.0_f64 / 0.36).exp()).abs() < 1e-15);
        assert!(s.clone().cholesky().is_some());
        let (d, z) = spec.with_n(300).with_seed(1).sample().unwrap();
        assert_eq!(d.dim(), 50);
        assert_eq!(z.len(), 300);
    }

    #[test]
    fn multivariate_skew_normal_mean() {
        let dim = 3;
        let spec = GeneratorSpec {
            scenario: Scenario::MultivariateSkewNormalMixture,
            weights: vec![1.0],
            locations: Some(vec![ScalarOrVec::Vector(vec![0.0, 1.0, 2.0])]),
            scales: Some(scalars(&[1.0])),
            skewness: Some(vec![ScalarOrVec::Vector(vec![4.0, 0.0, -2.0])]),
            negbin_m: None,
            negbin_p: None,
            corr_sigma: Some(0.6),
            dim: Some(dim),
            n: 200_000,
            seed: 4,
        };
        let (d, _) = spec.sample().unwrap();
        let corr = correlation_matrix(dim, 0.6).unwrap();
        let alpha = DVector::from_vec(vec![4.0, 0.0, -2.0]);
        let oa = &corr * &alpha;
        let delta = &oa / (1.0 + alpha.dot(&oa)).sqrt();
        let b = (2.0 / std::f64::consts::PI).sqrt();
        for j in 0..dim {
            let (m, v) = mean_var(&d.column(j));
            assert!((m - (j as f64 + b * delta[j])).abs() < 0.01, "coord {j}: {m}");
            assert!((v - (1.0 - b * b * delta[j] * delta[j])).abs() < 0.02);
        }
    }

    #[test]
    fn aliases_match_scenario_table() {
        let same = GeneratorSpec::alias("skewnorm-same").unwrap();
        assert_eq!(same.weights, vec![0.5, 0.5]);
        assert_eq!(same.skewness, Some(scalars(&[-10.0, -10.0])));
        let ls = GeneratorSpec::alias("skewnorm-large-small").unwrap();
        assert_eq!(ls.weights, vec![0.95, 0.05]);
        assert_eq!(ls.skewness, Some(scalars(&[-10.0, -1.0])));
        for name in SCENARIO_ALIASES {
            GeneratorSpec::alias(name).unwrap().validate().unwrap();
        }
        assert!(GeneratorSpec::alias("nope").is_none());
    }

    #[test]
    fn json_field_names() {
        let spec = GeneratorSpec::alias("negbin3").unwrap();
        let v: serde_json::Value = serde_json::to_value(&spec).unwrap();
        for key in ["scenario", "weights", "negbin_m", "negbin_p", "n", "seed"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["scenario"], "negbin-mixture");
        let back: GeneratorSpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut s = GeneratorSpec::alias("negbin3").unwrap();
        s.negbin_p = Some(vec![0.5, 1.0, 0.5]);
        assert!(s.sample().is_err());
        let mut s = GeneratorSpec::alias("skewnorm-same").unwrap();
        s.scales = Some(scalars(&[1.0, -1.0]));
        assert!(s.validate().is_err());
        let mut s = GeneratorSpec::alias("skewnorm-same").unwrap();
        s.weights = vec![0.5, 0.6];
        assert!(s.validate().is_err());
        assert!(correlation_matrix(4, 0.0).is_err());
    }
}

//! One-sample Kullback-Leibler estimators of `KL(P || Q)` from draws of `P`
//! and a known model `Q`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::knn::{knn_radii, DEFAULT_MIN_RADIUS};
use super::special::{ceil_sqrt, digamma, log_ball_volume};
use super::{DivergenceEstimate, EstimatorTag};
use crate::error::{Error, Result};
use crate::model::family::check_spd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborCount {
    Fixed(usize),
    /// `k = ceil(sqrt(n))`, used without a bias correction.
    AdaptiveSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Correction {
    Biased,
    BiasCorrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: NeighborCount,
    pub correction: Correction,
    pub min_radius: f64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self::adaptive()
    }
}

impl KnnConfig {
    pub fn adaptive() -> Self {
        Self {
            k: NeighborCount::AdaptiveSqrt,
            correction: Correction::Biased,
            min_radius: DEFAULT_MIN_RADIUS,
        }
    }

    pub fn fixed(k: usize, correction: Correction) -> Self {
        Self {
            k: NeighborCount::Fixed(k),
            correction,
            min_radius: DEFAULT_MIN_RADIUS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let NeighborCount::Fixed(0) = self.k {
            return Err(Error::invalid("fixed k must be at least 1"));
        }
        if !(self.min_radius > 0.0) {
            return Err(Error::invalid("min_radius must be positive"));
        }
        Ok(())
    }

    /// Neighbour count used for a sample of size `n`.
    pub fn k_for(&self, n: usize) -> usize {
        match self.k {
            NeighborCount::Fixed(k) => k,
            NeighborCount::AdaptiveSqrt => ceil_sqrt(n).max(1),
        }
    }

    /// Smallest sample size the estimator accepts.
    pub fn min_samples(&self) -> usize {
        match self.k {
            NeighborCount::Fixed(k) => k + 1,
            NeighborCount::AdaptiveSqrt => 3,
        }
    }

    fn tag(&self, k: usize) -> EstimatorTag {
        match (self.k, self.correction) {
            (NeighborCount::AdaptiveSqrt, _) => EstimatorTag::KnnAdaptive { k },
            (NeighborCount::Fixed(_), Correction::Biased) => EstimatorTag::KnnBiased { k },
            (NeighborCount::Fixed(_), Correction::BiasCorrected) => EstimatorTag::KnnCorrected { k },
        }
    }
}

/// Plug-in estimator over the observed support:
/// `sum_x (N(x)/N) log(N(x) / (N q(x)))`, with `log_q` the model log-pmf.
pub fn kl_plugin_discrete(samples: &[f64], log_q: impl Fn(f64) -> f64) -> Result<DivergenceEstimate> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut counts: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for &x in samples {
        // +0.0 folds -0.0 onto 0.0
        let x = x + 0.0;
        counts.entry(x.to_bits()).or_insert((x, 0)).1 += 1;
    }
    let n = samples.len() as f64;
    let mut value = 0.0;
    for (x, c) in counts.values() {
        let lq = log_q(*x);
        if lq == f64::NEG_INFINITY {
            return Err(Error::ZeroModelMass(*x));
        }
        if !lq.is_finite() {
            return Err(Error::NonFiniteModelDensity);
        }
        let p = *c as f64 / n;
        value += p * (p.ln() - lq);
    }
    Ok(DivergenceEstimate {
        value,
        n_used: samples.len(),
        estimator: EstimatorTag::Plugin,
        component_index: 0,
    })
}

/// k-NN estimator `(1/n) sum_i log{ (k/(n-1)) / (V_D(r_i) q(y_i)) }`, with the
/// optional `psi(k) - log k` bias correction.
pub fn kl_knn(
    samples: &[f64],
    dim: usize,
    log_q: impl Fn(&[f64]) -> f64,
    config: &KnnConfig,
) -> Result<DivergenceEstimate> {
    if dim == 0 || samples.len() % dim != 0 {
        return Err(Error::invalid("samples do not form rows of the given dimension"));
    }
    let log_q: Vec<f64> = samples.chunks(dim).map(log_q).collect();
    kl_knn_with_log_q(samples, dim, &log_q, config)
}

/// As [`kl_knn`] with the model log-density already evaluated at each sample.
pub fn kl_knn_with_log_q(
    samples: &[f64],
    dim: usize,
    log_q: &[f64],
    config: &KnnConfig,
) -> Result<DivergenceEstimate> {
    config.validate()?;
    let n = samples.len() / dim;
    if log_q.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: log_q.len(),
        });
    }
    let k = config.k_for(n);
    if n < k + 1 {
        return Err(Error::InsufficientSamples {
            needed: k + 1,
            got: n,
        });
    }
    if log_q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteModelDensity);
    }
    let radii = knn_radii(samples, dim, k, config.min_radius)?;
    let log_mass = (k as f64 / (n - 1) as f64).ln();
    let sum: f64 = radii
        .iter()
        .zip(log_q)
        .map(|(&r, lq)| log_mass - log_ball_volume(dim, r) - lq)
        .sum();
    let mut value = sum / n as f64;
    if config.k != NeighborCount::AdaptiveSqrt && config.correction == Correction::BiasCorrected {
        value += bias_correction(k)?;
    }
    Ok(DivergenceEstimate {
        value,
        n_used: n,
        estimator: config.tag(k),
        component_index: 0,
    })
}

/// `psi(k) - log k`, the asymptotic bias of the fixed-k estimator with the sign
/// flipped.
pub fn bias_correction(k: usize) -> Result<f64> {
    Ok(digamma(k)? - (k as f64).ln())
}

/// Sum over coordinates of one-dimensional k-NN estimates against the model
/// marginals; `marginal_log_q(d, x)` is the log-density of coordinate `d`.
pub fn kl_knn_independent(
    samples: &[f64],
    dim: usize,
    marginal_log_q: impl Fn(usize, f64) -> f64 + Sync,
    config: &KnnConfig,
) -> Result<DivergenceEstimate> {
    if dim == 0 || samples.len() % dim != 0 {
        return Err(Error::invalid("samples do not form rows of the given dimension"));
    }
    let n = samples.len() / dim;
    let per_coord = |d: usize| -> Result<DivergenceEstimate> {
        let col: Vec<f64> = samples.chunks(dim).map(|r| r[d]).collect();
        let lq: Vec<f64> = col.iter().map(|&x| marginal_log_q(d, x)).collect();
        kl_knn_with_log_q(&col, 1, &lq, config)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Result<DivergenceEstimate>> = {
        use rayon::prelude::*;
        (0..dim).into_par_iter().map(per_coord).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<DivergenceEstimate>> = (0..dim).map(per_coord).collect();
    // summed in coordinate order
    let mut value = 0.0;
    for p in parts {
        value += p?.value;
    }
    Ok(DivergenceEstimate {
        value,
        n_used: n,
        estimator: EstimatorTag::KnnIndependent {
            k: config.k_for(n),
        },
        component_index: 0,
    })
}

/// `KL(N(mu1, S1) || N(mu2, S2))` in closed form.
pub fn kl_gaussian_closed_form(
    p_mean: &[f64],
    p_cov: &DMatrix<f64>,
    q_mean: &[f64],
    q_cov: &DMatrix<f64>,
) -> Result<f64> {
    let d = p_mean.len();
    for (got, what) in [
        (q_mean.len(), "q mean"),
        (p_cov.nrows(), "p cov"),
        (q_cov.nrows(), "q cov"),
    ] {
        if got != d {
            return Err(Error::invalid(format!("{what} has dimension {got}, expected {d}")));
        }
    }
    check_spd(p_cov)?;
    check_spd(q_cov)?;
    let lp = p_cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let lq = q_cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let logdet = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
        2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    };
    let trace = lq.solve(p_cov).trace();
    let diff = DVector::from_column_slice(q_mean) - DVector::from_column_slice(p_mean);
    let maha = diff.dot(&lq.solve(&diff));
    Ok(0.5 * (logdet(&lq) - logdet(&lp) - d as f64 + trace + maha))
}

//! Maximum mean discrepancy with a gaussian RBF kernel, reduced to a
//! two-sample problem by drawing from the fitted component.

use serde::{Deserialize, Serialize};

use super::{DivergenceEstimate, EstimatorTag};
use crate::error::{Error, Result};
use crate::model::PreparedComponent;
use crate::rng;

/// Points used by the median heuristic are a strided subsample of this size.
const MEDIAN_SUBSAMPLE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance over the pooled sample.
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
    /// Draws from the model; `None` uses the data sample size.
    pub model_sample_size: Option<usize>,
    pub seed: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Median,
            model_sample_size: None,
            seed: 0,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid("kernel bandwidth must be positive"));
            }
        }
        if matches!(self.model_sample_size, Some(m) if m < 2) {
            return Err(Error::invalid("model_sample_size must be at least 2"));
        }
        Ok(())
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `sum_i sum_j a_i b_j k(x_i, y_j)`.
fn kernel_sum(x: &[f64], a: &[f64], y: &[f64], b: &[f64], dim: usize, gamma: f64) -> f64 {
    let row = |(xi, ai): (&[f64], &f64)| -> f64 {
        let s: f64 = y
            .chunks(dim)
            .zip(b)
            .map(|(yj, bj)| bj * (-gamma * dist2(xi, yj)).exp())
            .sum();
        ai * s
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let rows: Vec<f64> = x.par_chunks(dim).zip(a.par_iter()).map(row).collect();
        rows.iter().sum()
    }
    #[cfg(not(feature = "parallel"))]
    {
        x.chunks(dim).zip(a).map(row).sum()
    }
}

fn check_weights(points: &[f64], weights: &[f64], dim: usize) -> Result<()> {
    if dim == 0 || points.len() != weights.len() * dim {
        return Err(Error::DimensionMismatch {
            expected: weights.len() * dim,
            got: points.len(),
        });
    }
    if weights.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("point weights must be nonnegative and sum to one"));
    }
    Ok(())
}

/// MMD between two weighted point sets (weights summing to one on each
/// side) under `k(x, y) = exp(-|x - y|^2 / (2 h^2))`.
pub fn mmd_weighted(
    x: &[f64],
    wx: &[f64],
    y: &[f64],
    wy: &[f64],
    dim: usize,
    bandwidth: f64,
) -> Result<f64> {
    check_weights(x, wx, dim)?;
    check_weights(y, wy, dim)?;
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid("kernel bandwidth must be positive"));
    }
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    let sq = kernel_sum(x, wx, x, wx, dim, gamma) + kernel_sum(y, wy, y, wy, dim, gamma)
        - 2.0 * kernel_sum(x, wx, y, wy, dim, gamma);
    Ok(sq.max(0.0).sqrt())
}

/// Biased V-statistic MMD between two equally weighted point sets.
pub fn mmd_v_statistic(x: &[f64], y: &[f64], dim: usize, bandwidth: f64) -> Result<f64> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    let uniform = |len: usize| vec![1.0 / len as f64; len];
    let (nx, ny) = (x.len() / dim, y.len() / dim);
    if nx == 0 || ny == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    mmd_weighted(x, &uniform(nx), y, &uniform(ny), dim, bandwidth)
}

/// Median pairwise Euclidean distance over a strided subsample of the pooled
/// points. Falls back to 1 when every sampled pair coincides.
pub fn median_bandwidth(x: &[f64], y: &[f64], dim: usize) -> f64 {
    let pooled: Vec<&[f64]> = x.chunks(dim).chain(y.chunks(dim)).collect();
    let step = pooled.len().div_ceil(MEDIAN_SUBSAMPLE).max(1);
    let sub: Vec<&[f64]> = pooled.into_iter().step_by(step).collect();
    let mut d: Vec<f64> = Vec::with_capacity(sub.len() * sub.len().saturating_sub(1) / 2);
    for i in 0..sub.len() {
        for j in i + 1..sub.len() {
            d.push(dist2(sub[i], sub[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let mut med = *m;
    if d.len() % 2 == 0 {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        med = 0.5 * (med + lower);
    }
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// MMD between the sample and a seeded draw from `model`.
pub fn mmd_estimate(
    samples: &[f64],
    dim: usize,
    model: &PreparedComponent,
    config: &KernelConfig,
) -> Result<DivergenceEstimate> {
    config.validate()?;
    if dim == 0 || samples.len() % dim != 0 || model.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: dim,
        });
    }
    let n = samples.len() / dim;
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let m = config.model_sample_size.unwrap_or(n);
    let mut r = rng::stream(config.seed, &[rng::tag::MODEL_SAMPLE]);
    let model_sample: Vec<f64> = (0..m).flat_map(|_| model.sample(&mut r)).collect();
    let h = match config.bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Median => median_bandwidth(samples, &model_sample, dim),
    };
    let value = mmd_v_statistic(samples, &model_sample, dim, h)?;
    Ok(DivergenceEstimate {
        value,
        n_used: n,
        estimator: EstimatorTag::Mmd { bandwidth: h },
        component_index: 0,
    })
}

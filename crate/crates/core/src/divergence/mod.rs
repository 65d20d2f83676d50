//! One-sample divergence estimators between an assigned data subset and a
//! fitted component.

pub mod kl;
pub mod knn;
pub mod mmd;
pub mod special;

use serde::{Deserialize, Serialize};

pub use kl::{
    bias_correction, kl_gaussian_closed_form, kl_knn, kl_knn_independent, kl_knn_with_log_q,
    kl_plugin_discrete, Correction, KnnConfig, NeighborCount,
};
pub use knn::{knn_radii, knn_radii_with, KdTree, SearchStrategy, DEFAULT_MIN_RADIUS};
pub use mmd::{median_bandwidth, mmd_estimate, mmd_v_statistic, mmd_weighted, Bandwidth, KernelConfig};
pub use special::{digamma, log_ball_volume};

/// Which estimator produced a value, with the neighbour count or bandwidth
/// actually used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum EstimatorTag {
    Plugin,
    KnnAdaptive { k: usize },
    KnnBiased { k: usize },
    KnnCorrected { k: usize },
    KnnIndependent { k: usize },
    Mmd { bandwidth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEstimate {
    /// May be negative for the k-NN estimators.
    pub value: f64,
    pub n_used: usize,
    pub estimator: EstimatorTag,
    pub component_index: usize,
}

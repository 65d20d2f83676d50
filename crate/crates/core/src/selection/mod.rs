//! The structurally aware loss, exact sweeps over `rho`, and selection of `K`.

pub mod loss;
pub mod profile;
pub mod select;
pub mod stable;

pub use loss::{loss_curve, penalized_loss, structurally_aware_loss, LossCurve, Segment};
pub use profile::{
    component_divergences, ComponentDivergence, ComponentDivergenceProfile, DivergenceStatus, Estimator,
    EstimatorConfig,
};
pub use select::{
    select_k, Candidate, CandidateFailure, CandidateReport, CandidateSet, Provenance, SelectConfig,
    SelectionResult, Sweep, SweepOptions, DEFAULT_K_MAX, DEFAULT_LAMBDA,
};
pub use stable::{
    default_rho_max, minimizing_regions, stable_region_select, stable_region_select_with, Region, StabilityRule,
    StableRegion, DEFAULT_RHO_MAX_FACTOR,
    DEFAULT_WIDTH_FRACTION,
};

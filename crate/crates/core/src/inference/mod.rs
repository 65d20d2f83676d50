//! Maximum-likelihood fitting, posterior assignments and the BIC baseline.

pub mod assign;
pub mod em;

pub use assign::{assignments_from, responsibilities, sample_assignments, AssignMode, Responsibilities};
pub use em::{fit_em, EmConfig, FittedModel, Init, DEGENERATE_WEIGHT};

/// Free parameters of a `k`-component mixture: `k - 1` weights plus the
/// component parameters.
pub fn param_count(family: crate::model::ComponentFamily, k: usize) -> usize {
    k - 1 + k * family.component_param_count()
}

/// `p log n - 2 ll`; lower is better.
pub fn bic(model: &FittedModel, n: usize) -> f64 {
    param_count(model.params.family, model.k) as f64 * (n as f64).ln() - 2.0 * model.log_likelihood
}

//! Component families, mixtures, datasets and scenario generators.

pub mod dataset;
pub mod family;
pub mod generator;
pub mod mixture;

pub use dataset::{Assignments, Dataset, UNKNOWN_LABEL};
pub use family::{component_log_density, ComponentFamily, ComponentParams, PreparedComponent};
pub use generator::{sample_generator, correlation_matrix, GeneratorSpec, Scenario, ScalarOrVec, SCENARIO_ALIASES};
pub use mixture::{log_sum_exp, mixture_log_density, sample_mixture, MixtureParams, PreparedMixture};

//! Structurally aware robust model selection for finite mixtures.
//!
//! For each candidate number of components `K` a mixture is fitted by EM, the
//! observations are assigned to components, and each component's assigned
//! data is compared with its fitted distribution through a divergence
//! estimate `d_k`. The penalized loss
//!
//! ```text
//! R(K; rho, lambda) = sum_k n_k * max(0, d_k - rho) + lambda * K
//! ```
//!
//! tolerates per-component misspecification up to `rho` and prefers the
//! smallest adequate `K`. Because the loss is piecewise linear in `rho`, whole
//! sweeps over `rho` are exact.

pub mod divergence;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod model;
pub mod rng;
pub mod selection;
mod serde_ext;

pub use error::{Error, ErrorKind, Result};

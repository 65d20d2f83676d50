//! Component families and their log densities.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ComponentFamily {
    Gaussian1d,
    GaussianMultivariate { dim: usize },
    Poisson,
}

impl ComponentFamily {
    /// Dimension of one observation.
    pub fn dim(&self) -> usize {
        match self {
            ComponentFamily::Gaussian1d | ComponentFamily::Poisson => 1,
            ComponentFamily::GaussianMultivariate { dim } => *dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ComponentFamily::Gaussian1d => "gaussian-1d",
            ComponentFamily::GaussianMultivariate { .. } => "gaussian-multivariate",
            ComponentFamily::Poisson => "poisson",
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ComponentFamily::Poisson)
    }

    /// Free parameters of one component.
    pub fn component_param_count(&self) -> usize {
        match self {
            ComponentFamily::Gaussian1d => 2,
            ComponentFamily::GaussianMultivariate { dim } => dim + dim * (dim + 1) / 2,
            ComponentFamily::Poisson => 1,
        }
    }
}

/// Parameters of a single mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ComponentParams {
    Gaussian1d {
        mean: f64,
        sd: f64,
    },
    GaussianMultivariate {
        mean: Vec<f64>,
        #[serde(serialize_with = "ser_matrix", deserialize_with = "de_matrix")]
        cov: DMatrix<f64>,
    },
    Poisson {
        rate: f64,
    },
}

fn ser_matrix<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

fn de_matrix<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
    let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(serde::de::Error::custom("covariance must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl ComponentParams {
    pub fn family(&self) -> ComponentFamily {
        match self {
            ComponentParams::Gaussian1d { .. } => ComponentFamily::Gaussian1d,
            ComponentParams::GaussianMultivariate { mean, .. } => {
                ComponentFamily::GaussianMultivariate { dim: mean.len() }
            }
            ComponentParams::Poisson { .. } => ComponentFamily::Poisson,
        }
    }

    /// Mean vector of the component.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            ComponentParams::Gaussian1d { mean, .. } => vec![*mean],
            ComponentParams::GaussianMultivariate { mean, .. } => mean.clone(),
            ComponentParams::Poisson { rate } => vec![*rate],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ComponentParams::Gaussian1d { mean, sd } => {
                if !mean.is_finite() || !sd.is_finite() || *sd <= 0.0 {
                    return Err(Error::invalid(format!(
                        "gaussian-1d needs finite mean and sd > 0, got ({mean}, {sd})"
                    )));
                }
            }
            ComponentParams::GaussianMultivariate { mean, cov } => {
                if mean.is_empty() {
                    return Err(Error::invalid("gaussian-multivariate needs dim >= 1"));
                }
                if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
                    return Err(Error::DimensionMismatch {
                        expected: mean.len(),
                        got: cov.nrows(),
                    });
                }
                if mean.iter().any(|m| !m.is_finite()) {
                    return Err(Error::invalid("gaussian-multivariate mean must be finite"));
                }
                check_spd(cov)?;
            }
            ComponentParams::Poisson { rate } => {
                if !rate.is_finite() || *rate <= 0.0 {
                    return Err(Error::invalid(format!("poisson needs rate > 0, got {rate}")));
                }
            }
        }
        Ok(())
    }

    /// Validate and precompute the normalising constants and factorizations.
    pub fn prepare(&self) -> Result<PreparedComponent> {
        self.validate()?;
        Ok(match self {
            ComponentParams::Gaussian1d { mean, sd } => PreparedComponent::Gaussian1d {
                mean: *mean,
                inv_sd: 1.0 / sd,
                log_norm: -0.5 * LN_2PI - sd.ln(),
            },
            ComponentParams::GaussianMultivariate { mean, cov } => {
                let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
                let l = chol.unpack();
                let log_det: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
                let dim = mean.len() as f64;
                PreparedComponent::GaussianMultivariate {
                    mean: DVector::from_column_slice(mean),
                    chol_l: l,
                    log_norm: -0.5 * (dim * LN_2PI + log_det),
                }
            }
            ComponentParams::Poisson { rate } => PreparedComponent::Poisson {
                rate: *rate,
                log_rate: rate.ln(),
            },
        })
    }
}

/// Symmetric positive-definiteness check, rejecting rather than repairing.
pub fn check_spd(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::NotPositiveDefinite);
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if (a - b).abs() > 1e-10 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) || m.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(())
}

/// A component ready for repeated density evaluation.
#[derive(Debug, Clone)]
pub enum PreparedComponent {
    Gaussian1d {
        mean: f64,
        inv_sd: f64,
        log_norm: f64,
    },
    GaussianMultivariate {
        mean: DVector<f64>,
        chol_l: DMatrix<f64>,
        log_norm: f64,
    },
    Poisson {
        rate: f64,
        log_rate: f64,
    },
}

impl PreparedComponent {
    pub fn dim(&self) -> usize {
        match self {
            PreparedComponent::GaussianMultivariate { mean, .. } => mean.len(),
            _ => 1,
        }
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        match self {
            PreparedComponent::Gaussian1d {
                mean,
                inv_sd,
                log_norm,
            } => {
                let z = (x[0] - mean) * inv_sd;
                Ok(log_norm - 0.5 * z * z)
            }
            PreparedComponent::GaussianMultivariate {
                mean,
                chol_l,
                log_norm,
            } => {
                let mut diff = DVector::from_column_slice(x) - mean;
                chol_l.solve_lower_triangular_mut(&mut diff);
                Ok(log_norm - 0.5 * diff.norm_squared())
            }
            PreparedComponent::Poisson { rate, log_rate } => {
                poisson_log_pmf(x[0], *rate, *log_rate)
            }
        }
    }

    /// Log density at every row of a row-major `n x dim` matrix.
    pub fn log_density_rows(&self, values: &[f64]) -> Result<Vec<f64>> {
        let dim = self.dim();
        if values.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: values.len() % dim,
            });
        }
        match self {
            PreparedComponent::GaussianMultivariate {
                mean,
                chol_l,
                log_norm,
            } => {
                let n = values.len() / dim;
                let mut diff = DMatrix::from_column_slice(dim, n, values);
                for mut col in diff.column_iter_mut() {
                    col -= mean;
                }
                chol_l.solve_lower_triangular_mut(&mut diff);
                Ok(diff
                    .column_iter()
                    .map(|c| log_norm - 0.5 * c.norm_squared())
                    .collect())
            }
            _ => values.chunks(dim).map(|x| self.log_density(x)).collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            PreparedComponent::Gaussian1d { mean, inv_sd, .. } => {
                let z: f64 = rng.sample(StandardNormal);
                vec![mean + z / inv_sd]
            }
            PreparedComponent::GaussianMultivariate { mean, chol_l, .. } => {
                let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                (mean + chol_l * z).iter().copied().collect()
            }
            PreparedComponent::Poisson { rate, .. } => {
                let p = Poisson::new(*rate).expect("validated rate");
                vec![p.sample(rng)]
            }
        }
    }
}

fn poisson_log_pmf(x: f64, rate: f64, log_rate: f64) -> Result<f64> {
    if !x.is_finite() || x.fract() != 0.0 {
        return Err(Error::NonIntegerCount(x));
    }
    if x < 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(x * log_rate - rate - ln_gamma(x + 1.0))
}

/// `log f(x)` for a single component.
pub fn component_log_density(params: &ComponentParams, x: &[f64]) -> Result<f64> {
    params.prepare()?.log_density(x)
}
